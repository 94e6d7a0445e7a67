#pragma once

// Synthetic research-agent sessions and JSON-lines transcripts.
//
// A session is one System message, one Human question, then `tool_calls`
// turns of (AI reasoning + tool call, tool result), then a final AI answer.
// Every AI message is the output of one API request whose prompt is all
// messages before it, so a session with n tool calls issues n + 1 requests.
//
// Transcript line schema (UTF-8, one JSON object per line):
//   session_id    string
//   role          "system" | "human" | "ai" | "tool_call" | "tool_result"
//   tokens        array of token ids        (or)
//   token_count   positive integer; ids are then synthesized from
//                 (session_id, line number)
//   timestamp_s   number, non-decreasing within a session
//   question_seed optional unsigned integer, written on the first human line

#include <pcsim/error.hpp>
#include <pcsim/json_util.hpp>
#include <pcsim/seed.hpp>
#include <pcsim/token.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace pcsim {

struct WorkloadSpec {
    std::int64_t system_prompt_tokens = 10'000;
    std::int64_t question_tokens = 200;
    std::int64_t tool_calls = 10;
    std::int64_t tool_call_tokens = 50;
    std::int64_t tool_result_tokens = 1'500;
    std::int64_t reasoning_tokens_per_turn = 150;
    std::int64_t final_answer_tokens = 500;
    double inter_call_gap_seconds = 5.0;
    std::int64_t sessions = 40;
    std::uint64_t seed = 0;

    friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

inline void validate(const WorkloadSpec& s) {
    auto positive = [](std::int64_t v, const char* field) {
        if (v < 1) throw ValidationError(std::string("workload.") + field + ": must be >= 1");
    };
    positive(s.system_prompt_tokens, "system_prompt_tokens");
    positive(s.question_tokens, "question_tokens");
    positive(s.tool_call_tokens, "tool_call_tokens");
    positive(s.tool_result_tokens, "tool_result_tokens");
    if (s.reasoning_tokens_per_turn < 0) throw ValidationError("workload.reasoning_tokens_per_turn: must be >= 0");
    positive(s.final_answer_tokens, "final_answer_tokens");
    positive(s.sessions, "sessions");
    if (s.tool_calls < 0) throw ValidationError("workload.tool_calls: must be >= 0");
    if (!(s.inter_call_gap_seconds >= 0.0))
        throw ValidationError("workload.inter_call_gap_seconds: must be >= 0");
}

struct RequestSpan {
    std::size_t prompt_messages = 0; // request prompt = messages[0, prompt_messages)
    std::int64_t output_tokens = 0;
    double offset_s = 0.0; // relative to the session's first message
};

struct SessionTranscript {
    std::string session_id;
    std::uint64_t question_seed = 0;
    std::vector<Message> messages;
    std::vector<double> timestamps_s; // one per message

    // One request per run of consecutive model-output messages.
    std::vector<RequestSpan> requests() const {
        std::vector<RequestSpan> out;
        for (std::size_t i = 0; i < messages.size(); ++i) {
            if (!is_model_output(messages[i].role)) continue;
            if (i > 0 && is_model_output(messages[i - 1].role)) {
                out.back().output_tokens += static_cast<std::int64_t>(messages[i].tokens.size());
                continue;
            }
            if (i == 0) continue;
            out.push_back({i, static_cast<std::int64_t>(messages[i].tokens.size()),
                           timestamps_s[i] - timestamps_s.front()});
        }
        return out;
    }

    std::vector<Message> request_messages(const RequestSpan& r) const {
        return {messages.begin(), messages.begin() + static_cast<std::ptrdiff_t>(r.prompt_messages)};
    }

    friend bool operator==(const SessionTranscript&, const SessionTranscript&) = default;
};

inline std::string session_label(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", index);
    return buf;
}

inline std::vector<SessionTranscript> generate(const WorkloadSpec& spec) {
    validate(spec);
    const auto sys = synth_tokens(static_cast<std::size_t>(spec.system_prompt_tokens),
                                  derive_seed(spec.seed, "system"));
    const auto ai_len = static_cast<std::size_t>(spec.reasoning_tokens_per_turn + spec.tool_call_tokens);
    const auto tool_len = static_cast<std::size_t>(spec.tool_result_tokens);
    const double gap = spec.inter_call_gap_seconds;

    std::vector<SessionTranscript> out;
    out.reserve(static_cast<std::size_t>(spec.sessions));
    for (std::int64_t s = 0; s < spec.sessions; ++s) {
        SessionTranscript t;
        t.session_id = session_label(static_cast<std::size_t>(s));
        t.question_seed = derive_seed(spec.seed, "question:" + t.session_id);
        auto add = [&](Role role, TokenSeq tokens, std::size_t turn, double ts) {
            t.messages.push_back({role, std::move(tokens), turn});
            t.timestamps_s.push_back(ts);
        };
        add(Role::System, sys, 0, 0.0);
        add(Role::Human, synth_tokens(static_cast<std::size_t>(spec.question_tokens), t.question_seed), 0, 0.0);
        for (std::int64_t turn = 1; turn <= spec.tool_calls; ++turn) {
            const std::string key = t.session_id + ":" + std::to_string(turn);
            const double ts = static_cast<double>(turn - 1) * gap;
            const auto tn = static_cast<std::size_t>(turn);
            add(Role::AI, synth_tokens(ai_len, derive_seed(spec.seed, "ai:" + key)), tn, ts);
            add(Role::ToolResult, synth_tokens(tool_len, derive_seed(spec.seed, "tool:" + key)), tn, ts);
        }
        add(Role::AI,
            synth_tokens(static_cast<std::size_t>(spec.final_answer_tokens),
                         derive_seed(spec.seed, "final:" + t.session_id)),
            static_cast<std::size_t>(spec.tool_calls + 1), static_cast<double>(spec.tool_calls) * gap);
        out.push_back(std::move(t));
    }
    return out;
}

inline void export_transcripts(const std::vector<SessionTranscript>& sessions, std::ostream& os) {
    for (const auto& t : sessions) {
        bool seed_written = false;
        for (std::size_t i = 0; i < t.messages.size(); ++i) {
            const Message& m = t.messages[i];
            nlohmann::json ids = nlohmann::json::array();
            for (Token tok : m.tokens) ids.push_back(tok.id);
            nlohmann::json j = {{"session_id", t.session_id},
                                {"role", std::string(role_name(m.role))},
                                {"tokens", std::move(ids)},
                                {"timestamp_s", t.timestamps_s[i]}};
            if (m.role == Role::Human && !seed_written) {
                j["question_seed"] = t.question_seed;
                seed_written = true;
            }
            os << j.dump() << '\n';
        }
    }
}

inline void export_transcripts(const std::vector<SessionTranscript>& sessions, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    export_transcripts(sessions, os);
    if (!os) throw IoError("write failed: " + path);
}

inline std::vector<SessionTranscript> ingest(std::istream& is) {
    std::vector<SessionTranscript> out;
    std::map<std::string, std::size_t> index;
    std::map<std::string, std::size_t> turn_counter;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
        }
        std::string sid;
        std::string role_str;
        double ts = 0.0;
        std::optional<std::uint64_t> qseed;
        TokenSeq tokens;
        try {
            using namespace json_util;
            expect_object(j, "record");
            const auto& sid_field = j.at("session_id");
            sid = sid_field.is_string() ? sid_field.get<std::string>() : sid_field.dump();
            role_str = required<std::string>(j, "role", "");
            ts = required<double>(j, "timestamp_s", "");
            qseed = optional<std::uint64_t>(j, "question_seed", "");
            if (auto it = j.find("tokens"); it != j.end()) {
                if (!it->is_array()) throw ConfigError("tokens: expected an array");
                for (const auto& v : *it) tokens.push_back(Token{as<std::uint64_t>(v, "tokens[]")});
            } else {
                const auto count = required<std::int64_t>(j, "token_count", "");
                if (count < 1) throw ValidationError("token_count must be >= 1");
                tokens = synth_tokens(static_cast<std::size_t>(count),
                                      derive_seed(derive_seed(0, "ingest:" + sid), line_no));
            }
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw ParseError(e.what(), line_no);
        }
        const auto role = parse_role(role_str);
        if (!role) throw ParseError("unknown role '" + role_str + "'", line_no);
        if (*role == Role::Breaker)
            throw ValidationError("line " + std::to_string(line_no) + ": breaker role is reserved");
        if (tokens.empty())
            throw ValidationError("line " + std::to_string(line_no) + ": message has no tokens");

        auto [it, inserted] = index.emplace(sid, out.size());
        if (inserted) {
            out.push_back({});
            out.back().session_id = sid;
            out.back().question_seed = derive_seed(0, "question:" + sid);
        }
        SessionTranscript& t = out[it->second];
        if (t.messages.empty() && *role != Role::System)
            throw ValidationError("line " + std::to_string(line_no) + ": session " + sid +
                                  " must start with a system message");
        if (!t.messages.empty() && *role == Role::System)
            throw ValidationError("line " + std::to_string(line_no) + ": session " + sid +
                                  " has more than one system message");
        if (!t.timestamps_s.empty() && ts < t.timestamps_s.back())
            throw ValidationError("line " + std::to_string(line_no) + ": timestamp goes backwards in session " +
                                  sid);
        if (qseed && *role == Role::Human) t.question_seed = *qseed;

        std::size_t& turn = turn_counter[sid];
        if (is_model_output(*role) && !(t.messages.size() > 0 && is_model_output(t.messages.back().role))) ++turn;
        t.messages.push_back({*role, std::move(tokens), turn});
        t.timestamps_s.push_back(ts);
    }
    return out;
}

inline std::vector<SessionTranscript> ingest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    return ingest(is);
}

// Warmup sessions: copies of the given transcripts (cycled) that keep the
// system prompt and replace every other message with fresh tokens of the
// same length, so they prime shared content without duplicating any
// evaluation session.
inline std::vector<SessionTranscript> make_warmup_sessions(const std::vector<SessionTranscript>& sessions,
                                                           std::size_t count, std::uint64_t seed) {
    std::vector<SessionTranscript> out;
    if (sessions.empty()) return out;
    for (std::size_t w = 0; w < count; ++w) {
        SessionTranscript t = sessions[w % sessions.size()];
        t.session_id = "warmup-" + std::to_string(w);
        t.question_seed = derive_seed(seed, "warmup-question:" + std::to_string(w));
        for (std::size_t i = 0; i < t.messages.size(); ++i) {
            Message& m = t.messages[i];
            if (m.role == Role::System) continue;
            const std::uint64_t stream = m.role == Role::Human
                                             ? t.question_seed
                                             : derive_seed(derive_seed(seed, t.session_id), i);
            m.tokens = synth_tokens(m.tokens.size(), stream);
        }
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace pcsim
