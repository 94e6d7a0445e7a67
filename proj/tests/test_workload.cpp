#include <pcsim/workload.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace pcsim;

namespace {

WorkloadSpec small_spec(std::int64_t tool_calls, std::int64_t sessions = 2) {
    WorkloadSpec s;
    s.system_prompt_tokens = 300;
    s.question_tokens = 20;
    s.tool_calls = tool_calls;
    s.tool_call_tokens = 5;
    s.tool_result_tokens = 40;
    s.reasoning_tokens_per_turn = 7;
    s.final_answer_tokens = 30;
    s.sessions = sessions;
    s.seed = 12;
    return s;
}

std::string expect_parse_error_line(const std::string& text, std::size_t line) {
    std::istringstream is(text);
    try {
        ingest(is);
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), line) << e.what();
        return e.what();
    }
    ADD_FAILURE() << "no ParseError";
    return {};
}

} // namespace

TEST(Generate, NoToolCallsGivesOneRequest) {
    for (const auto& t : generate(small_spec(0))) EXPECT_EQ(t.requests().size(), 1u);
}

TEST(Generate, ThreeToolCalls) {
    const auto t = generate(small_spec(3)).front();
    const auto reqs = t.requests();
    ASSERT_EQ(reqs.size(), 4u);
    const auto last = t.request_messages(reqs.back());
    EXPECT_EQ(std::count_if(last.begin(), last.end(), [](const Message& m) { return m.role == Role::ToolResult; }), 3);
    EXPECT_EQ(reqs.back().output_tokens, 30);
    EXPECT_EQ(reqs.front().output_tokens, 12);
}

TEST(Generate, MainStudyShape) {
    WorkloadSpec spec; // defaults: 10k system, 10 tool calls, 40 sessions
    const auto ts = generate(spec);
    ASSERT_EQ(ts.size(), 40u);
    std::size_t total = 0;
    for (const auto& t : ts) total += t.requests().size();
    EXPECT_EQ(total, 440u);
}

// Prompt sizes follow in closed form from the workload: request k (0-based)
// carries system + question + k turns, each message adding one role tag.
TEST(Generate, PromptSizesClosedForm) {
    const auto spec = small_spec(6);
    const auto t = generate(spec).front();
    const auto reqs = t.requests();
    const std::int64_t base = (1 + spec.system_prompt_tokens) + (1 + spec.question_tokens);
    const std::int64_t per_turn =
        (1 + spec.reasoning_tokens_per_turn + spec.tool_call_tokens) + (1 + spec.tool_result_tokens);
    for (std::size_t k = 0; k < reqs.size(); ++k)
        EXPECT_EQ(static_cast<std::int64_t>(flattened_length(t.request_messages(reqs[k]))),
                  base + static_cast<std::int64_t>(k) * per_turn);
}

TEST(Generate, ConversationIsAppendOnly) {
    const auto t = generate(small_spec(5)).front();
    const auto reqs = t.requests();
    for (std::size_t k = 1; k < reqs.size(); ++k) {
        const auto a = flatten(t.request_messages(reqs[k - 1]));
        const auto b = flatten(t.request_messages(reqs[k]));
        ASSERT_LT(a.size(), b.size());
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(Generate, SessionsShareOnlyTheSystemPrompt) {
    const auto ts = generate(small_spec(2, 3));
    EXPECT_EQ(ts[0].messages[0], ts[1].messages[0]);
    EXPECT_NE(ts[0].messages[1].tokens.front(), ts[1].messages[1].tokens.front());
    EXPECT_NE(ts[0].session_id, ts[1].session_id);
}

TEST(Generate, TimestampsFollowGap) {
    auto spec = small_spec(3);
    spec.inter_call_gap_seconds = 4.0;
    const auto reqs = generate(spec).front().requests();
    for (std::size_t k = 0; k < reqs.size(); ++k) EXPECT_DOUBLE_EQ(reqs[k].offset_s, 4.0 * static_cast<double>(k));
}

TEST(Generate, Deterministic) { EXPECT_EQ(generate(small_spec(4)), generate(small_spec(4))); }

TEST(Generate, InvalidSpec) {
    auto s = small_spec(2);
    s.system_prompt_tokens = 0;
    EXPECT_THROW(generate(s), ValidationError);
    s = small_spec(-1);
    EXPECT_THROW(generate(s), ValidationError);
}

TEST(Ingest, EmptyFile) {
    std::istringstream is("");
    EXPECT_TRUE(ingest(is).empty());
    std::istringstream blank("\n  \n");
    EXPECT_TRUE(ingest(blank).empty());
}

TEST(Ingest, MinimalSession) {
    std::istringstream is(R"({"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 0}
{"session_id": "a", "role": "human", "token_count": 3, "timestamp_s": 0}
{"session_id": "a", "role": "ai", "token_count": 2, "timestamp_s": 1}
)");
    const auto ts = ingest(is);
    ASSERT_EQ(ts.size(), 1u);
    ASSERT_EQ(ts[0].requests().size(), 1u);
    EXPECT_EQ(ts[0].requests()[0].output_tokens, 2);
    EXPECT_EQ(ts[0].messages[2].origin_turn, 1u);
}

TEST(Ingest, RoundTrip) {
    const auto original = generate(small_spec(3, 4));
    std::stringstream ss;
    export_transcripts(original, ss);
    EXPECT_EQ(ingest(ss), original);
}

TEST(Ingest, InterleavedSessionsKeepFirstSeenOrder) {
    std::istringstream is(R"({"session_id": "b", "role": "system", "token_count": 5, "timestamp_s": 0}
{"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 0}
{"session_id": "b", "role": "ai", "token_count": 2, "timestamp_s": 1}
)");
    const auto ts = ingest(is);
    ASSERT_EQ(ts.size(), 2u);
    EXPECT_EQ(ts[0].session_id, "b");
    EXPECT_EQ(ts[1].session_id, "a");
}

TEST(Ingest, MalformedLineReportsLineNumber) {
    expect_parse_error_line("{\"session_id\": \"a\", \"role\": \"system\", \"token_count\": 5, \"timestamp_s\": 0}\n"
                            "\n"
                            "{not json\n",
                            3);
    expect_parse_error_line("{\"session_id\": \"a\", \"role\": \"wizard\", \"token_count\": 5, \"timestamp_s\": 0}\n", 1);
    expect_parse_error_line("{\"session_id\": \"a\", \"role\": \"system\", \"timestamp_s\": 0}\n", 1);
    expect_parse_error_line("[1, 2]\n", 1);
}

TEST(Ingest, ValidationErrors) {
    auto fails = [](const std::string& text) {
        std::istringstream is(text);
        EXPECT_THROW(ingest(is), ValidationError) << text;
    };
    fails(R"({"session_id": "a", "role": "human", "token_count": 5, "timestamp_s": 0})");
    fails(R"({"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 3}
{"session_id": "a", "role": "human", "token_count": 5, "timestamp_s": 2})");
    fails(R"({"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 0}
{"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 0})");
    fails(R"({"session_id": "a", "role": "system", "token_count": 5, "timestamp_s": 0}
{"session_id": "a", "role": "breaker", "token_count": 1, "timestamp_s": 0})");
    fails(R"({"session_id": "a", "role": "system", "token_count": 0, "timestamp_s": 0})");
}

TEST(Ingest, MissingFileIsIoError) { EXPECT_THROW(ingest(std::string("/nonexistent/x.jsonl")), IoError); }

TEST(Warmup, KeepsSystemPromptAndShape) {
    const auto ts = generate(small_spec(3, 2));
    const auto ws = make_warmup_sessions(ts, 3, 99);
    ASSERT_EQ(ws.size(), 3u);
    EXPECT_EQ(ws[0].session_id, "warmup-0");
    for (std::size_t w = 0; w < ws.size(); ++w) {
        const auto& src = ts[w % ts.size()];
        ASSERT_EQ(ws[w].messages.size(), src.messages.size());
        EXPECT_EQ(ws[w].messages[0], src.messages[0]);
        for (std::size_t i = 1; i < src.messages.size(); ++i) {
            EXPECT_EQ(ws[w].messages[i].tokens.size(), src.messages[i].tokens.size());
            EXPECT_NE(ws[w].messages[i].tokens.front(), src.messages[i].tokens.front());
        }
    }
    EXPECT_TRUE(make_warmup_sessions(ts, 0, 1).empty());
}
