#pragma once

// Experiment configuration, the (policy x strategy) run matrix, ablation
// grids, report files and run verification.
//
// Seeds fan out from the master seed by label:
//   workload seed   derive(master, "workload")        unless set explicitly
//   condition seed  derive(master, "<policy>|<mode>")
//   breaker stream  derive(condition, "breaker:<session>")
//   latency noise   derive(derive(condition, "ttft"), latency.seed)
// so adding or removing a condition never shifts another condition's
// streams, and results do not depend on the number of worker threads.

#include <pcsim/error.hpp>
#include <pcsim/json_util.hpp>
#include <pcsim/policy.hpp>
#include <pcsim/replay.hpp>
#include <pcsim/seed.hpp>
#include <pcsim/stats.hpp>
#include <pcsim/strategy.hpp>
#include <pcsim/workload.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pcsim {

struct LatencyConfig {
    LatencyModel default_model;
    std::map<std::string, LatencyModel> per_policy;

    const LatencyModel& for_policy(const std::string& name) const {
        auto it = per_policy.find(name);
        return it == per_policy.end() ? default_model : it->second;
    }

    friend bool operator==(const LatencyConfig&, const LatencyConfig&) = default;
};

struct ExperimentConfig {
    std::vector<ProviderPolicy> policies;
    std::vector<StrategyMode> modes;
    WorkloadSpec workload;
    bool workload_seed_explicit = false;
    std::optional<std::string> transcripts_path; // replay recorded sessions instead of generating
    LatencyConfig latency;
    std::int64_t warmup_sessions = 1;
    SummaryOptions summary;
    std::optional<double> session_gap_s; // defaults to the workload's inter-call gap
    std::string output_dir = "run";
    std::uint64_t seed = 0;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           std::string_view path) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError(json_util::join_path(path, it.key()) + ": unknown field");
    }
}

inline LatencyModel latency_from_json(const nlohmann::json& j, const std::string& path, LatencyModel m) {
    using namespace json_util;
    expect_object(j, path);
    if (auto v = optional<double>(j, "base_ms", path)) m.base_ms = *v;
    if (auto v = optional<double>(j, "per_uncached_token_ms", path)) m.per_uncached_token_ms = *v;
    if (auto v = optional<double>(j, "per_cached_token_ms", path)) m.per_cached_token_ms = *v;
    if (auto v = optional<double>(j, "per_write_token_ms", path)) m.per_write_token_ms = *v;
    if (auto v = optional<double>(j, "noise_sigma", path)) m.noise_sigma = *v;
    if (auto v = optional<std::uint64_t>(j, "seed", path)) m.seed = *v;
    try {
        validate(m);
    } catch (const ValidationError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return m;
}

inline nlohmann::json latency_to_json(const LatencyModel& m) {
    return {{"base_ms", m.base_ms},
            {"per_uncached_token_ms", m.per_uncached_token_ms},
            {"per_cached_token_ms", m.per_cached_token_ms},
            {"per_write_token_ms", m.per_write_token_ms},
            {"noise_sigma", m.noise_sigma},
            {"seed", m.seed}};
}

} // namespace detail

inline WorkloadSpec workload_from_json(const nlohmann::json& j, const std::string& path, bool* seed_explicit) {
    using namespace json_util;
    expect_object(j, path);
    detail::reject_unknown(j,
                           {"system_prompt_tokens", "question_tokens", "tool_calls", "tool_call_tokens",
                            "tool_result_tokens", "reasoning_tokens_per_turn", "final_answer_tokens",
                            "inter_call_gap_seconds", "sessions", "seed"},
                           path);
    WorkloadSpec w;
    if (auto v = optional<std::int64_t>(j, "system_prompt_tokens", path)) w.system_prompt_tokens = *v;
    if (auto v = optional<std::int64_t>(j, "question_tokens", path)) w.question_tokens = *v;
    if (auto v = optional<std::int64_t>(j, "tool_calls", path)) w.tool_calls = *v;
    if (auto v = optional<std::int64_t>(j, "tool_call_tokens", path)) w.tool_call_tokens = *v;
    if (auto v = optional<std::int64_t>(j, "tool_result_tokens", path)) w.tool_result_tokens = *v;
    if (auto v = optional<std::int64_t>(j, "reasoning_tokens_per_turn", path)) w.reasoning_tokens_per_turn = *v;
    if (auto v = optional<std::int64_t>(j, "final_answer_tokens", path)) w.final_answer_tokens = *v;
    if (auto v = optional<double>(j, "inter_call_gap_seconds", path)) w.inter_call_gap_seconds = *v;
    if (auto v = optional<std::int64_t>(j, "sessions", path)) w.sessions = *v;
    auto seed = optional<std::uint64_t>(j, "seed", path);
    if (seed) w.seed = *seed;
    if (seed_explicit) *seed_explicit = seed.has_value();
    try {
        validate(w);
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    return w;
}

inline nlohmann::json workload_to_json(const WorkloadSpec& w, bool with_seed) {
    nlohmann::json j = {{"system_prompt_tokens", w.system_prompt_tokens},
                        {"question_tokens", w.question_tokens},
                        {"tool_calls", w.tool_calls},
                        {"tool_call_tokens", w.tool_call_tokens},
                        {"tool_result_tokens", w.tool_result_tokens},
                        {"reasoning_tokens_per_turn", w.reasoning_tokens_per_turn},
                        {"final_answer_tokens", w.final_answer_tokens},
                        {"inter_call_gap_seconds", w.inter_call_gap_seconds},
                        {"sessions", w.sessions}};
    if (with_seed) j["seed"] = w.seed;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using namespace json_util;
    expect_object(j, "");
    detail::reject_unknown(j,
                           {"policies", "modes", "workload", "transcripts", "latency", "warmup_sessions", "alpha",
                            "t_test", "ttft_sample", "session_gap_s", "output_dir", "seed"},
                           "");
    ExperimentConfig c;
    if (auto v = optional<std::uint64_t>(j, "seed", "")) c.seed = *v;

    auto pit = j.find("policies");
    if (pit == j.end()) {
        c.policies = builtin_policies();
    } else {
        if (!pit->is_array() || pit->empty()) throw ConfigError("policies: expected a non-empty array");
        for (std::size_t i = 0; i < pit->size(); ++i)
            c.policies.push_back(policy_from_json((*pit)[i], "policies[" + std::to_string(i) + "]"));
    }
    for (std::size_t i = 0; i < c.policies.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (c.policies[i].name == c.policies[k].name)
                throw ConfigError("policies[" + std::to_string(i) + "]: duplicate policy name " + c.policies[i].name);

    auto mit = j.find("modes");
    if (mit == j.end()) {
        c.modes.assign(std::begin(kAllStrategies), std::end(kAllStrategies));
    } else {
        if (!mit->is_array() || mit->empty()) throw ConfigError("modes: expected a non-empty array");
        for (std::size_t i = 0; i < mit->size(); ++i) {
            const std::string path = "modes[" + std::to_string(i) + "]";
            auto name = as<std::string>((*mit)[i], path);
            auto m = parse_strategy(name);
            if (!m) throw ConfigError(path + ": unknown mode '" + name + "'");
            if (std::find(c.modes.begin(), c.modes.end(), *m) != c.modes.end())
                throw ConfigError(path + ": duplicate mode '" + name + "'");
            c.modes.push_back(*m);
        }
    }
    if (std::find(c.modes.begin(), c.modes.end(), StrategyMode::NoCache) == c.modes.end())
        throw ConfigError("modes: must include no-cache (every report is relative to it)");

    if (auto it = j.find("workload"); it != j.end())
        c.workload = workload_from_json(*it, "workload", &c.workload_seed_explicit);
    c.transcripts_path = optional<std::string>(j, "transcripts", "");

    if (auto it = j.find("latency"); it != j.end()) {
        expect_object(*it, "latency");
        detail::reject_unknown(*it,
                               {"base_ms", "per_uncached_token_ms", "per_cached_token_ms", "per_write_token_ms",
                                "noise_sigma", "seed", "per_policy"},
                               "latency");
        c.latency.default_model = detail::latency_from_json(*it, "latency", LatencyModel{});
        if (auto pp = it->find("per_policy"); pp != it->end()) {
            expect_object(*pp, "latency.per_policy");
            for (auto e = pp->begin(); e != pp->end(); ++e) {
                const bool known = std::any_of(c.policies.begin(), c.policies.end(),
                                               [&](const ProviderPolicy& p) { return p.name == e.key(); });
                if (!known) throw ConfigError("latency.per_policy." + e.key() + ": not one of the configured policies");
                c.latency.per_policy[e.key()] =
                    detail::latency_from_json(e.value(), "latency.per_policy." + e.key(), c.latency.default_model);
            }
        }
    }

    if (auto v = optional<std::int64_t>(j, "warmup_sessions", "")) c.warmup_sessions = *v;
    if (c.warmup_sessions < 0) throw ConfigError("warmup_sessions: must be >= 0");
    if (auto v = optional<double>(j, "alpha", "")) c.summary.alpha = *v;
    if (!(c.summary.alpha > 0.0 && c.summary.alpha < 1.0)) throw ConfigError("alpha: must be in (0, 1)");
    if (auto v = optional<std::string>(j, "t_test", "")) {
        if (*v == "welch") c.summary.test = TTestKind::Welch;
        else if (*v == "pooled") c.summary.test = TTestKind::Pooled;
        else throw ConfigError("t_test: expected 'welch' or 'pooled'");
    }
    if (auto v = optional<std::string>(j, "ttft_sample", "")) {
        if (*v == "session-mean") c.summary.ttft_sample = TtftSample::SessionMean;
        else if (*v == "per-call") c.summary.ttft_sample = TtftSample::PerCall;
        else throw ConfigError("ttft_sample: expected 'session-mean' or 'per-call'");
    }
    c.session_gap_s = optional<double>(j, "session_gap_s", "");
    if (c.session_gap_s && !(*c.session_gap_s >= 0.0)) throw ConfigError("session_gap_s: must be >= 0");
    if (auto v = optional<std::string>(j, "output_dir", "")) c.output_dir = *v;
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : c.policies) policies.push_back(to_json_value(p));
    nlohmann::json modes = nlohmann::json::array();
    for (auto m : c.modes) modes.push_back(std::string(strategy_name(m)));
    nlohmann::json latency = detail::latency_to_json(c.latency.default_model);
    if (!c.latency.per_policy.empty()) {
        nlohmann::json pp = nlohmann::json::object();
        for (const auto& [name, m] : c.latency.per_policy) pp[name] = detail::latency_to_json(m);
        latency["per_policy"] = std::move(pp);
    }
    nlohmann::json j = {{"seed", c.seed},
                        {"policies", std::move(policies)},
                        {"modes", std::move(modes)},
                        {"workload", workload_to_json(c.workload, c.workload_seed_explicit)},
                        {"latency", std::move(latency)},
                        {"warmup_sessions", c.warmup_sessions},
                        {"alpha", c.summary.alpha},
                        {"t_test", c.summary.test == TTestKind::Welch ? "welch" : "pooled"},
                        {"ttft_sample", c.summary.ttft_sample == TtftSample::SessionMean ? "session-mean" : "per-call"},
                        {"output_dir", c.output_dir}};
    if (c.transcripts_path) j["transcripts"] = *c.transcripts_path;
    if (c.session_gap_s) j["session_gap_s"] = *c.session_gap_s;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

inline WorkloadSpec effective_workload(const ExperimentConfig& c) {
    WorkloadSpec w = c.workload;
    if (!c.workload_seed_explicit) w.seed = derive_seed(c.seed, "workload");
    return w;
}

inline std::vector<SessionTranscript> load_sessions(const ExperimentConfig& c) {
    if (c.transcripts_path) return ingest(*c.transcripts_path);
    return generate(effective_workload(c));
}

inline std::uint64_t condition_seed(std::uint64_t master, const ProviderPolicy& p, StrategyMode m) {
    return derive_seed(master, p.name + "|" + std::string(strategy_name(m)));
}

// Runs every (policy, mode) pair, in that nesting order, on up to `jobs`
// worker threads. Output order never depends on scheduling.
inline std::vector<ConditionResult> run_matrix(const ExperimentConfig& c, const std::vector<SessionTranscript>& sessions,
                                               unsigned jobs = 1) {
    struct Task {
        const ProviderPolicy* policy;
        StrategyMode mode;
    };
    std::vector<Task> tasks;
    for (const auto& p : c.policies)
        for (auto m : c.modes) tasks.push_back({&p, m});
    std::vector<ConditionResult> results(tasks.size());

    const double gap = c.session_gap_s.value_or(c.workload.inter_call_gap_seconds);
    auto run_one = [&](std::size_t i) {
        const Task& t = tasks[i];
        RunOptions opts;
        opts.condition_seed = condition_seed(c.seed, *t.policy, t.mode);
        opts.session_gap_s = gap;
        LatencyModel lat = c.latency.for_policy(t.policy->name);
        lat.seed = derive_seed(derive_seed(opts.condition_seed, "ttft"), lat.seed);
        results[i] = run_condition(sessions, t.mode, *t.policy, lat, static_cast<std::size_t>(c.warmup_sessions), opts);
    };

    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) run_one(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

// ---------------------------------------------------------------------------
// Report files

inline constexpr const char* kSessionCsvHeader =
    "policy,mode,session_id,calls,uncached,cached_read,cache_write,output,cost_usd,mean_ttft_ms";
inline constexpr const char* kWarmupCsvHeader = "policy,mode,uncached,cached_read,cache_write,output,cost_usd";

inline void write_sessions_csv(const std::vector<ConditionResult>& results, std::ostream& os) {
    os << kSessionCsvHeader << '\n';
    for (const auto& c : results)
        for (const auto& s : c.sessions)
            os << c.policy << ',' << strategy_name(c.mode) << ',' << s.session_id << ',' << s.calls.size() << ','
               << s.total_usage.uncached_input << ',' << s.total_usage.cached_read << ','
               << s.total_usage.cache_write << ',' << s.total_usage.output << ',' << format_double(s.total_cost_usd)
               << ',' << format_double(s.mean_ttft_ms) << '\n';
}

inline void write_warmup_csv(const std::vector<ConditionResult>& results, std::ostream& os) {
    os << kWarmupCsvHeader << '\n';
    for (const auto& c : results)
        os << c.policy << ',' << strategy_name(c.mode) << ',' << c.warmup_usage.uncached_input << ','
           << c.warmup_usage.cached_read << ',' << c.warmup_usage.cache_write << ',' << c.warmup_usage.output << ','
           << format_double(c.warmup_cost_usd) << '\n';
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    fn(os);
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace detail

inline void write_run(const std::filesystem::path& dir, const ExperimentConfig& c,
                      const std::vector<ConditionResult>& results, const ExperimentReport& report) {
    detail::ensure_dir(dir);
    detail::write_file(dir / "config.json", [&](std::ostream& os) { os << config_to_json(c).dump(2) << '\n'; });
    detail::write_file(dir / "calls.csv", [&](std::ostream& os) { write_calls_csv(results, os); });
    detail::write_file(dir / "sessions.csv", [&](std::ostream& os) { write_sessions_csv(results, os); });
    detail::write_file(dir / "warmup.csv", [&](std::ostream& os) { write_warmup_csv(results, os); });
    detail::write_file(dir / "summary.json", [&](std::ostream& os) { os << to_json_value(report).dump(2) << '\n'; });
    detail::write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(report, os); });
}

// Table with one row per (policy, mode): cost savings and TTFT improvement
// against the no-cache baseline, with p-values.
inline void print_report_table(const ExperimentReport& r, std::ostream& os) {
    char line[256];
    std::snprintf(line, sizeof line, "%-20s %-22s %12s %10s %12s %10s\n", "policy", "mode", "cost_saving%",
                  "cost_p", "ttft_impr%", "ttft_p");
    os << line;
    for (const auto& p : r.policies) {
        for (const auto& m : p.modes) {
            if (!m.cost) {
                std::snprintf(line, sizeof line, "%-20s %-22s %12s %10s %12s %10s\n", p.policy.c_str(),
                              std::string(strategy_name(m.mode)).c_str(), "baseline", "-", "baseline", "-");
            } else {
                std::snprintf(line, sizeof line, "%-20s %-22s %11.1f%s %10.2e %11.1f%s %10.2e\n", p.policy.c_str(),
                              std::string(strategy_name(m.mode)).c_str(), m.cost->improvement_pct,
                              m.cost->significant ? "*" : " ", m.cost->p_value, m.ttft->improvement_pct,
                              m.ttft->significant ? "*" : " ", m.ttft->p_value);
            }
            os << line;
        }
    }
}

inline void write_policy_table(const std::vector<ProviderPolicy>& policies, std::ostream& os) {
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        char b[32];
        std::snprintf(b, sizeof b, "%g", *v);
        return std::string(b);
    };
    char line[320];
    std::snprintf(line, sizeof line, "%-18s %-21s %8s %6s %7s %7s %8s %8s %8s %8s %12s %s\n", "name", "mode",
                  "min_tok", "gran", "ttl_s", "refresh", "input", "output", "cached", "write", "storage/h", "tier2");
    os << line;
    for (const auto& p : policies) {
        std::string tier = "-";
        if (p.prices.tier_boundary_tokens)
            tier = ">" + std::to_string(*p.prices.tier_boundary_tokens) + ": " + opt(p.prices.tier2_input_per_mtok) +
                   "/" + opt(p.prices.tier2_output_per_mtok) + "/" + opt(p.prices.tier2_cached_read_per_mtok);
        std::snprintf(line, sizeof line, "%-18s %-21s %8lld %6lld %7g %7s %8g %8g %8g %8s %12s %s\n", p.name.c_str(),
                      std::string(cache_mode_name(p.mode)).c_str(), static_cast<long long>(p.min_cache_tokens),
                      static_cast<long long>(p.granularity_tokens), p.ttl_seconds, p.refresh_on_read ? "yes" : "no",
                      p.prices.input_per_mtok, p.prices.output_per_mtok, p.prices.cached_read_per_mtok,
                      opt(p.prices.cache_write_per_mtok).c_str(), opt(p.prices.storage_per_mtok_hour).c_str(),
                      tier.c_str());
        os << line;
    }
}

// ---------------------------------------------------------------------------
// Ablation grids

enum class AblationDimension : std::uint8_t { PromptSize, ToolCount };

constexpr std::string_view dimension_name(AblationDimension d) noexcept {
    return d == AblationDimension::PromptSize ? "prompt-size" : "tool-count";
}

inline std::optional<AblationDimension> parse_dimension(std::string_view s) noexcept {
    if (s == "prompt-size") return AblationDimension::PromptSize;
    if (s == "tool-count") return AblationDimension::ToolCount;
    return std::nullopt;
}

struct AblationGrid {
    AblationDimension dimension = AblationDimension::PromptSize;
    std::vector<std::int64_t> values;
};

inline std::vector<std::int64_t> default_grid_values(AblationDimension d) {
    if (d == AblationDimension::PromptSize) return {500, 2'000, 5'000, 10'000, 20'000, 50'000};
    return {3, 5, 10, 20, 50};
}

inline void validate(const AblationGrid& g) {
    if (g.values.empty()) throw ConfigError("ablation grid: no values");
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const std::int64_t lo = g.dimension == AblationDimension::PromptSize ? 1 : 0;
        if (g.values[i] < lo)
            throw ConfigError("ablation grid: value " + std::to_string(g.values[i]) + " out of range");
        if (i > 0 && g.values[i] <= g.values[i - 1])
            throw ConfigError("ablation grid: values must be strictly ascending");
    }
}

struct AblationPoint {
    std::int64_t value = 0;
    std::string policy;
    StrategyMode mode = StrategyMode::NoCache;
    double median_cost_usd = 0.0;
    double median_ttft_ms = 0.0;
    double cost_savings_pct = 0.0; // medians against the no-cache median
    double ttft_improvement_pct = 0.0;
    std::int64_t total_cached_read = 0;
};

struct AblationResult {
    AblationDimension dimension = AblationDimension::PromptSize;
    std::vector<AblationPoint> points;
    std::vector<ExperimentReport> reports; // one per grid value
};

inline ExperimentConfig with_grid_value(ExperimentConfig c, AblationDimension d, std::int64_t value) {
    if (c.transcripts_path) throw ConfigError("ablation: grids apply to generated workloads, not transcripts");
    if (d == AblationDimension::PromptSize) c.workload.system_prompt_tokens = value;
    else c.workload.tool_calls = value;
    return c;
}

inline std::vector<AblationPoint> ablation_points(std::int64_t value, const std::vector<ConditionResult>& results,
                                                  const SummaryOptions& opts) {
    std::vector<AblationPoint> out;
    for (const auto& c : results) {
        AblationPoint p;
        p.value = value;
        p.policy = c.policy;
        p.mode = c.mode;
        p.median_cost_usd = median(cost_sample(c));
        p.median_ttft_ms = median(ttft_sample(c, opts.ttft_sample));
        for (const auto& s : c.sessions) p.total_cached_read += s.total_usage.cached_read;
        out.push_back(p);
    }
    for (auto& p : out) {
        for (const auto& b : out) {
            if (b.policy != p.policy || b.mode != StrategyMode::NoCache) continue;
            p.cost_savings_pct = improvement_pct(b.median_cost_usd, p.median_cost_usd);
            p.ttft_improvement_pct = improvement_pct(b.median_ttft_ms, p.median_ttft_ms);
        }
    }
    return out;
}

inline AblationResult run_ablation(const ExperimentConfig& base, const AblationGrid& grid, unsigned jobs = 1) {
    validate(grid);
    AblationResult out;
    out.dimension = grid.dimension;
    for (auto v : grid.values) {
        ExperimentConfig c = with_grid_value(base, grid.dimension, v);
        try {
            validate(c.workload);
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
        const auto results = run_matrix(c, load_sessions(c), jobs);
        out.reports.push_back(summarize_experiment(results, c.summary));
        auto pts = ablation_points(v, results, c.summary);
        out.points.insert(out.points.end(), pts.begin(), pts.end());
    }
    return out;
}

inline constexpr const char* kAblationCsvHeader =
    "dimension,value,policy,mode,median_cost_usd,median_ttft_ms,cost_savings_pct,ttft_improvement_pct,"
    "total_cached_read";

inline void write_ablation_csv(const AblationResult& r, std::ostream& os) {
    os << kAblationCsvHeader << '\n';
    for (const auto& p : r.points)
        os << dimension_name(r.dimension) << ',' << p.value << ',' << p.policy << ',' << strategy_name(p.mode) << ','
           << format_double(p.median_cost_usd) << ',' << format_double(p.median_ttft_ms) << ','
           << format_double(p.cost_savings_pct) << ',' << format_double(p.ttft_improvement_pct) << ','
           << p.total_cached_read << '\n';
}

inline void write_ablation(const std::filesystem::path& dir, const ExperimentConfig& base, const AblationGrid& grid,
                           const AblationResult& r) {
    detail::ensure_dir(dir);
    detail::write_file(dir / "config.json", [&](std::ostream& os) { os << config_to_json(base).dump(2) << '\n'; });
    detail::write_file(dir / ("ablation_" + std::string(dimension_name(r.dimension)) + ".csv"),
                       [&](std::ostream& os) { write_ablation_csv(r, os); });
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        const auto sub = dir / (std::string(dimension_name(r.dimension)) + "-" + std::to_string(grid.values[i]));
        detail::ensure_dir(sub);
        detail::write_file(sub / "summary.json",
                           [&](std::ostream& os) { os << to_json_value(r.reports[i]).dump(2) << '\n'; });
        detail::write_file(sub / "summary.csv", [&](std::ostream& os) { write_summary_csv(r.reports[i], os); });
    }
}

// ---------------------------------------------------------------------------
// Verification: rebuild the summary from calls.csv and warmup.csv alone.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::int64_t parse_i64(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        auto v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected an integer, got '" + s + "'", line);
    }
}

inline double parse_f64(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        auto v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + s + "'", line);
    }
}

inline bool json_close(const nlohmann::json& a, const nlohmann::json& b, const std::string& path,
                       std::vector<std::string>& diffs) {
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>();
        const double y = b.get<double>();
        const double tol = 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
        if (std::abs(x - y) > tol) diffs.push_back(path + ": " + a.dump() + " != " + b.dump());
        return true;
    }
    if (a.type() != b.type()) {
        diffs.push_back(path + ": type differs");
        return false;
    }
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) diffs.push_back(path + "." + it.key() + ": missing");
            else json_close(it.value(), b.at(it.key()), path + "." + it.key(), diffs);
        }
        for (auto it = b.begin(); it != b.end(); ++it)
            if (!a.contains(it.key())) diffs.push_back(path + "." + it.key() + ": unexpected");
    } else if (a.is_array()) {
        if (a.size() != b.size()) diffs.push_back(path + ": length differs");
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
            json_close(a[i], b[i], path + "[" + std::to_string(i) + "]", diffs);
    } else if (a != b) {
        diffs.push_back(path + ": " + a.dump() + " != " + b.dump());
    }
    return true;
}

} // namespace detail

inline std::vector<ConditionResult> read_run_results(const std::filesystem::path& dir, const ExperimentConfig& c) {
    std::vector<ConditionResult> results;
    std::map<std::pair<std::string, StrategyMode>, std::size_t> index;
    for (const auto& p : c.policies)
        for (auto m : c.modes) {
            index[{p.name, m}] = results.size();
            results.push_back({});
            results.back().policy = p.name;
            results.back().mode = m;
        }
    auto find = [&](const std::string& policy, const std::string& mode, std::size_t line) -> ConditionResult& {
        auto m = parse_strategy(mode);
        if (!m) throw ParseError("unknown mode '" + mode + "'", line);
        auto it = index.find({policy, *m});
        if (it == index.end()) throw ParseError("condition " + policy + "/" + mode + " not in config", line);
        return results[it->second];
    };

    std::istringstream calls(detail::read_file(dir / "calls.csv"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(calls, line)) {
        if (++n == 1) {
            if (line != kCallCsvHeader) throw ParseError("calls.csv: unexpected header", n);
            continue;
        }
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 11) throw ParseError("calls.csv: expected 11 columns", n);
        ConditionResult& cond = find(f[3], f[2], n);
        if (cond.sessions.empty() || cond.sessions.back().session_id != f[0]) {
            cond.sessions.push_back({});
            cond.sessions.back().session_id = f[0];
        }
        SessionResult& s = cond.sessions.back();
        CallResult r;
        r.usage = {detail::parse_i64(f[4], n), detail::parse_i64(f[5], n), detail::parse_i64(f[6], n),
                   detail::parse_i64(f[7], n)};
        r.cost_usd = detail::parse_f64(f[8], n);
        r.ttft_ms = detail::parse_f64(f[9], n);
        r.time_s = detail::parse_f64(f[10], n);
        s.total_usage += r.usage;
        s.total_cost_usd += r.cost_usd;
        s.mean_ttft_ms += r.ttft_ms;
        s.calls.push_back(r);
    }
    for (auto& cond : results)
        for (auto& s : cond.sessions)
            if (!s.calls.empty()) s.mean_ttft_ms /= static_cast<double>(s.calls.size());

    std::istringstream warm(detail::read_file(dir / "warmup.csv"));
    n = 0;
    while (std::getline(warm, line)) {
        if (++n == 1 || line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw ParseError("warmup.csv: expected 7 columns", n);
        ConditionResult& cond = find(f[0], f[1], n);
        cond.warmup_usage = {detail::parse_i64(f[2], n), detail::parse_i64(f[3], n), detail::parse_i64(f[4], n),
                             detail::parse_i64(f[5], n)};
        cond.warmup_cost_usd = detail::parse_f64(f[6], n);
    }
    return results;
}

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> differences;
};

inline VerifyResult verify_run(const std::filesystem::path& dir) {
    nlohmann::json cfg_json;
    try {
        cfg_json = nlohmann::json::parse(detail::read_file(dir / "config.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config.json: " + std::string(e.what()));
    }
    const ExperimentConfig c = config_from_json(cfg_json);
    const auto results = read_run_results(dir, c);
    const auto recomputed = to_json_value(summarize_experiment(results, c.summary));
    nlohmann::json stored;
    try {
        stored = nlohmann::json::parse(detail::read_file(dir / "summary.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("summary.json: " + std::string(e.what()), 0);
    }
    VerifyResult v;
    detail::json_close(recomputed, stored, "summary", v.differences);
    v.ok = v.differences.empty();
    return v;
}

} // namespace pcsim
