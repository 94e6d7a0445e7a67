#include <pcsim/cache_oracle.hpp>
#include <pcsim/replay.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace pcsim;

namespace {

ProviderPolicy policy(std::string_view name, std::int64_t granularity = -1) {
    auto p = *find_builtin(name);
    if (granularity > 0) p.granularity_tokens = granularity;
    return p;
}

std::vector<SessionTranscript> sessions(std::int64_t n = 3, std::int64_t tool_calls = 4) {
    WorkloadSpec s;
    s.sessions = n;
    s.tool_calls = tool_calls;
    s.seed = 5;
    return generate(s);
}

} // namespace

TEST(Replay, NoCacheNeverReads) {
    for (const auto& p : builtin_policies()) {
        const auto r = run_condition(sessions(), StrategyMode::NoCache, p, {}, 1, {.condition_seed = 1});
        for (const auto& s : r.sessions)
            for (const auto& c : s.calls) EXPECT_EQ(c.usage.cached_read, 0) << p.name;
    }
}

TEST(Replay, SystemPromptOnlySecondCallReadsSystem) {
    const auto t = sessions(1).front();
    for (auto name : {"gpt-4o", "claude-sonnet-4.5"}) {
        const auto p = policy(name, 1);
        ProviderCache cache;
        VirtualClock clock;
        const auto r = replay_session(t, StrategyMode::SystemPromptOnly, p, cache, clock, {}, {.condition_seed = 3});
        EXPECT_EQ(r.calls[0].usage.cached_read, 0);
        EXPECT_EQ(r.calls[0].usage.cache_write, 10'001);
        EXPECT_EQ(r.calls[1].usage.cached_read, 10'001) << name;
        EXPECT_EQ(r.calls[1].usage.cache_write, 0);
    }
}

// The engine's answer for call 2 agrees with the oracle over the store
// snapshot taken after call 1.
TEST(Replay, SystemPromptOnlyCallTwoMatchesOracle) {
    const auto t = sessions(1).front();
    const auto p = policy("gpt-5.2", 1);
    ProviderCache cache;
    VirtualClock clock;
    const auto reqs = t.requests();
    CallContext ctx{.session_seed = 4, .session_noise_seed = 0, .advance_after_s = 5};
    replay_call(t.request_messages(reqs[0]), StrategyMode::SystemPromptOnly, 0, p, cache, clock, {},
                reqs[0].output_tokens, ctx);
    const auto snap = cache.store.entries();
    const auto prompt = apply_strategy(t.request_messages(reqs[1]), StrategyMode::SystemPromptOnly, 1, 4, p.mode);
    const auto expected = oracle_lookup(snap, flatten(prompt), clock.now(), p);
    const auto r = replay_call(t.request_messages(reqs[1]), StrategyMode::SystemPromptOnly, 1, p, cache, clock, {},
                               reqs[1].output_tokens, ctx);
    EXPECT_EQ(expected.cached_tokens, 10'001);
    EXPECT_EQ(r.usage.cached_read, expected.cached_tokens);
}

TEST(Replay, FullContextReadsWholePreviousPrompt) {
    const auto t = sessions(1).front();
    const auto p = policy("gpt-5.2", 1);
    ProviderCache cache;
    VirtualClock clock;
    const auto r = replay_session(t, StrategyMode::FullContext, p, cache, clock, {}, {});
    const auto reqs = t.requests();
    for (std::size_t k = 1; k < reqs.size(); ++k) {
        const auto prev = static_cast<std::int64_t>(flattened_length(t.request_messages(reqs[k - 1])));
        const auto cur = static_cast<std::int64_t>(flattened_length(t.request_messages(reqs[k])));
        EXPECT_EQ(r.calls[k].usage.cached_read, prev);
        EXPECT_EQ(r.calls[k].usage.cache_write, cur - prev);
    }
}

// Session 2's first FullContext call shares system + role tag with
// session 1 plus the human tag, nothing more.
TEST(Replay, FullContextCrossSessionPrefix) {
    const auto ts = sessions(2);
    const auto p = policy("claude-sonnet-4.5");
    const auto r = run_condition(ts, StrategyMode::FullContext, p, {}, 0, {});
    const auto a = flatten(ts[0].request_messages(ts[0].requests()[0]));
    const auto b = flatten(ts[1].request_messages(ts[1].requests()[0]));
    const auto lcp = std::mismatch(a.begin(), a.end(), b.begin()).first - a.begin();
    EXPECT_EQ(lcp, 10'002);
    EXPECT_EQ(r.sessions[1].calls[0].usage.cached_read, lcp);
}

TEST(Replay, UsageAccountingInvariant) {
    for (const auto& p : builtin_policies())
        for (auto mode : kAllStrategies) {
            const auto ts = sessions(2);
            const auto r = run_condition(ts, mode, p, {}, 1, {});
            for (std::size_t s = 0; s < ts.size(); ++s) {
                const auto reqs = ts[s].requests();
                for (std::size_t k = 0; k < reqs.size(); ++k) {
                    const auto& u = r.sessions[s].calls[k].usage;
                    auto flat_len = static_cast<std::int64_t>(flattened_length(ts[s].request_messages(reqs[k])));
                    // strategies add breaker tokens on top of the conversation
                    EXPECT_GE(u.prompt_tokens(), flat_len);
                    EXPECT_LE(u.prompt_tokens(), flat_len + static_cast<std::int64_t>(k) + 1);
                    EXPECT_LE(u.cache_write, u.prompt_tokens());
                    EXPECT_EQ(u.output, reqs[k].output_tokens);
                    EXPECT_GE(u.uncached_input, 0);
                }
            }
        }
}

TEST(Replay, TtftFollowsLinearModelWithoutNoise) {
    LatencyModel m{.base_ms = 100, .per_uncached_token_ms = 0.01, .per_cached_token_ms = 0.001,
                   .per_write_token_ms = 0.005};
    const auto r = run_condition(sessions(2), StrategyMode::FullContext, policy("gpt-4o"), m, 0, {});
    for (const auto& s : r.sessions)
        for (const auto& c : s.calls)
            EXPECT_DOUBLE_EQ(c.ttft_ms, 100 + 0.01 * static_cast<double>(c.usage.uncached_input) +
                                            0.001 * static_cast<double>(c.usage.cached_read) +
                                            0.005 * static_cast<double>(c.usage.cache_write));
}

TEST(Replay, NoiseIsLogNormalAndSeeded) {
    LatencyModel m{.noise_sigma = 0.2, .seed = 11};
    std::vector<double> logs;
    for (std::uint64_t s = 0; s < 4000; ++s) logs.push_back(std::log(noise_factor(m, derive_seed(11, s), 0)));
    double mean = 0, var = 0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());
    for (double v : logs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(logs.size() - 1);
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(std::sqrt(var), 0.2, 0.01);
    EXPECT_EQ(noise_factor(m, 7, 3), noise_factor(m, 7, 3));
    EXPECT_NE(noise_factor(m, 7, 3), noise_factor(m, 7, 4));
}

TEST(Replay, Deterministic) {
    LatencyModel m{.per_write_token_ms = 0.1, .noise_sigma = 0.1, .seed = 2};
    for (auto mode : kAllStrategies) {
        const auto a = run_condition(sessions(), mode, policy("gemini-2.5-pro"), m, 1, {.condition_seed = 8});
        const auto b = run_condition(sessions(), mode, policy("gemini-2.5-pro"), m, 1, {.condition_seed = 8});
        EXPECT_EQ(a, b);
    }
}

// NoCache never reads, so warming up changes nothing but the clock.
TEST(Replay, WarmupIrrelevantForNoCache) {
    const auto p = policy("gpt-4o");
    const auto a = run_condition(sessions(), StrategyMode::NoCache, p, {}, 0, {.condition_seed = 1});
    const auto b = run_condition(sessions(), StrategyMode::NoCache, p, {}, 1, {.condition_seed = 1});
    ASSERT_EQ(a.sessions.size(), b.sessions.size());
    for (std::size_t s = 0; s < a.sessions.size(); ++s)
        for (std::size_t k = 0; k < a.sessions[s].calls.size(); ++k) {
            EXPECT_EQ(a.sessions[s].calls[k].usage, b.sessions[s].calls[k].usage);
            EXPECT_EQ(a.sessions[s].calls[k].cost_usd, b.sessions[s].calls[k].cost_usd);
            EXPECT_EQ(a.sessions[s].calls[k].ttft_ms, b.sessions[s].calls[k].ttft_ms);
        }
    EXPECT_EQ(a.warmup_usage, UsageRecord{});
    EXPECT_GT(b.warmup_usage.uncached_input, 0);
}

TEST(Replay, WarmupPrimesSystemPrompt) {
    const auto p = policy("gpt-5.2");
    const auto cold = run_condition(sessions(), StrategyMode::SystemPromptOnly, p, {}, 0, {});
    const auto warm = run_condition(sessions(), StrategyMode::SystemPromptOnly, p, {}, 1, {});
    EXPECT_EQ(cold.sessions[0].calls[0].usage.cached_read, 0);
    EXPECT_EQ(warm.sessions[0].calls[0].usage.cached_read, 9984); // 10001 rounded down to 128
}

TEST(Replay, TtlExpiryBetweenSessions) {
    const auto p = policy("gpt-5.2");
    const auto cold = run_condition(sessions(2), StrategyMode::SystemPromptOnly, p, {}, 0, {.session_gap_s = 400});
    EXPECT_EQ(cold.sessions[1].calls[0].usage.cached_read, 0);
    EXPECT_EQ(cold.sessions[1].calls[1].usage.cached_read, 9984);
}

TEST(Replay, CostOrderingForCachingModes) {
    for (const auto& p : builtin_policies()) {
        const auto ts = sessions(3, 6);
        const auto none = run_condition(ts, StrategyMode::NoCache, p, {}, 1, {});
        const auto spo = run_condition(ts, StrategyMode::SystemPromptOnly, p, {}, 1, {});
        double a = 0, b = 0;
        for (const auto& s : none.sessions) a += s.total_cost_usd;
        for (const auto& s : spo.sessions) b += s.total_cost_usd;
        EXPECT_LT(b, a) << p.name;
    }
}

TEST(Replay, OpportunisticSegmentsReuseToolResults) {
    auto p = policy("gpt-4o", 1);
    p.min_cache_tokens = 1024;
    const auto ts = sessions(1, 4);
    const auto plain = run_condition(ts, StrategyMode::ExcludeToolResults, p, {}, 0, {});
    p.opportunistic_segments = true;
    const auto seg = run_condition(ts, StrategyMode::ExcludeToolResults, p, {}, 0, {});
    // Each segment (AI turn + tool result, ~1700 tokens) is stored once and
    // read back on every later call.
    EXPECT_GT(seg.sessions[0].calls.back().usage.cached_read, plain.sessions[0].calls.back().usage.cached_read);
    EXPECT_EQ(plain.sessions[0].calls.back().usage.cached_read, 10'001);
}

TEST(Calibrate, RecoversCoefficients) {
    const LatencyModel truth{.base_ms = 180, .per_uncached_token_ms = 0.031, .per_cached_token_ms = 0.0042,
                             .per_write_token_ms = 0.017};
    std::mt19937_64 rng(4);
    std::vector<std::pair<UsageRecord, double>> obs;
    for (int i = 0; i < 60; ++i) {
        UsageRecord u{static_cast<std::int64_t>(rng() % 40'000), static_cast<std::int64_t>(rng() % 40'000),
                      static_cast<std::int64_t>(rng() % 20'000), 1};
        obs.emplace_back(u, expected_ttft_ms(truth, u));
    }
    const auto fit = calibrate_latency(obs);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
    EXPECT_LT(rel(fit.model.base_ms, truth.base_ms), 1e-9);
    EXPECT_LT(rel(fit.model.per_uncached_token_ms, truth.per_uncached_token_ms), 1e-9);
    EXPECT_LT(rel(fit.model.per_cached_token_ms, truth.per_cached_token_ms), 1e-9);
    EXPECT_LT(rel(fit.model.per_write_token_ms, truth.per_write_token_ms), 1e-9);
    EXPECT_LT(fit.rmse_ms, 1e-6);
    EXPECT_LT(fit.model.noise_sigma, 1e-9);
}

TEST(Calibrate, DegenerateInputs) {
    std::vector<std::pair<UsageRecord, double>> three = {{{1, 2, 3, 0}, 1.0}, {{2, 1, 3, 0}, 2.0}, {{3, 3, 1, 0}, 3.0}};
    EXPECT_THROW(calibrate_latency(three), DegenerateFit);
    std::vector<std::pair<UsageRecord, double>> same(10, {{100, 50, 10, 1}, 300.0});
    EXPECT_THROW(calibrate_latency(same), DegenerateFit);
    std::vector<std::pair<UsageRecord, double>> proportional;
    for (int i = 1; i <= 10; ++i) proportional.push_back({{i * 10, i * 5, i, 0}, 100.0 + i});
    EXPECT_THROW(calibrate_latency(proportional), DegenerateFit);
}

TEST(Clock, RejectsBackwardSteps) {
    VirtualClock c;
    c.advance_by(2.5);
    EXPECT_EQ(c.now(), 2.5);
    EXPECT_THROW(c.advance_by(-1), InvalidArgument);
}

TEST(CallsCsv, HeaderAndRowCount) {
    const auto r = run_condition(sessions(2, 2), StrategyMode::FullContext, policy("gpt-4o"), {}, 0, {});
    std::ostringstream os;
    write_calls_csv({r}, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, kCallCsvHeader);
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 6);
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}
