#include <pcsim/cache_oracle.hpp>
#include <pcsim/cache_store.hpp>
#include <pcsim/strategy.hpp>
#include <pcsim/workload.hpp>

#include <gtest/gtest.h>

using namespace pcsim;

namespace {

std::size_t lcp(const TokenSeq& a, const TokenSeq& b) {
    std::size_t i = 0;
    while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
    return i;
}

// Requests k and k+1 of one generated session.
std::pair<std::vector<Message>, std::vector<Message>> consecutive(std::size_t k, std::int64_t system = 10'000) {
    WorkloadSpec spec;
    spec.system_prompt_tokens = system;
    spec.sessions = 1;
    spec.tool_calls = 4;
    spec.seed = 77;
    const auto t = generate(spec).front();
    const auto reqs = t.requests();
    return {t.request_messages(reqs.at(k)), t.request_messages(reqs.at(k + 1))};
}

constexpr CacheMode kModes[] = {CacheMode::Automatic, CacheMode::ExplicitBreakpoints, CacheMode::ExplicitCacheObject};

} // namespace

TEST(Strategy, NamesRoundTrip) {
    for (auto m : kAllStrategies) EXPECT_EQ(parse_strategy(strategy_name(m)), m);
    EXPECT_FALSE(parse_strategy("everything").has_value());
}

TEST(Strategy, RequiresLeadingSystemMessage) {
    std::vector<Message> msgs = {{Role::Human, synth_tokens(4, 1), 0}};
    EXPECT_THROW(apply_strategy(msgs, StrategyMode::FullContext, 0, 1, CacheMode::Automatic), InvalidArgument);
    EXPECT_THROW(apply_strategy({}, StrategyMode::FullContext, 0, 1, CacheMode::Automatic), InvalidArgument);
    msgs = {{Role::System, synth_tokens(4, 1), 0}, {Role::System, synth_tokens(4, 2), 0}};
    EXPECT_THROW(apply_strategy(msgs, StrategyMode::NoCache, 0, 1, CacheMode::Automatic), InvalidArgument);
}

TEST(Strategy, BreakerTokensAreFresh) {
    EXPECT_EQ(breaker_token(5, 3, 0), breaker_token(5, 3, 0));
    for (std::uint64_t pos = 0; pos < 20; ++pos) {
        EXPECT_NE(breaker_token(5, 3, pos), breaker_token(5, 4, pos));
        EXPECT_NE(breaker_token(5, 3, pos), breaker_token(6, 3, pos));
        EXPECT_GE(breaker_token(5, 3, pos).id, kFirstContentId);
    }
}

TEST(Strategy, NoCacheDiffersAtIndexOne) {
    auto [a, b] = consecutive(1);
    for (auto cm : kModes) {
        const auto pa = flatten(apply_strategy(a, StrategyMode::NoCache, 1, 9, cm));
        const auto pb = flatten(apply_strategy(a, StrategyMode::NoCache, 2, 9, cm));
        EXPECT_EQ(lcp(pa, pb), 1u);
        const auto pc = flatten(apply_strategy(b, StrategyMode::NoCache, 2, 9, cm));
        EXPECT_EQ(lcp(pa, pc), 1u);
    }
}

TEST(Strategy, SystemPromptOnlySharesSystemExactly) {
    for (std::size_t k = 0; k < 4; ++k) {
        auto [a, b] = consecutive(k);
        for (auto cm : kModes) {
            const auto pa = flatten(apply_strategy(a, StrategyMode::SystemPromptOnly, k, 9, cm));
            const auto pb = flatten(apply_strategy(b, StrategyMode::SystemPromptOnly, k + 1, 9, cm));
            EXPECT_EQ(lcp(pa, pb), 10'001u);
        }
    }
}

TEST(Strategy, ExcludeToolResultsSharesSystemExactly) {
    for (std::size_t k = 0; k < 4; ++k) {
        auto [a, b] = consecutive(k);
        const auto pa = flatten(apply_strategy(a, StrategyMode::ExcludeToolResults, k, 9, CacheMode::Automatic));
        const auto pb = flatten(apply_strategy(b, StrategyMode::ExcludeToolResults, k + 1, 9, CacheMode::Automatic));
        EXPECT_EQ(lcp(pa, pb), 10'001u);
    }
}

TEST(Strategy, FullContextIsAppendOnly) {
    for (std::size_t k = 0; k < 4; ++k) {
        auto [a, b] = consecutive(k);
        for (auto cm : kModes) {
            const auto pa = flatten(apply_strategy(a, StrategyMode::FullContext, k, 9, cm));
            const auto pb = flatten(apply_strategy(b, StrategyMode::FullContext, k + 1, 9, cm));
            ASSERT_LT(pa.size(), pb.size());
            EXPECT_EQ(lcp(pa, pb), pa.size());
        }
    }
}

TEST(Strategy, BreakerPositionsMatchFlattenedSequence) {
    auto [a, b] = consecutive(3);
    (void)a;
    for (auto mode : kAllStrategies) {
        const auto p = apply_strategy(b, mode, 4, 9, CacheMode::Automatic);
        const auto flat = flatten(p);
        for (const auto& br : p.breakers) EXPECT_EQ(flat.at(br.position), breaker_token(9, 4, &br - p.breakers.data()));
        EXPECT_TRUE(breakpoints_valid(p));
    }
    // ETR puts one breaker after the system prompt and one after each of the 4 tool results.
    EXPECT_EQ(apply_strategy(b, StrategyMode::ExcludeToolResults, 4, 9, CacheMode::Automatic).breakers.size(), 5u);
}

TEST(Strategy, CacheableLimits) {
    auto [a, b] = consecutive(2);
    (void)a;
    const auto n = flattened_length(b);
    auto limit = [&](StrategyMode m, CacheMode cm) {
        const auto p = apply_strategy(b, m, 3, 9, cm);
        return cacheable_limit(p, cm, flatten(p).size());
    };
    EXPECT_EQ(limit(StrategyMode::FullContext, CacheMode::Automatic), n);
    EXPECT_EQ(limit(StrategyMode::FullContext, CacheMode::ExplicitBreakpoints), n);
    EXPECT_EQ(limit(StrategyMode::SystemPromptOnly, CacheMode::Automatic), 10'001u);
    EXPECT_EQ(limit(StrategyMode::SystemPromptOnly, CacheMode::ExplicitBreakpoints), 10'001u);
    EXPECT_EQ(limit(StrategyMode::ExcludeToolResults, CacheMode::ExplicitCacheObject), 10'001u);
    EXPECT_EQ(limit(StrategyMode::NoCache, CacheMode::Automatic), 1u);
    EXPECT_EQ(limit(StrategyMode::NoCache, CacheMode::ExplicitBreakpoints), 0u);
}

TEST(Strategy, ExpectedCacheablePrefix) {
    EXPECT_EQ(expected_cacheable_prefix(StrategyMode::NoCache, 10'000), 0);
    EXPECT_EQ(expected_cacheable_prefix(StrategyMode::SystemPromptOnly, 10'000), 10'001);
    EXPECT_EQ(expected_cacheable_prefix(StrategyMode::ExcludeToolResults, 10'000), 10'001);
    EXPECT_FALSE(expected_cacheable_prefix(StrategyMode::FullContext, 10'000).has_value());
}

// A three-turn session through the cache engine lands exactly on the
// expected steady-state prefix.
TEST(Strategy, ExcludeToolResultsSteadyStateThroughCache) {
    WorkloadSpec spec;
    spec.sessions = 1;
    spec.tool_calls = 2;
    spec.seed = 3;
    const auto t = generate(spec).front();
    ProviderPolicy p = *find_builtin("claude-sonnet-4.5");
    for (auto cm : kModes) {
        p.mode = cm;
        p.granularity_tokens = 1;
        CacheStore store;
        const auto reqs = t.requests();
        ASSERT_EQ(reqs.size(), 3u);
        for (std::size_t k = 0; k < reqs.size(); ++k) {
            const auto prompt = apply_strategy(t.request_messages(reqs[k]), StrategyMode::ExcludeToolResults, k, 1, cm);
            const auto flat = flatten(prompt);
            const auto snap = store.entries();
            const auto got = store.lookup(flat, k, p).cached_tokens;
            EXPECT_EQ(got, oracle_lookup(snap, flat, k, p).cached_tokens);
            if (k > 0) {
                EXPECT_EQ(got, *expected_cacheable_prefix(StrategyMode::ExcludeToolResults, 10'000));
            }
            store.commit(flat, cacheable_limit(prompt, cm, flat.size()), k, p);
        }
    }
}

TEST(Strategy, InteriorSegments) {
    auto [a, b] = consecutive(2);
    (void)a;
    const auto p = apply_strategy(b, StrategyMode::ExcludeToolResults, 3, 9, CacheMode::Automatic);
    const auto flat = flatten(p);
    const auto segs = interior_segments(p, flat.size());
    ASSERT_EQ(segs.size(), 3u);
    EXPECT_EQ(segs.front().first, 10'002u);
    EXPECT_EQ(segs.back().second, p.breakers.back().position);
    EXPECT_TRUE(interior_segments(apply_strategy(b, StrategyMode::NoCache, 3, 9, CacheMode::Automatic), flat.size()).empty());
}
