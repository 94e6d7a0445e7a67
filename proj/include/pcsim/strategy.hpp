#pragma once

// Cache strategies as prompt transformations.
//
// A breaker is a single fresh token spliced into message content: prepended
// to the system prompt (no-cache), appended to it (system-prompt), or
// appended to the system prompt and to every tool result
// (exclude-tool-results). Breaker tokens are derived from
// (session seed, request index, breaker ordinal), so each request gets new
// ones and no exact-prefix match can extend past a breaker.

#include <pcsim/error.hpp>
#include <pcsim/policy.hpp>
#include <pcsim/seed.hpp>
#include <pcsim/token.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace pcsim {

enum class StrategyMode : std::uint8_t { NoCache, FullContext, SystemPromptOnly, ExcludeToolResults };

inline constexpr StrategyMode kAllStrategies[] = {StrategyMode::NoCache, StrategyMode::FullContext,
                                                  StrategyMode::SystemPromptOnly,
                                                  StrategyMode::ExcludeToolResults};

constexpr std::string_view strategy_name(StrategyMode m) noexcept {
    switch (m) {
    case StrategyMode::NoCache: return "no-cache";
    case StrategyMode::FullContext: return "full-context";
    case StrategyMode::SystemPromptOnly: return "system-prompt";
    case StrategyMode::ExcludeToolResults: return "exclude-tool-results";
    }
    return "?";
}

inline std::optional<StrategyMode> parse_strategy(std::string_view s) noexcept {
    for (auto m : kAllStrategies)
        if (strategy_name(m) == s) return m;
    return std::nullopt;
}

inline Token breaker_token(std::uint64_t session_seed, std::uint64_t request_index,
                           std::uint64_t position_index) noexcept {
    return content_token(mix64(derive_seed(derive_seed(session_seed, request_index), position_index)));
}

inline void validate_request_messages(const std::vector<Message>& messages) {
    if (messages.empty() || messages.front().role != Role::System)
        throw InvalidArgument("apply_strategy: request must begin with a System message");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (messages[i].tokens.empty())
            throw InvalidArgument("apply_strategy: message " + std::to_string(i) + " has no tokens");
        if (i > 0 && messages[i].role == Role::System)
            throw InvalidArgument("apply_strategy: more than one System message");
        if (messages[i].role == Role::Breaker)
            throw InvalidArgument("apply_strategy: Breaker messages are reserved for the strategy layer");
    }
}

inline Prompt apply_strategy(const std::vector<Message>& messages, StrategyMode mode,
                             std::uint64_t request_index, std::uint64_t session_seed, CacheMode policy_mode) {
    validate_request_messages(messages);
    Prompt prompt;
    prompt.messages = messages;
    const bool explicit_boundaries = policy_mode != CacheMode::Automatic;
    const std::size_t system_end = 1 + messages.front().tokens.size();

    std::uint64_t ordinal = 0;
    auto next_breaker = [&] { return breaker_token(session_seed, request_index, ordinal++); };

    switch (mode) {
    case StrategyMode::NoCache: {
        auto& sys = prompt.messages.front().tokens;
        sys.insert(sys.begin(), next_breaker());
        prompt.breakers.push_back({1, BreakerSite::AtStart});
        break;
    }
    case StrategyMode::FullContext:
        if (explicit_boundaries) prompt.breakpoints.push_back(flattened_length(prompt.messages));
        break;
    case StrategyMode::SystemPromptOnly:
    case StrategyMode::ExcludeToolResults: {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < prompt.messages.size(); ++i) {
            auto& m = prompt.messages[i];
            const bool after = i == 0 || (mode == StrategyMode::ExcludeToolResults && m.role == Role::ToolResult);
            pos += 1 + m.tokens.size();
            if (after) {
                m.tokens.push_back(next_breaker());
                prompt.breakers.push_back({pos, i == 0 ? BreakerSite::AfterSystem : BreakerSite::AfterToolResult});
                ++pos;
            }
        }
        if (explicit_boundaries) prompt.breakpoints.push_back(system_end);
        break;
    }
    }
    return prompt;
}

// Longest prefix the provider is asked to store for this prompt.
// Breakpoint-mode policies store up to their last breakpoint (nothing when
// there is none). Automatic policies store up to the first breaker, since
// nothing after a per-request breaker can be matched again, and the whole
// prompt when there are no breakers.
inline std::size_t cacheable_limit(const Prompt& prompt, CacheMode policy_mode, std::size_t flat_length) {
    if (policy_mode != CacheMode::Automatic) return prompt.breakpoints.empty() ? 0 : prompt.breakpoints.back();
    if (!prompt.breakers.empty()) return prompt.breakers.front().position;
    return flat_length;
}

// Token ranges [begin, end) that follow a mid-prompt breaker, up to the next
// breaker or the end of the prompt. Consulted only when a policy enables
// opportunistic segment caching.
inline std::vector<std::pair<std::size_t, std::size_t>> interior_segments(const Prompt& prompt,
                                                                          std::size_t flat_length) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < prompt.breakers.size(); ++i) {
        if (prompt.breakers[i].site == BreakerSite::AtStart) continue;
        const std::size_t begin = prompt.breakers[i].position + 1;
        const std::size_t end = i + 1 < prompt.breakers.size() ? prompt.breakers[i + 1].position : flat_length;
        if (end > begin) out.emplace_back(begin, end);
    }
    return out;
}

// Steady-state prefix shared between consecutive requests under ideal
// exact-prefix semantics; nullopt means it grows with the conversation.
constexpr std::optional<std::int64_t> expected_cacheable_prefix(StrategyMode mode,
                                                                std::int64_t system_tokens) noexcept {
    switch (mode) {
    case StrategyMode::NoCache: return 0;
    case StrategyMode::SystemPromptOnly:
    case StrategyMode::ExcludeToolResults: return system_tokens + 1;
    case StrategyMode::FullContext: return std::nullopt;
    }
    return 0;
}

} // namespace pcsim
