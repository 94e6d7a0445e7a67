#pragma once

// Token model: sessions are represented as opaque token sequences with one
// role-tag token framing every message. No tokenizer is involved; only
// token counts and exact prefix equality matter to the simulator.

#include <pcsim/error.hpp>
#include <pcsim/seed.hpp>

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace pcsim {

struct Token {
    std::uint64_t id = 0;

    friend constexpr bool operator==(Token, Token) = default;
    friend constexpr auto operator<=>(Token, Token) = default;
};

using TokenSeq = std::vector<Token>;

enum class Role : std::uint8_t { System, Human, AI, ToolCall, ToolResult, Breaker };

inline constexpr std::array<Role, 6> kAllRoles = {Role::System,   Role::Human,      Role::AI,
                                                  Role::ToolCall, Role::ToolResult, Role::Breaker};

// Ids below this value are reserved for role tags; synthesized content
// never lands there.
inline constexpr std::uint64_t kFirstContentId = 16;

constexpr Token role_tag(Role r) noexcept { return Token{static_cast<std::uint64_t>(r) + 1}; }

constexpr std::string_view role_name(Role r) noexcept {
    switch (r) {
    case Role::System: return "system";
    case Role::Human: return "human";
    case Role::AI: return "ai";
    case Role::ToolCall: return "tool_call";
    case Role::ToolResult: return "tool_result";
    case Role::Breaker: return "breaker";
    }
    return "?";
}

inline std::optional<Role> parse_role(std::string_view s) noexcept {
    for (Role r : kAllRoles)
        if (role_name(r) == s) return r;
    return std::nullopt;
}

constexpr bool is_model_output(Role r) noexcept { return r == Role::AI || r == Role::ToolCall; }

struct Message {
    Role role = Role::System;
    TokenSeq tokens;
    std::size_t origin_turn = 0;

    friend bool operator==(const Message&, const Message&) = default;
};

// Where a cache breaker sits relative to the conversation.
enum class BreakerSite : std::uint8_t { AtStart, AfterSystem, AfterToolResult };

struct BreakerMark {
    std::size_t position = 0; // index of the breaker token in the flattened prompt
    BreakerSite site = BreakerSite::AtStart;

    friend bool operator==(const BreakerMark&, const BreakerMark&) = default;
};

struct Prompt {
    std::vector<Message> messages;
    // Explicit cacheable boundaries (token positions); only consulted by
    // breakpoint-mode policies.
    std::vector<std::size_t> breakpoints;
    // Breaker tokens spliced into message content by the strategy layer.
    std::vector<BreakerMark> breakers;

    friend bool operator==(const Prompt&, const Prompt&) = default;
};

// Maps a raw 64-bit draw into the content id range.
constexpr Token content_token(std::uint64_t raw) noexcept {
    return Token{raw < kFirstContentId ? raw + kFirstContentId : raw};
}

// The i-th token of the stream identified by stream_seed. Streams are
// counter-based, so synth_tokens(n, s) is a prefix of synth_tokens(m, s).
constexpr Token stream_token(std::uint64_t stream_seed, std::uint64_t index) noexcept {
    return content_token(mix64(mix64(stream_seed) + (index + 1) * kGoldenGamma));
}

inline TokenSeq synth_tokens(std::size_t count, std::uint64_t stream_seed) {
    if (count == 0) throw InvalidArgument("synth_tokens: count must be >= 1");
    TokenSeq out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(stream_token(stream_seed, i));
    return out;
}

inline std::size_t flattened_length(const std::vector<Message>& messages) noexcept {
    std::size_t n = messages.size();
    for (const auto& m : messages) n += m.tokens.size();
    return n;
}

// Role tag followed by the message tokens, for every message in order.
inline TokenSeq flatten(const std::vector<Message>& messages) {
    TokenSeq out;
    out.reserve(flattened_length(messages));
    for (const auto& m : messages) {
        out.push_back(role_tag(m.role));
        out.insert(out.end(), m.tokens.begin(), m.tokens.end());
    }
    return out;
}

inline TokenSeq flatten(const Prompt& prompt) { return flatten(prompt.messages); }

inline bool breakpoints_valid(const Prompt& prompt) noexcept {
    const std::size_t total = flattened_length(prompt.messages);
    for (std::size_t i = 0; i < prompt.breakpoints.size(); ++i) {
        if (prompt.breakpoints[i] > total) return false;
        if (i > 0 && prompt.breakpoints[i] <= prompt.breakpoints[i - 1]) return false;
    }
    return true;
}

} // namespace pcsim
