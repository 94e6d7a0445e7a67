#pragma once

// Seed derivation.
//
// Every random stream in the simulator is addressed by a path of labels
// rooted at the experiment's master seed, e.g.
//
//   master -> "gpt-4o|system-prompt" -> "breaker:s0007" -> request index
//
// Each step is derive_seed(parent, label). Streams never depend on the
// order in which siblings were created, so adding a condition, a session
// or a policy leaves every other stream untouched.

#include <cstdint>
#include <string_view>

namespace pcsim {

// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    return mix64(mix64(parent) + (index + 1) * kGoldenGamma);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept {
    return mix64(mix64(parent ^ kGoldenGamma) ^ fnv1a64(label));
}

} // namespace pcsim
