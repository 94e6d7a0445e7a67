#pragma once

#include <cstdint>

namespace pcsim {

// Token accounting for one API call. uncached_input + cached_read is the
// full flattened prompt; cache_write counts tokens newly stored by the call
// (they are also part of uncached_input).
struct UsageRecord {
    std::int64_t uncached_input = 0;
    std::int64_t cached_read = 0;
    std::int64_t cache_write = 0;
    std::int64_t output = 0;

    std::int64_t prompt_tokens() const noexcept { return uncached_input + cached_read; }

    UsageRecord& operator+=(const UsageRecord& o) noexcept {
        uncached_input += o.uncached_input;
        cached_read += o.cached_read;
        cache_write += o.cache_write;
        output += o.output;
        return *this;
    }

    friend UsageRecord operator+(UsageRecord a, const UsageRecord& b) noexcept { return a += b; }
    friend bool operator==(const UsageRecord&, const UsageRecord&) = default;
};

} // namespace pcsim
