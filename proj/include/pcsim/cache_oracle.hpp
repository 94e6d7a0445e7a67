#pragma once

// Reference lookup: linear scan over a store snapshot with token-by-token
// comparison. Shares no code with the trie walk in CacheStore beyond the
// liveness and rounding rules, and never mutates anything.

#include <pcsim/cache_store.hpp>

#include <span>

namespace pcsim {

inline CacheMatch oracle_lookup(std::span<const CacheEntry> snapshot, std::span<const Token> prompt,
                                double now, const ProviderPolicy& policy) {
    std::size_t best = 0;
    for (const CacheEntry& e : snapshot) {
        if (!entry_live(e, now, policy)) continue;
        std::size_t i = 0;
        while (i < e.prefix.size() && i < prompt.size() && e.prefix[i] == prompt[i]) ++i;
        if (i > best) best = i;
    }
    return make_match(best, policy);
}

} // namespace pcsim
