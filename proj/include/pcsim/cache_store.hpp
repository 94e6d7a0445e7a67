#pragma once

// Simulated provider-side prefix cache.
//
// Entries are token prefixes with creation and last-use timestamps in
// virtual seconds. Lookups return the longest exact prefix shared with any
// live entry, rounded down to the policy's block granularity and zeroed
// below the policy's minimum cacheable length.
//
// Storage is a compressed token trie. Each edge is a span into an
// immutable token buffer, so prefixes shared by many entries (the system
// prompt, a growing conversation) are held once. Every node carries the
// newest creation and last-use time found in its subtree, which lets a
// lookup stop descending as soon as no live entry remains below it.

#include <pcsim/error.hpp>
#include <pcsim/policy.hpp>
#include <pcsim/token.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace pcsim {

struct CacheEntry {
    TokenSeq prefix;
    double created_at = 0.0;
    double last_used_at = 0.0;

    friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

struct CacheMatch {
    // 0, or a multiple of the granularity that is >= min_cache_tokens.
    std::int64_t cached_tokens = 0;
    // Unrounded common-prefix length with the matched entries, present on a
    // hit. Every live entry sharing this prefix is a matched entry.
    std::optional<std::size_t> matched_prefix_length;

    friend bool operator==(const CacheMatch&, const CacheMatch&) = default;
};

inline bool entry_live(double created_at, double last_used_at, double now, const ProviderPolicy& policy) {
    const double ref = policy.refresh_on_read ? last_used_at : created_at;
    return now - ref <= policy.ttl_seconds;
}

inline bool entry_live(const CacheEntry& e, double now, const ProviderPolicy& policy) {
    return entry_live(e.created_at, e.last_used_at, now, policy);
}

// Largest granularity multiple <= length, or 0 when that falls below the
// minimum cacheable length.
inline std::int64_t cacheable_tokens(std::size_t length, const ProviderPolicy& policy) {
    const auto g = static_cast<std::size_t>(policy.granularity_tokens);
    const auto rounded = static_cast<std::int64_t>(length / g * g);
    return rounded >= policy.min_cache_tokens ? rounded : 0;
}

inline CacheMatch make_match(std::size_t common_prefix, const ProviderPolicy& policy) {
    CacheMatch m;
    m.cached_tokens = cacheable_tokens(common_prefix, policy);
    if (m.cached_tokens > 0) m.matched_prefix_length = common_prefix;
    return m;
}

class CacheStore {
public:
    CacheStore() : root_(std::make_unique<Node>()) {}

    CacheStore(const CacheStore&) = delete;
    CacheStore& operator=(const CacheStore&) = delete;
    CacheStore(CacheStore&&) noexcept = default;
    CacheStore& operator=(CacheStore&&) noexcept = default;

    // Longest live prefix match. On a hit with refresh_on_read, every
    // matched live entry has its last-use time set to now.
    CacheMatch lookup(std::span<const Token> prompt, double now, const ProviderPolicy& policy) {
        auto [common, hit] = walk(prompt, now, policy);
        CacheMatch m = make_match(common, policy);
        if (m.cached_tokens > 0 && policy.refresh_on_read && hit) {
            Node* n = const_cast<Node*>(hit);
            refresh_subtree(*n, now, policy);
            update_ancestors(n->parent);
        }
        return m;
    }

    // Same result as lookup, without touching timestamps.
    CacheMatch peek(std::span<const Token> prompt, double now, const ProviderPolicy& policy) const {
        return make_match(walk(prompt, now, policy).first, policy);
    }

    // Stores prompt[0, W) where W is the cacheable limit rounded down to the
    // granularity, if W reaches the policy minimum. Returns the number of
    // tokens newly cached beyond what a lookup at `now` already serves.
    std::int64_t commit(std::span<const Token> prompt, std::size_t cacheable_limit, double now,
                        const ProviderPolicy& policy) {
        if (cacheable_limit > prompt.size())
            throw InvalidArgument("commit: cacheable_limit " + std::to_string(cacheable_limit) +
                                  " exceeds prompt length " + std::to_string(prompt.size()));
        const auto g = static_cast<std::size_t>(policy.granularity_tokens);
        const std::size_t w = cacheable_limit / g * g;
        if (static_cast<std::int64_t>(w) < policy.min_cache_tokens) return 0;
        const std::int64_t already = peek(prompt, now, policy).cached_tokens;
        const std::int64_t written = static_cast<std::int64_t>(w) - already;
        if (written <= 0) return 0;
        insert(prompt.first(w), now);
        return written;
    }

    std::size_t purge_expired(double now, const ProviderPolicy& policy) {
        std::size_t removed = purge(*root_, now, policy);
        entry_count_ -= removed;
        return removed;
    }

    // Snapshot of every stored entry, live or not, in lexicographic prefix
    // order.
    std::vector<CacheEntry> entries() const {
        std::vector<CacheEntry> out;
        out.reserve(entry_count_);
        TokenSeq path;
        collect(*root_, path, out);
        return out;
    }

    std::size_t size() const noexcept { return entry_count_; }
    bool empty() const noexcept { return entry_count_ == 0; }

    // Distinct tokens held across all trie edges.
    std::size_t stored_tokens() const { return count_tokens(*root_); }

    void clear() {
        root_ = std::make_unique<Node>();
        entry_count_ = 0;
    }

    // One JSON object per entry: prefix length and timestamps only.
    void dump_jsonl(std::ostream& os) const {
        for (const auto& e : entries()) {
            nlohmann::json j = {{"length", e.prefix.size()},
                                {"created_at", e.created_at},
                                {"last_used_at", e.last_used_at}};
            os << j.dump() << '\n';
        }
    }

private:
    static constexpr double kNever = -std::numeric_limits<double>::infinity();

    struct Node {
        std::shared_ptr<const TokenSeq> buffer;
        std::size_t offset = 0;
        std::size_t length = 0;
        std::size_t depth = 0; // prefix length at the end of this node's edge
        Node* parent = nullptr;
        std::map<Token, std::unique_ptr<Node>> children;

        bool has_entry = false;
        double created_at = 0.0;
        double last_used_at = 0.0;

        double newest_created = kNever;
        double newest_used = kNever;

        std::span<const Token> edge() const { return {buffer->data() + offset, length}; }
    };

    static bool subtree_live(const Node& n, double now, const ProviderPolicy& policy) {
        const double ref = policy.refresh_on_read ? n.newest_used : n.newest_created;
        return now - ref <= policy.ttl_seconds;
    }

    static void recompute(Node& n) {
        n.newest_created = n.has_entry ? n.created_at : kNever;
        n.newest_used = n.has_entry ? n.last_used_at : kNever;
        for (const auto& [_, c] : n.children) {
            n.newest_created = std::max(n.newest_created, c->newest_created);
            n.newest_used = std::max(n.newest_used, c->newest_used);
        }
    }

    static void update_ancestors(Node* n) {
        for (; n; n = n->parent) recompute(*n);
    }

    // Returns the longest common prefix with any live entry and the node
    // whose subtree holds exactly the entries achieving it.
    std::pair<std::size_t, const Node*> walk(std::span<const Token> prompt, double now,
                                             const ProviderPolicy& policy) const {
        const Node* node = root_.get();
        const Node* hit = nullptr;
        std::size_t pos = 0;
        while (pos < prompt.size()) {
            auto it = node->children.find(prompt[pos]);
            if (it == node->children.end()) break;
            const Node& child = *it->second;
            if (!subtree_live(child, now, policy)) break;
            auto edge = child.edge();
            const std::size_t limit = std::min(edge.size(), prompt.size() - pos);
            const auto rest = prompt.subspan(pos, limit);
            const std::size_t k = static_cast<std::size_t>(
                std::mismatch(edge.begin(), edge.begin() + static_cast<std::ptrdiff_t>(limit), rest.begin())
                    .first -
                edge.begin());
            pos += k;
            hit = &child;
            if (k < edge.size()) break;
            node = &child;
        }
        return {pos, hit};
    }

    static void refresh_subtree(Node& n, double now, const ProviderPolicy& policy) {
        if (n.has_entry && entry_live(n.created_at, n.last_used_at, now, policy))
            n.last_used_at = std::max(n.last_used_at, now);
        for (auto& [_, c] : n.children)
            if (subtree_live(*c, now, policy)) refresh_subtree(*c, now, policy);
        recompute(n);
    }

    void insert(std::span<const Token> prefix, double now) {
        Node* node = root_.get();
        std::size_t pos = 0;
        while (pos < prefix.size()) {
            auto it = node->children.find(prefix[pos]);
            if (it == node->children.end()) {
                auto leaf = std::make_unique<Node>();
                leaf->buffer = std::make_shared<const TokenSeq>(prefix.begin() + static_cast<std::ptrdiff_t>(pos),
                                                                prefix.end());
                leaf->length = leaf->buffer->size();
                leaf->depth = prefix.size();
                leaf->parent = node;
                Node* raw = leaf.get();
                node->children.emplace(prefix[pos], std::move(leaf));
                node = raw;
                pos = prefix.size();
                break;
            }
            Node& child = *it->second;
            auto edge = child.edge();
            const std::size_t limit = std::min(edge.size(), prefix.size() - pos);
            const auto rest = prefix.subspan(pos, limit);
            const std::size_t k = static_cast<std::size_t>(
                std::mismatch(edge.begin(), edge.begin() + static_cast<std::ptrdiff_t>(limit), rest.begin())
                    .first -
                edge.begin());
            if (k == edge.size()) {
                node = &child;
                pos += k;
                continue;
            }
            // Split the edge after k tokens.
            auto mid = std::make_unique<Node>();
            mid->buffer = child.buffer;
            mid->offset = child.offset;
            mid->length = k;
            mid->depth = pos + k;
            mid->parent = node;
            std::unique_ptr<Node> lower = std::move(it->second);
            lower->offset += k;
            lower->length -= k;
            lower->parent = mid.get();
            const Token lower_key = (*lower->buffer)[lower->offset];
            mid->children.emplace(lower_key, std::move(lower));
            recompute(*mid);
            Node* raw = mid.get();
            it->second = std::move(mid);
            node = raw;
            pos += k;
        }
        if (!node->has_entry) ++entry_count_;
        node->has_entry = true;
        node->created_at = now;
        node->last_used_at = now;
        update_ancestors(node);
    }

    static std::size_t purge(Node& n, double now, const ProviderPolicy& policy) {
        std::size_t removed = 0;
        for (auto it = n.children.begin(); it != n.children.end();) {
            Node& c = *it->second;
            removed += purge(c, now, policy);
            if (c.has_entry && !entry_live(c.created_at, c.last_used_at, now, policy)) {
                c.has_entry = false;
                ++removed;
                recompute(c);
            }
            if (!c.has_entry && c.children.empty())
                it = n.children.erase(it);
            else
                ++it;
        }
        recompute(n);
        return removed;
    }

    static void collect(const Node& n, TokenSeq& path, std::vector<CacheEntry>& out) {
        if (n.has_entry) out.push_back({path, n.created_at, n.last_used_at});
        for (const auto& [_, c] : n.children) {
            auto edge = c->edge();
            path.insert(path.end(), edge.begin(), edge.end());
            collect(*c, path, out);
            path.resize(path.size() - edge.size());
        }
    }

    static std::size_t count_tokens(const Node& n) {
        std::size_t total = n.length;
        for (const auto& [_, c] : n.children) total += count_tokens(*c);
        return total;
    }

    std::unique_ptr<Node> root_;
    std::size_t entry_count_ = 0;
};

// Free-function forms.

inline CacheMatch lookup(CacheStore& store, std::span<const Token> prompt, double now,
                         const ProviderPolicy& policy) {
    return store.lookup(prompt, now, policy);
}

inline std::int64_t commit(CacheStore& store, std::span<const Token> prompt, std::size_t cacheable_limit,
                           double now, const ProviderPolicy& policy) {
    return store.commit(prompt, cacheable_limit, now, policy);
}

inline std::size_t purge_expired(CacheStore& store, double now, const ProviderPolicy& policy) {
    return store.purge_expired(now, policy);
}

} // namespace pcsim
