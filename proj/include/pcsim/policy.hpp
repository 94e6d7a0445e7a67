#pragma once

// Provider caching rules and price schedules.
//
// The four built-in policies carry the token prices and minimum cacheable
// prompt lengths published by the providers in early January 2026. Block
// granularity, TTL and TTL refresh behaviour are not published per model;
// the defaults below are assumptions and every one of them can be
// overridden through the JSON form of a policy.

#include <pcsim/error.hpp>
#include <pcsim/json_util.hpp>
#include <pcsim/usage.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcsim {

// USD per million tokens unless noted.
struct PriceSchedule {
    double input_per_mtok = 0.0;
    double output_per_mtok = 0.0;
    double cached_read_per_mtok = 0.0;
    std::optional<double> cache_write_per_mtok;
    std::optional<double> storage_per_mtok_hour;
    // Calls whose prompt exceeds this many tokens are billed at tier-2 rates.
    std::optional<std::int64_t> tier_boundary_tokens;
    std::optional<double> tier2_input_per_mtok;
    std::optional<double> tier2_output_per_mtok;
    std::optional<double> tier2_cached_read_per_mtok;

    friend bool operator==(const PriceSchedule&, const PriceSchedule&) = default;
};

enum class CacheMode : std::uint8_t { Automatic, ExplicitBreakpoints, ExplicitCacheObject };

constexpr std::string_view cache_mode_name(CacheMode m) noexcept {
    switch (m) {
    case CacheMode::Automatic: return "automatic";
    case CacheMode::ExplicitBreakpoints: return "explicit-breakpoints";
    case CacheMode::ExplicitCacheObject: return "explicit-cache-object";
    }
    return "?";
}

inline std::optional<CacheMode> parse_cache_mode(std::string_view s) noexcept {
    for (auto m : {CacheMode::Automatic, CacheMode::ExplicitBreakpoints, CacheMode::ExplicitCacheObject})
        if (cache_mode_name(m) == s) return m;
    return std::nullopt;
}

struct ProviderPolicy {
    std::string name;
    std::int64_t min_cache_tokens = 1024;
    std::int64_t granularity_tokens = 128;
    double ttl_seconds = 300.0;
    bool refresh_on_read = false;
    CacheMode mode = CacheMode::Automatic;
    // Lets Automatic policies also reuse content that follows a mid-prompt
    // breaker, as if each breaker-delimited segment were its own prefix.
    bool opportunistic_segments = false;
    PriceSchedule prices;

    friend bool operator==(const ProviderPolicy&, const ProviderPolicy&) = default;
};

inline constexpr std::int64_t kAutomaticGranularity = 128;
inline constexpr std::int64_t kBreakpointGranularity = 1;
inline constexpr double kDefaultTtlSeconds = 300.0;

inline void validate(const PriceSchedule& p, const std::string& where) {
    auto nonneg = [&](double v, const char* field) {
        if (!(v >= 0.0)) throw ValidationError(where + ".prices." + field + ": must be >= 0");
    };
    nonneg(p.input_per_mtok, "input_per_mtok");
    nonneg(p.output_per_mtok, "output_per_mtok");
    nonneg(p.cached_read_per_mtok, "cached_read_per_mtok");
    if (p.cache_write_per_mtok) nonneg(*p.cache_write_per_mtok, "cache_write_per_mtok");
    if (p.storage_per_mtok_hour) nonneg(*p.storage_per_mtok_hour, "storage_per_mtok_hour");
    if (!(p.cached_read_per_mtok < p.input_per_mtok))
        throw ValidationError(where + ".prices: cached_read_per_mtok must be below input_per_mtok");
    if (p.tier_boundary_tokens) {
        if (!p.tier2_input_per_mtok || !p.tier2_output_per_mtok || !p.tier2_cached_read_per_mtok)
            throw ValidationError(where + ".prices: tier_boundary_tokens requires all tier2 prices");
        if (*p.tier_boundary_tokens < 0)
            throw ValidationError(where + ".prices.tier_boundary_tokens: must be >= 0");
        if (!(*p.tier2_cached_read_per_mtok < *p.tier2_input_per_mtok))
            throw ValidationError(where + ".prices: tier2 cached read must be below tier2 input");
    }
}

inline void validate(const ProviderPolicy& p) {
    const std::string where = p.name.empty() ? std::string("policy") : "policy " + p.name;
    if (p.name.empty()) throw ValidationError("policy: name must be non-empty");
    if (p.granularity_tokens < 1) throw ValidationError(where + ": granularity_tokens must be >= 1");
    if (p.min_cache_tokens < p.granularity_tokens)
        throw ValidationError(where + ": min_cache_tokens must be >= granularity_tokens");
    if (!(p.ttl_seconds > 0.0)) throw ValidationError(where + ": ttl_seconds must be > 0");
    validate(p.prices, where);
}

inline std::vector<ProviderPolicy> builtin_policies() {
    std::vector<ProviderPolicy> out;

    ProviderPolicy gpt4o;
    gpt4o.name = "gpt-4o";
    gpt4o.min_cache_tokens = 1024;
    gpt4o.granularity_tokens = kAutomaticGranularity;
    gpt4o.mode = CacheMode::Automatic;
    gpt4o.prices = {.input_per_mtok = 2.50, .output_per_mtok = 10.00, .cached_read_per_mtok = 1.25};
    out.push_back(gpt4o);

    ProviderPolicy gpt52;
    gpt52.name = "gpt-5.2";
    gpt52.min_cache_tokens = 1024;
    gpt52.granularity_tokens = kAutomaticGranularity;
    gpt52.mode = CacheMode::Automatic;
    gpt52.prices = {.input_per_mtok = 1.75, .output_per_mtok = 14.00, .cached_read_per_mtok = 0.175};
    out.push_back(gpt52);

    ProviderPolicy claude;
    claude.name = "claude-sonnet-4.5";
    claude.min_cache_tokens = 1024;
    claude.granularity_tokens = kBreakpointGranularity;
    claude.refresh_on_read = true;
    claude.mode = CacheMode::ExplicitBreakpoints;
    claude.prices = {.input_per_mtok = 3.00,
                     .output_per_mtok = 15.00,
                     .cached_read_per_mtok = 0.30,
                     .cache_write_per_mtok = 3.75};
    out.push_back(claude);

    ProviderPolicy gemini;
    gemini.name = "gemini-2.5-pro";
    gemini.min_cache_tokens = 4096;
    gemini.granularity_tokens = kAutomaticGranularity;
    gemini.mode = CacheMode::Automatic;
    gemini.prices = {.input_per_mtok = 1.25,
                     .output_per_mtok = 10.00,
                     .cached_read_per_mtok = 0.125,
                     .storage_per_mtok_hour = 4.50,
                     .tier_boundary_tokens = 200'000,
                     .tier2_input_per_mtok = 2.50,
                     .tier2_output_per_mtok = 15.00,
                     .tier2_cached_read_per_mtok = 0.250};
    out.push_back(gemini);

    for (auto& p : out) p.ttl_seconds = kDefaultTtlSeconds;
    return out;
}

inline std::optional<ProviderPolicy> find_builtin(std::string_view name) {
    for (auto& p : builtin_policies())
        if (p.name == name) return p;
    return std::nullopt;
}

// Cost of one call. When the schedule is tiered and the call's prompt is
// above the boundary, every rate of the call uses the tier-2 price.
inline double price_call(const UsageRecord& usage, const ProviderPolicy& policy,
                         std::int64_t prompt_total_tokens) {
    if (usage.uncached_input < 0 || usage.cached_read < 0 || usage.cache_write < 0 || usage.output < 0)
        throw InvalidArgument("price_call: token counts must be non-negative");
    const PriceSchedule& p = policy.prices;
    double input = p.input_per_mtok;
    double output = p.output_per_mtok;
    double cached = p.cached_read_per_mtok;
    if (p.tier_boundary_tokens && prompt_total_tokens > *p.tier_boundary_tokens) {
        input = *p.tier2_input_per_mtok;
        output = *p.tier2_output_per_mtok;
        cached = *p.tier2_cached_read_per_mtok;
    }
    const double write = p.cache_write_per_mtok.value_or(0.0);
    auto term = [](std::int64_t n, double per_mtok) { return static_cast<double>(n) * per_mtok / 1e6; };
    return term(usage.uncached_input, input) + term(usage.cached_read, cached) +
           term(usage.cache_write, write) + term(usage.output, output);
}

inline double price_storage(std::int64_t cached_tokens, double hours, const ProviderPolicy& policy) {
    if (!policy.prices.storage_per_mtok_hour) return 0.0;
    return static_cast<double>(cached_tokens) * hours * *policy.prices.storage_per_mtok_hour / 1e6;
}

// JSON form. Optional prices are omitted when absent.

inline nlohmann::json to_json_value(const PriceSchedule& p) {
    nlohmann::json j = {{"input_per_mtok", p.input_per_mtok},
                        {"output_per_mtok", p.output_per_mtok},
                        {"cached_read_per_mtok", p.cached_read_per_mtok}};
    if (p.cache_write_per_mtok) j["cache_write_per_mtok"] = *p.cache_write_per_mtok;
    if (p.storage_per_mtok_hour) j["storage_per_mtok_hour"] = *p.storage_per_mtok_hour;
    if (p.tier_boundary_tokens) j["tier_boundary_tokens"] = *p.tier_boundary_tokens;
    if (p.tier2_input_per_mtok) j["tier2_input_per_mtok"] = *p.tier2_input_per_mtok;
    if (p.tier2_output_per_mtok) j["tier2_output_per_mtok"] = *p.tier2_output_per_mtok;
    if (p.tier2_cached_read_per_mtok) j["tier2_cached_read_per_mtok"] = *p.tier2_cached_read_per_mtok;
    return j;
}

inline nlohmann::json to_json_value(const ProviderPolicy& p) {
    return {{"name", p.name},
            {"min_cache_tokens", p.min_cache_tokens},
            {"granularity_tokens", p.granularity_tokens},
            {"ttl_seconds", p.ttl_seconds},
            {"refresh_on_read", p.refresh_on_read},
            {"mode", std::string(cache_mode_name(p.mode))},
            {"opportunistic_segments", p.opportunistic_segments},
            {"prices", to_json_value(p.prices)}};
}

// Reads fields present in j on top of base. Used both for full policy
// documents (base default-constructed) and for overrides of a built-in.
inline PriceSchedule price_schedule_from_json(const nlohmann::json& j, const std::string& path,
                                              PriceSchedule base = {}) {
    using namespace json_util;
    expect_object(j, path);
    if (auto v = optional<double>(j, "input_per_mtok", path)) base.input_per_mtok = *v;
    if (auto v = optional<double>(j, "output_per_mtok", path)) base.output_per_mtok = *v;
    if (auto v = optional<double>(j, "cached_read_per_mtok", path)) base.cached_read_per_mtok = *v;
    if (auto v = optional<double>(j, "cache_write_per_mtok", path)) base.cache_write_per_mtok = *v;
    if (auto v = optional<double>(j, "storage_per_mtok_hour", path)) base.storage_per_mtok_hour = *v;
    if (auto v = optional<std::int64_t>(j, "tier_boundary_tokens", path)) base.tier_boundary_tokens = *v;
    if (auto v = optional<double>(j, "tier2_input_per_mtok", path)) base.tier2_input_per_mtok = *v;
    if (auto v = optional<double>(j, "tier2_output_per_mtok", path)) base.tier2_output_per_mtok = *v;
    if (auto v = optional<double>(j, "tier2_cached_read_per_mtok", path))
        base.tier2_cached_read_per_mtok = *v;
    return base;
}

inline ProviderPolicy policy_fields_from_json(const nlohmann::json& j, const std::string& path,
                                              ProviderPolicy base) {
    using namespace json_util;
    expect_object(j, path);
    if (auto v = optional<std::string>(j, "name", path)) base.name = *v;
    if (auto v = optional<std::int64_t>(j, "min_cache_tokens", path)) base.min_cache_tokens = *v;
    if (auto v = optional<std::int64_t>(j, "granularity_tokens", path)) base.granularity_tokens = *v;
    if (auto v = optional<double>(j, "ttl_seconds", path)) base.ttl_seconds = *v;
    if (auto v = optional<bool>(j, "refresh_on_read", path)) base.refresh_on_read = *v;
    if (auto v = optional<bool>(j, "opportunistic_segments", path)) base.opportunistic_segments = *v;
    if (auto v = optional<std::string>(j, "mode", path)) {
        auto m = parse_cache_mode(*v);
        if (!m) throw ConfigError(join_path(path, "mode") + ": unknown cache mode '" + *v + "'");
        base.mode = *m;
    }
    if (auto it = j.find("prices"); it != j.end())
        base.prices = price_schedule_from_json(*it, join_path(path, "prices"), base.prices);
    return base;
}

// Accepts a built-in name ("gpt-4o"), an override object with a "base"
// field naming a built-in, or a complete inline policy object.
inline ProviderPolicy policy_from_json(const nlohmann::json& j, const std::string& path = "policy") {
    using namespace json_util;
    ProviderPolicy out;
    if (j.is_string()) {
        auto p = find_builtin(j.get<std::string>());
        if (!p) throw ConfigError(path + ": unknown built-in policy '" + j.get<std::string>() + "'");
        out = *p;
    } else {
        expect_object(j, path);
        if (auto base = optional<std::string>(j, "base", path)) {
            auto p = find_builtin(*base);
            if (!p) throw ConfigError(join_path(path, "base") + ": unknown built-in policy '" + *base + "'");
            out = policy_fields_from_json(j, path, *p);
        } else {
            for (const char* key : {"name", "min_cache_tokens", "mode", "prices"})
                if (!j.contains(key)) throw ConfigError(join_path(path, key) + ": missing required field");
            ProviderPolicy blank;
            blank.ttl_seconds = kDefaultTtlSeconds;
            out = policy_fields_from_json(j, path, blank);
            if (!j.contains("granularity_tokens"))
                out.granularity_tokens =
                    out.mode == CacheMode::Automatic ? kAutomaticGranularity : kBreakpointGranularity;
        }
    }
    try {
        validate(out);
    } catch (const ValidationError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return out;
}

} // namespace pcsim
