#pragma once

// Baseline comparisons: means, percentage improvement over the no-cache
// baseline, and two-sided independent-samples t-tests (Welch by default,
// pooled variance on request). Student-t tail probabilities come from the
// regularized incomplete beta function:
//
//   p = I_{dof / (dof + t^2)}(dof / 2, 1 / 2)

#include <pcsim/error.hpp>
#include <pcsim/replay.hpp>
#include <pcsim/strategy.hpp>

#include <boost/math/special_functions/beta.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcsim {

inline constexpr double kDefaultAlpha = 0.05;

enum class TTestKind : std::uint8_t { Welch, Pooled };

struct TTest {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0;
    // Both samples constant with different means: t is infinite, p is 0.
    bool zero_variance = false;

    friend bool operator==(const TTest&, const TTest&) = default;
};

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Two-sided tail probability P(|T| >= |t|) for Student's t with dof
// degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
    if (t == 0.0) return 1.0;
    if (std::isinf(t)) return 0.0;
    const double x = dof / (dof + t * t);
    return boost::math::ibeta(dof / 2.0, 0.5, x);
}

namespace detail {

inline void check_sample(std::span<const double> v, const char* which) {
    if (v.size() < 2)
        throw InvalidArgument(std::string("t-test: sample ") + which + " needs at least 2 values");
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument(std::string("t-test: sample ") + which + " has a non-finite value");
}

inline TTest degenerate(double mean_a, double mean_b, double dof) {
    TTest r;
    r.dof = dof;
    if (mean_a == mean_b) return r;
    r.t = mean_a > mean_b ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    r.zero_variance = true;
    return r;
}

} // namespace detail

inline TTest welch_t(std::span<const double> a, std::span<const double> b) {
    detail::check_sample(a, "a");
    detail::check_sample(b, "b");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double va = sample_variance(a) / na;
    const double vb = sample_variance(b) / nb;
    const double se2 = va + vb;
    if (se2 == 0.0) return detail::degenerate(ma, mb, na + nb - 2.0);
    TTest r;
    r.t = (ma - mb) / std::sqrt(se2);
    r.dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = student_t_two_sided_p(r.t, r.dof);
    return r;
}

inline TTest pooled_t(std::span<const double> a, std::span<const double> b) {
    detail::check_sample(a, "a");
    detail::check_sample(b, "b");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a);
    const double mb = mean(b);
    const double dof = na + nb - 2.0;
    const double sp2 = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / dof;
    const double se2 = sp2 * (1.0 / na + 1.0 / nb);
    if (se2 == 0.0) return detail::degenerate(ma, mb, dof);
    TTest r;
    r.t = (ma - mb) / std::sqrt(se2);
    r.dof = dof;
    r.p = student_t_two_sided_p(r.t, r.dof);
    return r;
}

struct Comparison {
    double baseline_mean = 0.0;
    double variant_mean = 0.0;
    double improvement_pct = 0.0; // positive when the variant is lower (better)
    double t_stat = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
    bool significant = false;
    bool zero_variance = false;

    friend bool operator==(const Comparison&, const Comparison&) = default;
};

inline double improvement_pct(double baseline, double variant) {
    if (baseline == 0.0) throw UndefinedImprovement("improvement undefined for a zero baseline mean");
    return 100.0 * (baseline - variant) / baseline;
}

inline Comparison compare(std::span<const double> baseline, std::span<const double> variant,
                          double alpha = kDefaultAlpha, TTestKind kind = TTestKind::Welch) {
    Comparison c;
    c.baseline_mean = mean(baseline);
    c.variant_mean = mean(variant);
    if (c.baseline_mean == 0.0) throw UndefinedImprovement("compare: baseline mean is zero");
    const TTest t = kind == TTestKind::Welch ? welch_t(baseline, variant) : pooled_t(baseline, variant);
    c.improvement_pct = improvement_pct(c.baseline_mean, c.variant_mean);
    c.t_stat = t.t;
    c.dof = t.dof;
    c.p_value = t.p;
    c.zero_variance = t.zero_variance;
    c.significant = t.p < alpha;
    return c;
}

enum class TtftSample : std::uint8_t { SessionMean, PerCall };

struct SummaryOptions {
    double alpha = kDefaultAlpha;
    TTestKind test = TTestKind::Welch;
    TtftSample ttft_sample = TtftSample::SessionMean;

    friend bool operator==(const SummaryOptions&, const SummaryOptions&) = default;
};

struct ModeReport {
    StrategyMode mode = StrategyMode::NoCache;
    std::size_t sessions = 0;
    double mean_cost_usd = 0.0;
    double mean_ttft_ms = 0.0;
    double normalized_cost_pct = 100.0; // baseline = 100
    double normalized_ttft_pct = 100.0;
    std::optional<Comparison> cost; // absent for the baseline itself
    std::optional<Comparison> ttft;
    UsageRecord warmup_usage;
    double warmup_cost_usd = 0.0;
};

struct PolicyReport {
    std::string policy;
    std::vector<ModeReport> modes;
    std::optional<StrategyMode> best_cost_mode;
    std::optional<StrategyMode> best_ttft_mode;
};

struct ExperimentReport {
    SummaryOptions options;
    std::vector<PolicyReport> policies;
};

inline std::vector<double> cost_sample(const ConditionResult& c) {
    std::vector<double> v;
    for (const auto& s : c.sessions) v.push_back(s.total_cost_usd);
    return v;
}

inline std::vector<double> ttft_sample(const ConditionResult& c, TtftSample kind) {
    std::vector<double> v;
    for (const auto& s : c.sessions) {
        if (kind == TtftSample::SessionMean) {
            v.push_back(s.mean_ttft_ms);
        } else {
            for (const auto& call : s.calls) v.push_back(call.ttft_ms);
        }
    }
    return v;
}

// Conditions are grouped by policy in order of first appearance; within a
// policy, modes keep their input order.
inline ExperimentReport summarize_experiment(const std::vector<ConditionResult>& results,
                                             const SummaryOptions& opts = {}) {
    ExperimentReport report;
    report.options = opts;
    std::vector<std::string> order;
    for (const auto& c : results)
        if (std::find(order.begin(), order.end(), c.policy) == order.end()) order.push_back(c.policy);

    for (const auto& name : order) {
        const ConditionResult* base = nullptr;
        for (const auto& c : results)
            if (c.policy == name && c.mode == StrategyMode::NoCache) base = &c;
        if (!base) throw ConfigError("summary: policy " + name + " has no no-cache baseline condition");

        const auto base_cost = cost_sample(*base);
        const auto base_ttft = ttft_sample(*base, opts.ttft_sample);
        const double base_cost_mean = mean(base_cost);
        const double base_ttft_mean = mean(base_ttft);

        PolicyReport pr;
        pr.policy = name;
        for (const auto& c : results) {
            if (c.policy != name) continue;
            ModeReport m;
            m.mode = c.mode;
            m.sessions = c.sessions.size();
            const auto cost = cost_sample(c);
            const auto ttft = ttft_sample(c, opts.ttft_sample);
            m.mean_cost_usd = mean(cost);
            m.mean_ttft_ms = mean(ttft);
            m.warmup_usage = c.warmup_usage;
            m.warmup_cost_usd = c.warmup_cost_usd;
            if (base_cost_mean != 0.0) m.normalized_cost_pct = 100.0 * m.mean_cost_usd / base_cost_mean;
            if (base_ttft_mean != 0.0) m.normalized_ttft_pct = 100.0 * m.mean_ttft_ms / base_ttft_mean;
            if (c.mode != StrategyMode::NoCache) {
                m.cost = compare(base_cost, cost, opts.alpha, opts.test);
                m.ttft = compare(base_ttft, ttft, opts.alpha, opts.test);
                auto better = [&](std::optional<StrategyMode> best, auto field) {
                    if (!best) return true;
                    for (const auto& prev : pr.modes)
                        if (prev.mode == *best) return (m.*field)->improvement_pct > (prev.*field)->improvement_pct;
                    return true;
                };
                if (better(pr.best_cost_mode, &ModeReport::cost)) pr.best_cost_mode = c.mode;
                if (better(pr.best_ttft_mode, &ModeReport::ttft)) pr.best_ttft_mode = c.mode;
            }
            pr.modes.push_back(m);
        }
        report.policies.push_back(std::move(pr));
    }
    return report;
}

inline nlohmann::json to_json_value(const Comparison& c) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"baseline_mean", c.baseline_mean},
            {"variant_mean", c.variant_mean},
            {"improvement_pct", c.improvement_pct},
            {"t_stat", num(c.t_stat)},
            {"dof", c.dof},
            {"p_value", c.p_value},
            {"significant", c.significant},
            {"zero_variance", c.zero_variance}};
}

inline nlohmann::json to_json_value(const ExperimentReport& r) {
    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : r.policies) {
        nlohmann::json modes = nlohmann::json::array();
        for (const auto& m : p.modes) {
            nlohmann::json j = {{"mode", std::string(strategy_name(m.mode))},
                                {"sessions", m.sessions},
                                {"mean_cost_usd", m.mean_cost_usd},
                                {"mean_ttft_ms", m.mean_ttft_ms},
                                {"normalized_cost_pct", m.normalized_cost_pct},
                                {"normalized_ttft_pct", m.normalized_ttft_pct},
                                {"warmup",
                                 {{"uncached_input", m.warmup_usage.uncached_input},
                                  {"cached_read", m.warmup_usage.cached_read},
                                  {"cache_write", m.warmup_usage.cache_write},
                                  {"output", m.warmup_usage.output},
                                  {"cost_usd", m.warmup_cost_usd}}}};
            if (m.cost) j["cost"] = to_json_value(*m.cost);
            if (m.ttft) j["ttft"] = to_json_value(*m.ttft);
            modes.push_back(std::move(j));
        }
        nlohmann::json pj = {{"policy", p.policy}, {"modes", std::move(modes)}};
        pj["best_cost_mode"] = p.best_cost_mode ? nlohmann::json(strategy_name(*p.best_cost_mode)) : nlohmann::json();
        pj["best_ttft_mode"] = p.best_ttft_mode ? nlohmann::json(strategy_name(*p.best_ttft_mode)) : nlohmann::json();
        policies.push_back(std::move(pj));
    }
    return {{"alpha", r.options.alpha},
            {"t_test", r.options.test == TTestKind::Welch ? "welch" : "pooled"},
            {"ttft_sample", r.options.ttft_sample == TtftSample::SessionMean ? "session-mean" : "per-call"},
            {"policies", std::move(policies)}};
}

inline constexpr const char* kSummaryCsvHeader =
    "policy,mode,metric,baseline_mean,variant_mean,improvement_pct,normalized_pct,t_stat,dof,p_value,significant";

inline void write_summary_csv(const ExperimentReport& r, std::ostream& os) {
    os << kSummaryCsvHeader << '\n';
    for (const auto& p : r.policies) {
        const ModeReport* base = nullptr;
        for (const auto& m : p.modes)
            if (m.mode == StrategyMode::NoCache) base = &m;
        for (const auto& m : p.modes) {
            auto row = [&](const char* metric, double base_mean, double value, double normalized,
                           const std::optional<Comparison>& c) {
                os << p.policy << ',' << strategy_name(m.mode) << ',' << metric << ',' << format_double(base_mean)
                   << ',' << format_double(value) << ',';
                if (c) {
                    os << format_double(c->improvement_pct) << ',' << format_double(normalized) << ','
                       << format_double(c->t_stat) << ',' << format_double(c->dof) << ','
                       << format_double(c->p_value) << ',' << (c->significant ? "true" : "false") << '\n';
                } else {
                    os << "0," << format_double(normalized) << ",,,,\n";
                }
            };
            row("cost_usd", base->mean_cost_usd, m.mean_cost_usd, m.normalized_cost_pct, m.cost);
            row("ttft_ms", base->mean_ttft_ms, m.mean_ttft_ms, m.normalized_ttft_pct, m.ttft);
        }
    }
}

} // namespace pcsim
