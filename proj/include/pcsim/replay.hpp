#pragma once

// Session replay under a virtual clock.
//
// Each call runs the strategy transform, flattens the prompt, looks it up
// in the condition's cache, commits the cacheable part, prices the usage
// and models time to first token as
//
//   ttft = (base + u * uncached + c * cached + w * written) * exp(N(0, sigma))
//
// The lognormal factor for call k of session s is drawn from a generator
// seeded with derive_seed(derive_seed(model.seed, s), k), so results do not
// depend on the order in which conditions or sessions are scheduled.

#include <pcsim/cache_store.hpp>
#include <pcsim/error.hpp>
#include <pcsim/policy.hpp>
#include <pcsim/seed.hpp>
#include <pcsim/strategy.hpp>
#include <pcsim/token.hpp>
#include <pcsim/usage.hpp>
#include <pcsim/workload.hpp>

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pcsim {

struct LatencyModel {
    double base_ms = 250.0;
    double per_uncached_token_ms = 0.02;
    double per_cached_token_ms = 0.002;
    double per_write_token_ms = 0.0;
    double noise_sigma = 0.0; // log-space
    std::uint64_t seed = 0;

    friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

inline void validate(const LatencyModel& m) {
    if (!(m.base_ms >= 0.0) || !(m.per_cached_token_ms >= 0.0) || !(m.per_write_token_ms >= 0.0))
        throw ValidationError("latency: coefficients must be >= 0");
    if (!(m.per_cached_token_ms < m.per_uncached_token_ms))
        throw ValidationError("latency: per_cached_token_ms must be below per_uncached_token_ms");
    if (!(m.noise_sigma >= 0.0)) throw ValidationError("latency: noise_sigma must be >= 0");
}

inline double expected_ttft_ms(const LatencyModel& m, const UsageRecord& u) {
    return m.base_ms + m.per_uncached_token_ms * static_cast<double>(u.uncached_input) +
           m.per_cached_token_ms * static_cast<double>(u.cached_read) +
           m.per_write_token_ms * static_cast<double>(u.cache_write);
}

inline double noise_factor(const LatencyModel& m, std::uint64_t session_noise_seed, std::uint64_t call_index) {
    if (m.noise_sigma == 0.0) return 1.0;
    std::mt19937_64 rng(derive_seed(session_noise_seed, call_index));
    std::normal_distribution<double> normal(0.0, m.noise_sigma);
    return std::exp(normal(rng));
}

class VirtualClock {
public:
    explicit VirtualClock(double start_s = 0.0) : now_s_(start_s) {}

    double now() const noexcept { return now_s_; }

    void advance_by(double dt) {
        if (!(dt >= 0.0)) throw InvalidArgument("VirtualClock: time cannot move backwards");
        now_s_ += dt;
    }

private:
    double now_s_;
};

// Cache state owned by one (policy, strategy) condition. The segment store
// is only used by policies with opportunistic segment caching.
struct ProviderCache {
    CacheStore store;
    CacheStore segments;
};

struct CallContext {
    std::uint64_t session_seed = 0;       // breaker stream
    std::uint64_t session_noise_seed = 0; // latency noise stream
    double advance_after_s = 0.0;         // clock step once the call completes
};

struct CallResult {
    UsageRecord usage;
    double cost_usd = 0.0;
    double ttft_ms = 0.0;
    double time_s = 0.0;

    friend bool operator==(const CallResult&, const CallResult&) = default;
};

inline CallResult replay_call(const std::vector<Message>& messages, StrategyMode mode, std::uint64_t request_index,
                              const ProviderPolicy& policy, ProviderCache& cache, VirtualClock& clock,
                              const LatencyModel& latency, std::int64_t output_tokens, const CallContext& ctx) {
    const Prompt prompt = apply_strategy(messages, mode, request_index, ctx.session_seed, policy.mode);
    const TokenSeq flat = flatten(prompt);
    const double now = clock.now();
    const std::span<const Token> view(flat);

    cache.store.purge_expired(now, policy);
    std::int64_t cached = cache.store.lookup(view, now, policy).cached_tokens;
    std::int64_t written = cache.store.commit(view, cacheable_limit(prompt, policy.mode, flat.size()), now, policy);

    if (policy.opportunistic_segments && policy.mode == CacheMode::Automatic) {
        cache.segments.purge_expired(now, policy);
        for (auto [begin, end] : interior_segments(prompt, flat.size())) {
            const auto seg = view.subspan(begin, end - begin);
            cached += cache.segments.lookup(seg, now, policy).cached_tokens;
            written += cache.segments.commit(seg, seg.size(), now, policy);
        }
    }

    CallResult r;
    const auto total = static_cast<std::int64_t>(flat.size());
    r.usage = {total - cached, cached, written, output_tokens};
    assert(r.usage.uncached_input + r.usage.cached_read == total);
    assert(r.usage.cache_write <= total);
    r.cost_usd = price_call(r.usage, policy, total);
    r.ttft_ms = expected_ttft_ms(latency, r.usage) * noise_factor(latency, ctx.session_noise_seed, request_index);
    r.time_s = now;
    clock.advance_by(ctx.advance_after_s);
    return r;
}

struct SessionResult {
    std::string session_id;
    std::vector<CallResult> calls;
    UsageRecord total_usage;
    double total_cost_usd = 0.0;
    double mean_ttft_ms = 0.0;

    friend bool operator==(const SessionResult&, const SessionResult&) = default;
};

struct ConditionResult {
    std::string policy;
    StrategyMode mode = StrategyMode::NoCache;
    std::vector<SessionResult> sessions;
    // Warmup sessions are excluded from evaluation; their usage is kept here.
    UsageRecord warmup_usage;
    double warmup_cost_usd = 0.0;

    friend bool operator==(const ConditionResult&, const ConditionResult&) = default;
};

struct RunOptions {
    std::uint64_t condition_seed = 0;
    // Clock step between the last call of a session and the next session.
    double session_gap_s = 5.0;
};

inline SessionResult replay_session(const SessionTranscript& t, StrategyMode mode, const ProviderPolicy& policy,
                                    ProviderCache& cache, VirtualClock& clock, const LatencyModel& latency,
                                    const RunOptions& opts) {
    SessionResult out;
    out.session_id = t.session_id;
    const auto requests = t.requests();
    CallContext ctx;
    ctx.session_seed = derive_seed(opts.condition_seed, "breaker:" + t.session_id);
    ctx.session_noise_seed = derive_seed(latency.seed, t.session_id);
    for (std::size_t k = 0; k < requests.size(); ++k) {
        ctx.advance_after_s =
            k + 1 < requests.size() ? requests[k + 1].offset_s - requests[k].offset_s : opts.session_gap_s;
        auto r = replay_call(t.request_messages(requests[k]), mode, k, policy, cache, clock, latency,
                             requests[k].output_tokens, ctx);
        out.total_usage += r.usage;
        out.total_cost_usd += r.cost_usd;
        out.mean_ttft_ms += r.ttft_ms;
        out.calls.push_back(r);
    }
    if (!out.calls.empty()) out.mean_ttft_ms /= static_cast<double>(out.calls.size());
    return out;
}

// One fresh cache and clock per condition: the equivalent of waiting out
// every provider TTL between conditions.
inline ConditionResult run_condition(const std::vector<SessionTranscript>& transcripts, StrategyMode mode,
                                     const ProviderPolicy& policy, const LatencyModel& latency,
                                     std::size_t warmup_sessions, const RunOptions& opts = {}) {
    ConditionResult out;
    out.policy = policy.name;
    out.mode = mode;
    ProviderCache cache;
    VirtualClock clock;
    for (const auto& w : make_warmup_sessions(transcripts, warmup_sessions, derive_seed(opts.condition_seed, "warmup"))) {
        auto r = replay_session(w, mode, policy, cache, clock, latency, opts);
        out.warmup_usage += r.total_usage;
        out.warmup_cost_usd += r.total_cost_usd;
    }
    for (const auto& t : transcripts) out.sessions.push_back(replay_session(t, mode, policy, cache, clock, latency, opts));
    return out;
}

struct LatencyFit {
    LatencyModel model;
    double rmse_ms = 0.0;
};

// Least-squares fit of the noise-free model to observed (usage, ttft) pairs.
inline LatencyFit calibrate_latency(const std::vector<std::pair<UsageRecord, double>>& observed) {
    constexpr int kParams = 4;
    if (observed.size() < kParams)
        throw DegenerateFit("calibrate_latency: need at least 4 observations, got " +
                            std::to_string(observed.size()));
    const auto n = static_cast<Eigen::Index>(observed.size());
    Eigen::MatrixXd a(n, kParams);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& [u, ttft] = observed[static_cast<std::size_t>(i)];
        a(i, 0) = 1.0;
        a(i, 1) = static_cast<double>(u.uncached_input);
        a(i, 2) = static_cast<double>(u.cached_read);
        a(i, 3) = static_cast<double>(u.cache_write);
        y(i) = ttft;
    }
    // Column scaling keeps the rank test meaningful when token counts are
    // orders of magnitude larger than the intercept column.
    Eigen::VectorXd scale = a.colwise().norm().transpose();
    for (int c = 0; c < kParams; ++c) {
        if (scale(c) == 0.0) throw DegenerateFit("calibrate_latency: a usage column is identically zero");
        a.col(c) /= scale(c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < kParams)
        throw DegenerateFit("calibrate_latency: usage rows do not span all coefficients (rank " +
                            std::to_string(qr.rank()) + ")");
    Eigen::VectorXd coef = qr.solve(y);
    for (int c = 0; c < kParams; ++c) coef(c) /= scale(c);

    LatencyFit fit;
    fit.model.base_ms = coef(0);
    fit.model.per_uncached_token_ms = coef(1);
    fit.model.per_cached_token_ms = coef(2);
    fit.model.per_write_token_ms = coef(3);

    double sq = 0.0;
    std::vector<double> logres;
    for (const auto& [u, ttft] : observed) {
        const double pred = expected_ttft_ms(fit.model, u);
        sq += (ttft - pred) * (ttft - pred);
        if (pred > 0.0 && ttft > 0.0) logres.push_back(std::log(ttft / pred));
    }
    fit.rmse_ms = std::sqrt(sq / static_cast<double>(observed.size()));
    if (logres.size() >= 2) {
        double mean = 0.0;
        for (double r : logres) mean += r;
        mean /= static_cast<double>(logres.size());
        double var = 0.0;
        for (double r : logres) var += (r - mean) * (r - mean);
        fit.model.noise_sigma = std::sqrt(var / static_cast<double>(logres.size() - 1));
    }
    return fit;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline constexpr const char* kCallCsvHeader =
    "session_id,call_index,mode,policy,uncached,cached_read,cache_write,output,cost_usd,ttft_ms,time_s";

inline void write_calls_csv_rows(const ConditionResult& c, std::ostream& os) {
    for (const auto& s : c.sessions) {
        for (std::size_t k = 0; k < s.calls.size(); ++k) {
            const auto& r = s.calls[k];
            os << s.session_id << ',' << k << ',' << strategy_name(c.mode) << ',' << c.policy << ','
               << r.usage.uncached_input << ',' << r.usage.cached_read << ',' << r.usage.cache_write << ','
               << r.usage.output << ',' << format_double(r.cost_usd) << ',' << format_double(r.ttft_ms) << ','
               << format_double(r.time_s) << '\n';
        }
    }
}

inline void write_calls_csv(const std::vector<ConditionResult>& conditions, std::ostream& os) {
    os << kCallCsvHeader << '\n';
    for (const auto& c : conditions) write_calls_csv_rows(c, os);
}

} // namespace pcsim
