#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "crfic/common.hpp"
#include "crfic/mc.hpp"
#include "crfic/rng.hpp"
#include "crfic/stats.hpp"

namespace crfic {

enum class BoundaryCondition { plus_free, plus_plus };
enum class TransferDirection { forward, backward };

// Ising chain with sites 1..n, a clamped sigma_0 = +1, coupling j on every
// bond, and per-site field h + delta * omega[k-1]. The right end is either
// free or clamped to +1 as well.
struct DiscreteChain {
    std::size_t n = 0;
    double j = 0.0;
    double h = 0.0;
    double delta = 0.0;
    std::vector<double> omega;
    BoundaryCondition boundary = BoundaryCondition::plus_free;
};

namespace detail {

inline void validate_chain(const DiscreteChain& c, const char* who) {
    const std::string w(who);
    require(c.n >= 1, w + ": chain needs at least one site");
    require(c.omega.size() == c.n, w + ": omega must carry one entry per site");
    require(std::isfinite(c.j) && c.j >= 0.0, w + ": coupling must be finite and nonnegative");
    require(std::isfinite(c.h), w + ": field must be finite");
    require(std::isfinite(c.delta) && c.delta >= 0.0,
            w + ": disorder strength must be finite and nonnegative");
    for (double v : c.omega) require(std::isfinite(v), w + ": omega entries must be finite");
}

// log(e^a + e^b), safe when either operand is -inf.
inline double lse2(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double lse4(const double (&v)[4]) {
    const double m = std::max(std::max(v[0], v[1]), std::max(v[2], v[3]));
    if (m == -std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Forward 2x2 pass: (ap, am) hold the log weight of all configurations of
// sigma_1..sigma_k that end in +1 / -1. Exposed so the marginal routines can
// reuse the tables.
inline void forward_pass(const DiscreteChain& c, std::vector<double>& ap, std::vector<double>& am) {
    const double inf = std::numeric_limits<double>::infinity();
    ap.assign(c.n + 1, 0.0);
    am.assign(c.n + 1, -inf);
    for (std::size_t k = 1; k <= c.n; ++k) {
        const double f = c.h + c.delta * c.omega[k - 1];
        ap[k] = lse2(ap[k - 1] + c.j, am[k - 1] - c.j) + f;
        am[k] = lse2(ap[k - 1] - c.j, am[k - 1] + c.j) - f;
    }
}

// Backward 2x2 pass: (bp, bm)[k] hold the log weight of sigma_{k+1}..sigma_n
// given sigma_k = +1 / -1, including the right boundary condition.
inline void backward_pass(const DiscreteChain& c, std::vector<double>& bp, std::vector<double>& bm) {
    const double inf = std::numeric_limits<double>::infinity();
    bp.assign(c.n + 1, 0.0);
    bm.assign(c.n + 1, 0.0);
    if (c.boundary == BoundaryCondition::plus_plus) bm[c.n] = -inf;
    for (std::size_t k = c.n; k >= 1; --k) {
        const double f = c.h + c.delta * c.omega[k - 1];
        bp[k - 1] = lse2(c.j + f + bp[k], -c.j - f + bm[k]);
        bm[k - 1] = lse2(-c.j + f + bp[k], c.j - f + bm[k]);
    }
}

struct SampleMoments {
    double mean = 0.0;
    double var = 0.0;     // unbiased
    double se_mean = 0.0;
    double se_var = 0.0;  // sqrt((m4 - var^2) / n), the large-n variance of the variance
};

inline SampleMoments sample_moments(std::span<const double> x) {
    SampleMoments m;
    const std::size_t n = x.size();
    if (n == 0) return m;
    m.mean = pairwise_sum(x) / static_cast<double>(n);
    if (n < 2) return m;
    std::vector<double> p2(n), p4(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - m.mean;
        p2[i] = d * d;
        p4[i] = p2[i] * p2[i];
    }
    const double s2 = pairwise_sum(p2);
    m.var = s2 / static_cast<double>(n - 1);
    m.se_mean = std::sqrt(m.var / static_cast<double>(n));
    const double m2 = s2 / static_cast<double>(n);
    const double m4 = pairwise_sum(p4) / static_cast<double>(n);
    const double vv = (m4 - m2 * m2) / static_cast<double>(n);
    m.se_var = vv > 0.0 ? std::sqrt(vv) : 0.0;
    return m;
}

} // namespace detail

// Log partition function of the chain, accumulated in log scale so large
// couplings and long chains never overflow. The forward and backward sweeps
// bracket the same quantity and exist mostly to cross-check each other.
inline double log_partition(const DiscreteChain& c,
                            TransferDirection dir = TransferDirection::forward) {
    detail::validate_chain(c, "log_partition");
    if (dir == TransferDirection::forward) {
        std::vector<double> ap, am;
        detail::forward_pass(c, ap, am);
        return c.boundary == BoundaryCondition::plus_free ? detail::lse2(ap[c.n], am[c.n])
                                                          : ap[c.n];
    }
    std::vector<double> bp, bm;
    detail::backward_pass(c, bp, bm);
    return bp[0];
}

// log of Z(chain) / Z(same chain, all fields off). The zero-field chain keeps
// the coupling and boundary, so the ratio isolates the disorder response.
inline double transfer_ratio(const DiscreteChain& c,
                             TransferDirection dir = TransferDirection::forward) {
    detail::validate_chain(c, "transfer_ratio");
    DiscreteChain base = c;
    base.h = 0.0;
    base.delta = 0.0;
    return log_partition(c, dir) - log_partition(base, dir);
}

// Thermal magnetization <sigma_k> for k = 1..n, from the forward/backward
// tables. lse2(ap[k]+bp[k], am[k]+bm[k]) is the log partition function for
// every k; the test suite leans on that invariance.
inline std::vector<double> site_magnetizations(const DiscreteChain& c) {
    detail::validate_chain(c, "site_magnetizations");
    std::vector<double> ap, am, bp, bm;
    detail::forward_pass(c, ap, am);
    detail::backward_pass(c, bp, bm);
    std::vector<double> out(c.n);
    for (std::size_t k = 1; k <= c.n; ++k) {
        const double wp = ap[k] + bp[k];
        const double wm = am[k] + bm[k];
        const double m = std::max(wp, wm);
        const double ep = std::exp(wp - m);
        const double em = std::exp(wm - m);
        out[k - 1] = (ep - em) / (ep + em);
    }
    return out;
}

// Two independent replicas sharing the disorder: <sigma_k sigma'_k> from the
// genuine 4x4 product chain over (sigma, sigma') in {++, +-, -+, --}. The
// product chain factorizes into the tensor square of the 2x2 one, so this
// must reproduce site_magnetizations squared; keeping the 4x4 route honest is
// the point, the factorization is only asserted, never assumed.
inline std::vector<double> replica_pair_correlations(const DiscreteChain& c) {
    detail::validate_chain(c, "replica_pair_correlations");
    const double inf = std::numeric_limits<double>::infinity();
    static constexpr double s1[4] = {1.0, 1.0, -1.0, -1.0};
    static constexpr double s2[4] = {1.0, -1.0, 1.0, -1.0};
    const std::size_t n = c.n;
    std::vector<double> fwd(4 * (n + 1)), bwd(4 * (n + 1));
    for (int i = 0; i < 4; ++i) fwd[i] = i == 0 ? 0.0 : -inf;
    for (std::size_t k = 1; k <= n; ++k) {
        const double f = c.h + c.delta * c.omega[k - 1];
        for (int i = 0; i < 4; ++i) {
            double terms[4];
            for (int p = 0; p < 4; ++p)
                terms[p] = fwd[4 * (k - 1) + p] + c.j * (s1[i] * s1[p] + s2[i] * s2[p]);
            fwd[4 * k + i] = detail::lse4(terms) + f * (s1[i] + s2[i]);
        }
    }
    for (int i = 0; i < 4; ++i)
        bwd[4 * n + i] = c.boundary == BoundaryCondition::plus_plus && i != 0 ? -inf : 0.0;
    for (std::size_t k = n; k >= 1; --k) {
        const double f = c.h + c.delta * c.omega[k - 1];
        for (int p = 0; p < 4; ++p) {
            double terms[4];
            for (int i = 0; i < 4; ++i)
                terms[i] = c.j * (s1[i] * s1[p] + s2[i] * s2[p]) + f * (s1[i] + s2[i]) +
                           bwd[4 * k + i];
            bwd[4 * (k - 1) + p] = detail::lse4(terms);
        }
    }
    std::vector<double> out(n);
    for (std::size_t k = 1; k <= n; ++k) {
        double w[4];
        for (int i = 0; i < 4; ++i) w[i] = fwd[4 * k + i] + bwd[4 * k + i];
        const double m = std::max(std::max(w[0], w[1]), std::max(w[2], w[3]));
        double num = 0.0, den = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double e = std::exp(w[i] - m);
            num += e * s1[i] * s2[i];
            den += e;
        }
        out[k - 1] = num / den;
    }
    return out;
}

// One draw of the log continuum partition function on [0, ell]: the weights
// of the two spin sectors evolve in log coordinates as
//   d log W+ =  (dB + alpha dt) + eps (W-/W+ - 1) dt,
//   d log W- = -(dB + alpha dt) + eps (W+/W- - 1) dt,
// with eps = e^{-gamma}, W+(0) = 1, W-(0) = 0. The minus sector starts empty,
// so the first step seeds it with the mass eps*dt leaked from the plus one
// (mirroring how the one-sided integrators start their subdominant channel).
// Averaged over the driving noise alone, exp of the result has mean
// e^{ell/2} at alpha = 0, which the tests hold it to.
inline double sample_continuum_log_z(NormalStream& gen, double gamma, double alpha, double ell,
                                     double dt) {
    require(std::isfinite(gamma) && gamma > 0.0,
            "sample_continuum_log_z: gamma must be positive and finite");
    require(std::isfinite(alpha), "sample_continuum_log_z: alpha must be finite");
    require(std::isfinite(ell) && ell > 0.0, "sample_continuum_log_z: ell must be positive");
    require(std::isfinite(dt) && dt > 0.0 && dt <= ell,
            "sample_continuum_log_z: dt must lie in (0, ell]");
    const auto steps = static_cast<std::size_t>(std::llround(ell / dt));
    require(steps >= 1 && std::abs(static_cast<double>(steps) * dt - ell) <= 1e-9 * ell,
            "sample_continuum_log_z: ell must sit on the dt grid");
    const double eps = std::exp(-gamma);
    const double sq = std::sqrt(dt);
    double db = sq * gen.normal() + alpha * dt;
    double wp = db - eps * dt;
    double wm = std::log(eps * dt);
    for (std::size_t k = 1; k < steps; ++k) {
        db = sq * gen.normal() + alpha * dt;
        const double np = wp + db + eps * dt * (std::exp(wm - wp) - 1.0);
        const double nm = wm - db + eps * dt * (std::exp(wp - wm) - 1.0);
        wp = np;
        wm = nm;
    }
    return detail::lse2(wp, wm);
}

struct ScalingRow {
    double delta = 0.0;
    double mean_log_ratio = 0.0;
    double var_log_ratio = 0.0;
    double continuum_mean = 0.0;
    double continuum_var = 0.0;
    double gap = 0.0;        // |mean gap| + |variance gap|
    double gap_stderr = 0.0; // all four sampling errors, combined in quadrature
};

struct ScalingReport {
    std::vector<ScalingRow> rows;
    double gamma = 0.0;
    double alpha = 0.0;
    double ell = 0.0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    double elapsed = 0.0;
};

// How fast the disordered chain approaches its continuum limit: for each
// lattice spacing the chain length, coupling and fields are slaved to
// (gamma, alpha, ell) via n = ell/delta, j = gamma/2 - log(delta)/2,
// h = alpha*delta, disorder scale sqrt(delta). The first two moments of the
// log partition ratio are then compared against one shared continuum
// reference ensemble. Rows keep the caller's delta order.
inline ScalingReport scaling_limit_check(double gamma, double alpha, double ell,
                                         const std::vector<double>& deltas, std::size_t samples,
                                         std::uint64_t seed, const McConfig& cfg = {}) {
    require(std::isfinite(gamma) && gamma > 0.0,
            "scaling_limit_check: gamma must be positive and finite");
    require(std::isfinite(alpha), "scaling_limit_check: alpha must be finite");
    require(std::isfinite(ell) && ell > 0.0, "scaling_limit_check: ell must be positive");
    require(!deltas.empty(), "scaling_limit_check: need at least one lattice spacing");
    for (double d : deltas)
        require(std::isfinite(d) && d > 0.0 && d <= ell,
                "scaling_limit_check: spacings must lie in (0, ell]");
    require(samples >= 2, "scaling_limit_check: need at least two samples");
    const auto start = std::chrono::steady_clock::now();

    const double dt_c = cfg.dt > 0.0 ? cfg.dt : ell * 1e-5;
    std::vector<double> cont(samples);
    detail::for_each_replica(samples, cfg.threads, [&](std::size_t i) {
        NormalStream gen(seed, detail::stream_id(32, i));
        cont[i] = sample_continuum_log_z(gen, gamma, alpha, ell, dt_c);
    });
    const detail::SampleMoments mc = detail::sample_moments(cont);

    ScalingReport rep;
    rep.gamma = gamma;
    rep.alpha = alpha;
    rep.ell = ell;
    rep.samples = samples;
    rep.seed = seed;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        const double d = deltas[di];
        const auto n = static_cast<std::size_t>(std::llround(ell / d));
        require(n >= 1, "scaling_limit_check: spacing leaves no lattice site");
        const double j = 0.5 * gamma - 0.5 * std::log(d);
        const double h = alpha * d;
        const double dd = std::sqrt(d);
        std::vector<double> vals(samples);
        detail::for_each_replica(samples, cfg.threads, [&](std::size_t i) {
            NormalStream gen(seed, detail::stream_id(40 + di, i));
            DiscreteChain c;
            c.n = n;
            c.j = j;
            c.h = h;
            c.delta = dd;
            c.omega.resize(n);
            for (std::size_t k = 0; k < n; ++k) c.omega[k] = gen.normal();
            vals[i] = transfer_ratio(c);
        });
        const detail::SampleMoments md = detail::sample_moments(vals);
        ScalingRow row;
        row.delta = d;
        row.mean_log_ratio = md.mean;
        row.var_log_ratio = md.var;
        row.continuum_mean = mc.mean;
        row.continuum_var = mc.var;
        row.gap = std::abs(md.mean - mc.mean) + std::abs(md.var - mc.var);
        row.gap_stderr = std::sqrt(md.se_mean * md.se_mean + mc.se_mean * mc.se_mean +
                                   md.se_var * md.se_var + mc.se_var * mc.se_var);
        rep.rows.push_back(row);
    }

    std::string spacings;
    for (double d : deltas) {
        char one[32];
        std::snprintf(one, sizeof one, "%.17g,", d);
        spacings += one;
    }
    char buf[384];
    std::snprintf(buf, sizeof buf,
                  "scaling_limit_check|gamma=%.17g|alpha=%.17g|ell=%.17g|deltas=%s|n=%zu|dt=%.17g|"
                  "seed=%llu",
                  gamma, alpha, ell, spacings.c_str(), samples, dt_c,
                  static_cast<unsigned long long>(seed));
    rep.config_digest = config_digest(buf);
    rep.elapsed = detail::seconds_since(start);
    return rep;
}

inline void write_csv(std::ostream& os, const ScalingReport& rep) {
    os << "delta,mean_log_ratio,var_log_ratio,continuum_mean,continuum_var,gap\n";
    char line[256];
    for (const ScalingRow& r : rep.rows) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.delta,
                      r.mean_log_ratio, r.var_log_ratio, r.continuum_mean, r.continuum_var, r.gap);
        os << line;
    }
}

struct OverlapReport {
    double lhs = 0.0;        // field-scale sensitivity of E log Z, by central differences
    double lhs_stderr = 0.0;
    double rhs = 0.0;        // magnetization + replica-overlap transfer computation
    double rhs_stderr = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    double elapsed = 0.0;
};

// Differentiating the disorder-averaged log partition function in a common
// scale factor on (h, delta) must equal h * sum_k E<sigma_k> plus
// delta^2 * sum_k (1 - E<sigma_k sigma'_k>), the replicas sharing omega. The
// left side is a finite difference with the scale bumped by 1e-3 both ways on
// the same disorder draw; the right side is exact per draw, so both sides are
// plain sample means over the (thermal-exact) per-draw values and the
// identity holds only across the disorder average.
inline OverlapReport overlap_identity_check(std::size_t sites, double j, double h, double delta,
                                            std::size_t samples, std::uint64_t seed,
                                            const McConfig& cfg = {}) {
    require(sites >= 1, "overlap_identity_check: need at least one site");
    require(std::isfinite(j) && j >= 0.0,
            "overlap_identity_check: coupling must be finite and nonnegative");
    require(std::isfinite(h), "overlap_identity_check: field must be finite");
    require(std::isfinite(delta) && delta >= 0.0,
            "overlap_identity_check: disorder strength must be finite and nonnegative");
    require(samples >= 2, "overlap_identity_check: need at least two samples");
    const auto start = std::chrono::steady_clock::now();
    const double step = 1e-3;

    std::vector<double> lhs(samples), rhs(samples);
    detail::for_each_replica(samples, cfg.threads, [&](std::size_t i) {
        NormalStream gen(seed, detail::stream_id(48, i));
        DiscreteChain c;
        c.n = sites;
        c.j = j;
        c.h = h;
        c.delta = delta;
        c.omega.resize(sites);
        for (std::size_t k = 0; k < sites; ++k) c.omega[k] = gen.normal();

        DiscreteChain up = c, dn = c;
        up.h = h * (1.0 + step);
        up.delta = delta * (1.0 + step);
        dn.h = h * (1.0 - step);
        dn.delta = delta * (1.0 - step);
        lhs[i] = (log_partition(up) - log_partition(dn)) / (2.0 * step);

        const std::vector<double> mag = site_magnetizations(c);
        const std::vector<double> cor = replica_pair_correlations(c);
        double acc = 0.0;
        for (std::size_t k = 0; k < sites; ++k)
            acc += h * mag[k] + delta * delta * (1.0 - cor[k]);
        rhs[i] = acc;
    });
    const detail::SlotSummary sl = detail::summarize_slots(lhs);
    const detail::SlotSummary sr = detail::summarize_slots(rhs);

    OverlapReport rep;
    rep.lhs = sl.mean;
    rep.lhs_stderr = sl.stderr_mean;
    rep.rhs = sr.mean;
    rep.rhs_stderr = sr.stderr_mean;
    rep.n = samples;
    rep.seed = seed;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "overlap_identity_check|sites=%zu|j=%.17g|h=%.17g|delta=%.17g|n=%zu|seed=%llu",
                  sites, j, h, delta, samples, static_cast<unsigned long long>(seed));
    rep.config_digest = config_digest(buf);
    rep.elapsed = detail::seconds_since(start);
    return rep;
}

} // namespace crfic
