#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "crfic/common.hpp"
#include "crfic/extrema.hpp"
#include "crfic/path.hpp"
#include "crfic/rng.hpp"

namespace crfic {

// Step size resolving the gamma-scale structure (extrema spacings grow like
// gamma squared), capped at 1e-2 so small-gamma runs stay affordable.
inline double default_step(double gamma) {
    return std::min(gamma * gamma * 1e-3, 1e-2);
}

struct SchemeDescriptor {
    double step = 0.0;
    int splitting_order = 0; // 2 for the Strang integrator, 1 for Euler-Maruyama
};

// One-sided order parameter on a uniform grid. Only the entry holding the
// initial condition may be +-infinity (the first for l runs, the last for
// mirrored r runs); with epsilon > 0 every other entry is finite.
struct SdeTrajectory {
    double t0 = 0.0;
    double dt = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;
    std::vector<double> l;
    SchemeDescriptor scheme;

    std::size_t size() const { return l.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

namespace detail {

inline std::size_t grid_index(const SampledPath& p, double t, const char* who) {
    require(!p.values.empty(), std::string(who) + ": empty path");
    require(p.dt > 0.0, std::string(who) + ": path lacks a grid step");
    const double raw = (t - p.t0) / p.dt;
    const double r = std::round(raw);
    require(std::abs(raw - r) <= 1e-9 * std::max(1.0, std::abs(raw)) && r >= 0.0 &&
                r < static_cast<double>(p.values.size()),
            std::string(who) + ": time off the path grid");
    return static_cast<std::size_t>(r);
}

// Exact flow of the drift ODE dl/dt = -2 eps sinh(l) over half a grid step:
// tanh(l/2) decays by the factor c = e^{-eps h}. Rewritten in the variables
// e = 1 - e^{-|l|} and u = 1 - c, so every intermediate stays in [0, 2]: no
// precision loss near l = 0, no overflow for large |l|, and l = +-infinity
// maps to the finite flow limit 2 artanh(c). Odd in l by construction, which
// keeps the sign-flip symmetry of the dynamics exact in floating point.
struct DriftHalfStep {
    double u; // 1 - e^{-eps h}

    double operator()(double l) const {
        const double s = l < 0.0 ? -1.0 : 1.0;
        const double e = -std::expm1(-std::abs(l));
        const double d = u + (1.0 - e) * (2.0 - u);
        return s * std::log1p(2.0 * (1.0 - u) * e / d);
    }
};

inline double softplus(double w) {
    return w > 0.0 ? w + std::log1p(std::exp(-w)) : std::log1p(std::exp(w));
}

} // namespace detail

// Strang step: half drift flow, noise kick +2 dB, half drift flow. The exact
// sinh flow makes the scheme stable for any step despite the stiff e^l drift
// near the barriers, and an infinite start becomes finite after the first
// half step. With gamma = +infinity (epsilon 0) the drift vanishes and the
// output is written in anchored form, l0 + 2 (B_t - B_a), so the free case is
// exact bit for bit.
inline SdeTrajectory integrate_l(const SampledPath& p, double gamma, double a, double l0,
                                 std::size_t steps = static_cast<std::size_t>(-1)) {
    require(gamma > 0.0 && !std::isnan(gamma), "integrate_l: gamma must be positive");
    require(!std::isnan(l0), "integrate_l: initial condition is NaN");
    const std::size_t ia = detail::grid_index(p, a, "integrate_l");
    if (steps == static_cast<std::size_t>(-1)) steps = p.values.size() - 1 - ia;
    require(steps <= p.values.size() - 1 - ia, "integrate_l: window exceeds the path");
    const double eps = std::exp(-gamma);
    require(eps > 0.0 || std::isfinite(l0),
            "integrate_l: an infinite start needs a positive epsilon to relax");

    SdeTrajectory out;
    out.t0 = p.time(ia);
    out.dt = p.dt;
    out.gamma = gamma;
    out.epsilon = eps;
    out.scheme = {p.dt, 2};
    out.l.resize(steps + 1);
    out.l[0] = l0;

    const double* v = p.values.data() + ia;
    if (eps == 0.0) {
        for (std::size_t k = 1; k <= steps; ++k) out.l[k] = l0 + 2.0 * (v[k] - v[0]);
        return out;
    }

    const detail::DriftHalfStep half{-std::expm1(-eps * p.dt)};
    double l = l0;
    for (std::size_t k = 1; k <= steps; ++k) {
        l = half(l);
        l += 2.0 * (v[k] - v[k - 1]);
        l = half(l);
        out.l[k] = l;
    }
    return out;
}

// The right-rooted process integrated leftward from its anchor b. By the
// mirror symmetry of the one-sided pair this is integrate_l on the
// time-reversed path with the driver's sign flipped, mirrored back onto the
// original axis; the body below is that composition, nothing more, so a test
// can reproduce it bit for bit.
inline SdeTrajectory integrate_r(const SampledPath& p, double gamma, double b, double r0,
                                 std::size_t steps = static_cast<std::size_t>(-1)) {
    const std::size_t ib = detail::grid_index(p, b, "integrate_r");
    if (steps == static_cast<std::size_t>(-1)) steps = ib;
    require(steps <= ib, "integrate_r: window exceeds the path");
    SampledPath q = reverse(p);
    for (double& x : q.values) x = -x;
    SdeTrajectory out = integrate_l(q, gamma, -b, r0, steps);
    out.t0 = p.time(ib - steps);
    std::reverse(out.l.begin(), out.l.end());
    return out;
}

struct MagnetizationPoint {
    double m = 0.0;
    double p_up = 0.0;
};

// m = l + r and the spin-up weight 1/(1 + e^{-m}) pointwise over a common
// grid. Where one side is still at its infinite initial condition the weight
// saturates at 0 or 1; if both are, m is indeterminate and stays NaN.
inline std::vector<MagnetizationPoint> magnetization(const SdeTrajectory& l,
                                                     const SdeTrajectory& r) {
    const bool same_grid = l.size() == r.size() && l.dt == r.dt &&
                           std::abs(l.t0 - r.t0) <= 1e-9 * std::max(1.0, std::abs(l.t0));
    require(same_grid, "magnetization: trajectories live on different grids");
    std::vector<MagnetizationPoint> out(l.size());
    for (std::size_t k = 0; k < l.size(); ++k) {
        const double m = l.l[k] + r.l[k];
        out[k] = {m, 1.0 / (1.0 + std::exp(-m))};
    }
    return out;
}

// Log coordinates of the auxiliary linear system
//   dX1 = eps X2 dt,                        X1(a) = 1,
//   dX2 = (eps X1 + 2 X2) dt - 2 X2 dB,     X2(a) = 0,
// advanced by Euler-Maruyama after the Ito change to (log X1, log X2), where
// the +2 dt drift of X2 cancels against the quadratic variation of -2 dB.
// X2 leaves zero through one explicit linear step, X2(a+h) = eps h. The ratio
// l_check = log X1 - log X2 follows the same dynamics as integrate_l and is
// an independent cross-check of it; log X1 accumulates eps e^{-l_check} h,
// whose long-run slope is the free energy density.
struct LinearSystemResult {
    double t0 = 0.0;
    double dt = 0.0;
    double gamma = 0.0;
    double epsilon = 0.0;
    std::vector<double> log_x1;
    std::vector<double> log_x2;
    std::vector<double> l_check;
    SchemeDescriptor scheme;

    std::size_t size() const { return l_check.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

inline LinearSystemResult integrate_linear_system(const SampledPath& p, double gamma, double a,
                                                  std::size_t steps = static_cast<std::size_t>(-1)) {
    require(gamma > 0.0 && !std::isnan(gamma), "integrate_linear_system: gamma must be positive");
    const std::size_t ia = detail::grid_index(p, a, "integrate_linear_system");
    if (steps == static_cast<std::size_t>(-1)) steps = p.values.size() - 1 - ia;
    require(steps <= p.values.size() - 1 - ia, "integrate_linear_system: window exceeds the path");
    require(steps >= 1, "integrate_linear_system: needs at least one step");
    const double eps = std::exp(-gamma);
    const double h = p.dt;
    const double inf = std::numeric_limits<double>::infinity();

    LinearSystemResult out;
    out.t0 = p.time(ia);
    out.dt = h;
    out.gamma = gamma;
    out.epsilon = eps;
    out.scheme = {h, 1};
    out.log_x1.resize(steps + 1);
    out.log_x2.resize(steps + 1);
    out.l_check.resize(steps + 1);
    out.log_x1[0] = 0.0;
    out.log_x2[0] = -inf;
    out.l_check[0] = inf;

    double y1 = 0.0;
    // With eps = 0 the X2 scale never feeds back (X1 stays 1 and only ratio
    // increments are meaningful), so its start is normalized to 1 instead of
    // the degenerate eps h.
    double y2 = eps > 0.0 ? std::log(eps * h) : 0.0;
    out.log_x1[1] = y1;
    out.log_x2[1] = y2;
    out.l_check[1] = y1 - y2;

    const double* v = p.values.data() + ia;
    for (std::size_t k = 2; k <= steps; ++k) {
        const double db = v[k] - v[k - 1];
        double y1n = y1;
        double y2n = y2 - 2.0 * db;
        if (eps > 0.0) {
            y1n += eps * std::exp(y2 - y1) * h;
            y2n += eps * std::exp(y1 - y2) * h;
        }
        y1 = y1n;
        y2 = y2n;
        out.log_x1[k] = y1;
        out.log_x2[k] = y2;
        out.l_check[k] = y1 - y2;
    }
    return out;
}

struct ReflectedTrajectory {
    double t0 = 0.0;
    double dt = 0.0;
    double gamma = 0.0;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

// Clamp discretization of the two-sided reflection of 2 B_t inside
// [-gamma, gamma], started saturated at the upper wall. Each linear segment
// of the sampled driver is monotone, so the per-step clamp is the exact
// reflection of the interpolated path; the error against the continuum
// solution is bounded by the largest single-step increment.
inline ReflectedTrajectory reflect_simplified(const SampledPath& p, double gamma, double a,
                                              std::size_t steps = static_cast<std::size_t>(-1)) {
    require(gamma > 0.0 && std::isfinite(gamma), "reflect_simplified: gamma must be positive");
    const std::size_t ia = detail::grid_index(p, a, "reflect_simplified");
    if (steps == static_cast<std::size_t>(-1)) steps = p.values.size() - 1 - ia;
    require(steps <= p.values.size() - 1 - ia, "reflect_simplified: window exceeds the path");

    ReflectedTrajectory out;
    out.t0 = p.time(ia);
    out.dt = p.dt;
    out.gamma = gamma;
    out.values.resize(steps + 1);
    double x = gamma;
    out.values[0] = x;
    const double* v = p.values.data() + ia;
    for (std::size_t k = 1; k <= steps; ++k) {
        x = std::clamp(x + 2.0 * (v[k] - v[k - 1]), -gamma, gamma);
        out.values[k] = x;
    }
    return out;
}

struct SimplifiedOrigin {
    double l_hat0 = 0.0;
    double r_hat0 = 0.0;
    double m_hat0 = 0.0;
    int sign = 0;
};

// Closed form of the reflected pair at the origin. Scanning away from 0 on
// either side, the process is pinned at the wall matching the scan's first
// stop and then rides 2 B back to the origin, which leaves only the
// origin-adjacent candidate extremum:
//   left candidate a gamma-maximum -> l = +gamma - 2 (B_cand - B_0),
//   left candidate a gamma-minimum -> l = -gamma - 2 (B_cand - B_0),
// with mirrored signs on the right for r. sign(m) then reproduces the
// bilateral origin label case by case.
//
// extremum_correction widens each candidate value outward (maxima up, minima
// down) before the formulas apply. A grid only samples the path at step
// boundaries, so the running extremum it reports undershoots the continuous
// one by 0.5826 sqrt(dt) in expectation; callers that need unbiased l, r at
// finite dt pass that amount, the default leaves the values as sampled.
inline SimplifiedOrigin simplified_closed_form(const SampledPath& p, double gamma,
                                               double extremum_correction = 0.0) {
    const BilateralResult bl = bilateral_extrema(p, gamma);
    if (bl.status == ScanStatus::window_too_short)
        throw window_exhausted(
            "simplified_closed_form: no stop time on one side, enlarge the window");
    const std::size_t k0 = detail::origin_index(p.t0, p.dt, p.values.size());
    const double b0 = p.values[k0];
    const OriginCandidate& u = bl.origin.u; // right side
    const OriginCandidate& v = bl.origin.v; // left side
    const double uc = u.kind == ExtremumKind::maximum ? u.value + extremum_correction
                                                      : u.value - extremum_correction;
    const double vc = v.kind == ExtremumKind::maximum ? v.value + extremum_correction
                                                      : v.value - extremum_correction;

    SimplifiedOrigin s;
    s.l_hat0 = v.kind == ExtremumKind::maximum ? gamma - 2.0 * (vc - b0)
                                               : -gamma - 2.0 * (vc - b0);
    s.r_hat0 = u.kind == ExtremumKind::maximum ? -gamma + 2.0 * (uc - b0)
                                               : gamma + 2.0 * (uc - b0);
    s.m_hat0 = s.l_hat0 + s.r_hat0;
    s.sign = s.m_hat0 > 0.0 ? 1 : (s.m_hat0 < 0.0 ? -1 : 0);
    return s;
}

struct EnvelopeBounds {
    double lower = 0.0;
    double upper = 0.0;
};

// Pathwise sandwich for the l integration, from barrier comparison: the lower
// envelope solves the dynamics with the confining e^{-l} term dropped (which
// integrates in closed form), the upper one transports that term's push
// through the intermediate profile theta. Integrals are grid trapezoids; the
// two that can leave double range under a large Brownian excursion carry a
// max shift. x = +infinity uses the explicit limit of both formulas.
inline EnvelopeBounds envelope_bounds(const SampledPath& p, double gamma, double a, double x,
                                      double t) {
    require(gamma > 0.0 && !std::isnan(gamma), "envelope_bounds: gamma must be positive");
    require(!std::isnan(x) && !(std::isinf(x) && x < 0.0),
            "envelope_bounds: start must be finite or +infinity");
    const std::size_t ia = detail::grid_index(p, a, "envelope_bounds");
    const std::size_t it = detail::grid_index(p, t, "envelope_bounds");
    require(it > ia, "envelope_bounds: need t > a");
    const double eps = std::exp(-gamma);
    const double h = p.dt;
    const double* v = p.values.data();
    const double ba = v[ia];
    const double bt = v[it];

    if (std::isinf(x)) {
        // lim x -> infinity: lower = -log eps - log int_a^t e^{2(B_s - B_t)},
        // upper adds eps^2 times the double integral of e^{2(B_r - B_s)}.
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = ia; k <= it; ++k) mx = std::max(mx, 2.0 * (v[k] - bt));
        double sum = 0.0;
        for (std::size_t k = ia; k <= it; ++k) {
            const double w = (k == ia || k == it) ? 0.5 : 1.0;
            sum += w * std::exp(2.0 * (v[k] - bt) - mx);
        }
        const double log_i = mx + std::log(sum * h);
        double jj = 0.0, dd = 0.0, fprev = 0.0;
        double eprev = 1.0; // e^{2 (B_ia - B_ia)}
        for (std::size_t k = ia + 1; k <= it; ++k) {
            const double ek = std::exp(2.0 * (v[k] - ba));
            jj += 0.5 * h * (eprev + ek);
            const double fk = jj / ek;
            dd += 0.5 * h * (fprev + fk);
            eprev = ek;
            fprev = fk;
        }
        const double lower = -std::log(eps) - log_i;
        return {lower, lower + eps * eps * dd};
    }

    if (eps == 0.0) {
        const double b = x + 2.0 * (bt - ba);
        return {b, b};
    }

    // theta_s = x + 2 (B_s - B_a) + eps e^{-x} I2(s) + eps^2 D(s), with
    // I2 the running integral of e^{-2(B - B_a)} and D the running double
    // integral of e^{2(B_r - B_s)}.
    std::vector<double> theta(it - ia + 1);
    theta[0] = x;
    double i2 = 0.0, jj = 0.0, dd = 0.0, fprev = 0.0;
    double gprev = 1.0, eprev = 1.0;
    const double ex = std::exp(-x);
    for (std::size_t k = ia + 1; k <= it; ++k) {
        const double ek = std::exp(2.0 * (v[k] - ba));
        const double gk = 1.0 / ek;
        i2 += 0.5 * h * (gprev + gk);
        jj += 0.5 * h * (eprev + ek);
        const double fk = jj * gk;
        dd += 0.5 * h * (fprev + fk);
        theta[k - ia] = x + 2.0 * (v[k] - ba) + eps * ex * i2 + eps * eps * dd;
        eprev = ek;
        gprev = gk;
        fprev = fk;
    }

    double mx1 = -std::numeric_limits<double>::infinity();
    double mth = -std::numeric_limits<double>::infinity();
    for (std::size_t k = ia; k <= it; ++k) {
        mx1 = std::max(mx1, 2.0 * (v[k] - ba));
        mth = std::max(mth, theta[k - ia]);
    }
    double s1 = 0.0, su = 0.0;
    for (std::size_t k = ia; k <= it; ++k) {
        const double w = (k == ia || k == it) ? 0.5 : 1.0;
        s1 += w * std::exp(2.0 * (v[k] - ba) - mx1);
        su += w * std::exp(theta[k - ia] - mth);
    }
    const double lower =
        x + 2.0 * (bt - ba) - detail::softplus(std::log(eps) + x + mx1 + std::log(s1 * h));
    const double upper = theta.back() - detail::softplus(std::log(eps) + mth + std::log(su * h));
    return {lower, upper};
}

// Window wide enough to forget the infinite initial conditions: each side
// grows outward until the scan walking back toward the origin has confirmed
// its first stretch extremum (third stop time), then keeps growing until the
// extent reaches window_factor times that confirming stop's distance. Growth
// reuses the increments already drawn, so the realized path is an ordinary
// bilateral Brownian motion and the extents are stopping decisions of its own
// filtration; no draw is ever rejected.
struct AdaptiveWindow {
    SampledPath path;
    double left_confirm = 0.0;  // distance from 0 of the left confirming stop
    double right_confirm = 0.0; // same on the right
};

namespace detail {

// Grows one side of a window (cumulative values with vals[0] = 0 at the
// origin) until the scan walking back toward the origin has produced
// stops_needed stop times, then keeps drawing until the side reaches factor
// times the distance of that last stop. Returns that distance. Growth only
// ever extends the increments already drawn, so the realized side stays an
// ordinary Brownian path and the extent is a stopping decision of its own
// filtration; no draw is rejected.
inline double grow_window_side(std::vector<double>& vals, NormalStream& gen, double gamma,
                               double dt, std::size_t stops_needed, double factor,
                               double initial_extent, double max_extent, const char* who) {
    const double sq = std::sqrt(dt);
    SampledPath probe;
    probe.t0 = 0.0;
    probe.dt = dt;
    double confirm = 0.0;
    std::size_t target = static_cast<std::size_t>(std::ceil(initial_extent / dt)) + 1;
    for (;;) {
        while (vals.size() < target) vals.push_back(vals.back() + sq * gen.normal());
        probe.values.swap(vals);
        const ExtremaSequence seq = forward_neveu_pitman(probe, gamma);
        probe.values.swap(vals);
        if (seq.stop_times.size() >= stops_needed) {
            confirm = seq.stop_times[stops_needed - 1].time;
            break;
        }
        const double extent = static_cast<double>(vals.size() - 1) * dt;
        if (extent >= max_extent)
            throw window_exhausted(std::string(who) +
                                   ": no confirmed extremum within the maximum extent");
        target = vals.size() + vals.size() / 2 + 1;
    }
    const auto want = static_cast<std::size_t>(std::ceil(factor * confirm / dt)) + 1;
    while (vals.size() < want) vals.push_back(vals.back() + sq * gen.normal());
    return confirm;
}

inline SampledPath merge_window_sides(const std::vector<double>& left,
                                      const std::vector<double>& right, double dt) {
    const std::size_t nl = left.size() - 1;
    SampledPath p;
    p.dt = dt;
    p.t0 = -static_cast<double>(nl) * dt;
    p.values.resize(nl + right.size());
    for (std::size_t k = 0; k <= nl; ++k) p.values[k] = left[nl - k];
    for (std::size_t k = 1; k < right.size(); ++k) p.values[nl + k] = right[k];
    return p;
}

} // namespace detail

inline AdaptiveWindow sample_adaptive_window(NormalStream& gen, double gamma, double dt,
                                             double window_factor = 2.0,
                                             double max_extent = 0.0) {
    require(gamma > 0.0 && std::isfinite(gamma), "sample_adaptive_window: gamma must be positive");
    require(dt > 0.0 && std::isfinite(dt), "sample_adaptive_window: dt must be positive");
    require(window_factor >= 1.0, "sample_adaptive_window: window factor below 1");
    if (max_extent <= 0.0) max_extent = 256.0 * gamma * gamma + 64.0;

    std::vector<double> right{0.0}, left{0.0};
    AdaptiveWindow w;
    w.right_confirm = detail::grow_window_side(right, gen, gamma, dt, 3, window_factor,
                                               4.0 * gamma * gamma, max_extent,
                                               "sample_adaptive_window");
    w.left_confirm = detail::grow_window_side(left, gen, gamma, dt, 3, window_factor,
                                              4.0 * gamma * gamma, max_extent,
                                              "sample_adaptive_window");
    w.path = detail::merge_window_sides(left, right, dt);
    return w;
}

// CSV: header "t,l,r,m,p_up", one row per grid point of the common grid.
inline void write_csv(const SdeTrajectory& l, const SdeTrajectory& r, std::ostream& os) {
    const auto mp = magnetization(l, r);
    os << "t,l,r,m,p_up\n";
    char buf[160];
    for (std::size_t k = 0; k < l.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", l.time(k), l.l[k],
                      r.l[k], mp[k].m, mp[k].p_up);
        os << buf;
    }
}

} // namespace crfic
