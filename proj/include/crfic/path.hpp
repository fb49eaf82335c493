#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <vector>

#include "crfic/common.hpp"
#include "crfic/rng.hpp"

namespace crfic {

// A scalar path sampled on a uniform grid. values[k] holds B(t0 + k*dt);
// times are always recomputed as t0 + k*dt so no rounding accumulates.
struct SampledPath {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> values;
    double alpha = 0.0; // drift per unit time used when sampling
    double scale = 1.0; // diffusion scale used when sampling

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
    double front_time() const { return t0; }
    double back_time() const { return time(values.empty() ? 0 : values.size() - 1); }
};

namespace detail {
// Index of the grid point nearest 0, clamped into the window.
inline std::size_t origin_index(double t0, double dt, std::size_t n) {
    const double raw = -t0 / dt;
    const double r = std::round(raw);
    if (r <= 0.0) return 0;
    if (r >= static_cast<double>(n - 1)) return n - 1;
    return static_cast<std::size_t>(r);
}
} // namespace detail

// Bilateral Brownian motion with drift `alpha` and diffusion scale `scale`,
// pinned to exactly 0 at the grid point nearest the time origin. The two
// sides of the pin are built from separate RNG substreams, so the sigma
// fields left and right of 0 are independent in the literal sense.
//
// The drift is added analytically (alpha times the time offset from the pin)
// rather than summed step by step; with scale = 0 the output is exact, and
// scaling by `scale` is a single multiply per point on the scale-1 noise.
inline SampledPath sample_bilateral(std::uint64_t seed, double t_min, double t_max,
                                    double dt, double alpha = 0.0, double scale = 1.0) {
    require(std::isfinite(t_min) && std::isfinite(t_max) && std::isfinite(dt) &&
                std::isfinite(alpha) && std::isfinite(scale),
            "sample_bilateral: non-finite parameter");
    require(dt > 0.0, "sample_bilateral: dt must be positive");
    require(t_min <= t_max, "sample_bilateral: empty window");

    const auto n = static_cast<std::size_t>(std::floor((t_max - t_min) / dt + 1e-9)) + 1;
    SampledPath p;
    p.t0 = t_min;
    p.dt = dt;
    p.alpha = alpha;
    p.scale = scale;
    p.values.resize(n);

    const std::size_t k0 = detail::origin_index(t_min, dt, n);
    const double sq = std::sqrt(dt);

    std::vector<double> w(n, 0.0);
    NormalStream right(seed, 0);
    for (std::size_t k = k0 + 1; k < n; ++k) w[k] = w[k - 1] + sq * right.normal();
    NormalStream left(seed, 1);
    for (std::size_t k = k0; k-- > 0;) w[k] = w[k + 1] + sq * left.normal();

    const double tpin = p.time(k0);
    for (std::size_t k = 0; k < n; ++k)
        p.values[k] = alpha * (p.time(k) - tpin) + scale * w[k];
    return p;
}

// t -> B(-t) on the mirrored grid. Applying it twice restores the input
// bit-for-bit.
inline SampledPath reverse(const SampledPath& p) {
    require(!p.values.empty(), "reverse: empty path");
    SampledPath r = p;
    r.t0 = -p.back_time();
    std::reverse(r.values.begin(), r.values.end());
    return r;
}

// s -> B(t+s) - B(t). t must lie on the grid; no interpolation is done.
inline SampledPath shift(const SampledPath& p, double t) {
    require(!p.values.empty(), "shift: empty path");
    const double raw = (t - p.t0) / p.dt;
    const double r = std::round(raw);
    require(std::abs(raw - r) <= 1e-9 * std::max(1.0, std::abs(raw)) &&
                r >= 0.0 && r < static_cast<double>(p.values.size()),
            "shift: t is not a grid point of the path");
    const auto k = static_cast<std::size_t>(r);
    SampledPath q = p;
    q.t0 = p.t0 - t;
    const double b = p.values[k];
    for (double& v : q.values) v -= b;
    return q;
}

// sup over grid pairs with |s-u| <= a of |B_s - B_u| (modulus of continuity
// at lag a). O(n * lag) scan; lags are small in every diagnostic use.
inline double max_modulus(const SampledPath& p, double a) {
    require(a > 0.0, "max_modulus: lag must be positive");
    require(p.values.size() >= 2, "max_modulus: path too short");
    const auto maxlag = static_cast<std::size_t>(std::floor(a / p.dt + 1e-9));
    require(maxlag >= 1, "max_modulus: lag below grid resolution");
    double best = 0.0;
    const std::size_t n = p.values.size();
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::size_t hi = std::min(n - 1, k + maxlag);
        for (std::size_t j = k + 1; j <= hi; ++j)
            best = std::max(best, std::abs(p.values[j] - p.values[k]));
    }
    return best;
}

// CSV: header "t,value", one row per grid point, full double precision.
inline void write_csv(const SampledPath& p, std::ostream& os) {
    os << "t,value\n";
    char buf[64];
    for (std::size_t k = 0; k < p.values.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.time(k), p.values[k]);
        os << buf;
    }
}

} // namespace crfic
