#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "crfic/common.hpp"

namespace crfic {

inline constexpr double euler_gamma = 0.5772156649015328606;

// Quadrature controls shared by the closed-form evaluators. The tolerance is
// relative; integration panels double until two successive refinements agree.
struct AnalyticConfig {
    int nodes = 256;        // initial panel count
    double rel_tol = 1e-12; // stopping tolerance (also bounds truncation error)
};

namespace detail {

inline void validate(const AnalyticConfig& cfg) {
    require(cfg.nodes >= 64, "analytic: config needs at least 64 nodes");
    require(cfg.rel_tol > 0.0 && cfg.rel_tol <= 1e-3,
            "analytic: relative tolerance must lie in (0, 1e-3]");
}

// Trapezoid refinement with Simpson extrapolation. Each pass halves the step
// reusing previous evaluations; stops once two Simpson values agree.
template <class F>
double integrate(F&& f, double a, double b, const AnalyticConfig& cfg) {
    if (!(b > a)) return 0.0;
    const std::size_t n0 = static_cast<std::size_t>(cfg.nodes);
    double h = (b - a) / static_cast<double>(n0);
    double t = 0.5 * (f(a) + f(b));
    for (std::size_t i = 1; i < n0; ++i) t += f(a + h * static_cast<double>(i));
    t *= h;

    double simpson_prev = t;
    std::size_t n = n0;
    for (int pass = 0; pass < 16; ++pass) {
        double sum = 0.0;
        const double h2 = 0.5 * h;
        for (std::size_t i = 0; i < n; ++i)
            sum += f(a + h2 + h * static_cast<double>(i));
        const double t2 = 0.5 * t + h2 * sum;
        const double simpson = (4.0 * t2 - t) / 3.0;
        if (pass >= 1 &&
            std::abs(simpson - simpson_prev) <=
                cfg.rel_tol * std::abs(simpson) + 1e-300)
            return simpson;
        simpson_prev = simpson;
        t = t2;
        n *= 2;
        h = h2;
    }
    return simpson_prev;
}

// log cosh without overflow.
inline double log_cosh(double t) {
    const double a = std::abs(t);
    return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453094;
}

} // namespace detail

// Modified Bessel function of the second kind,
//   K_nu(x) = \int_0^\infty exp(-x cosh u) cosh(nu u) du,
// evaluated by truncated quadrature of this representation. Valid for any
// real order; the integrand is computed in log scale so large orders and
// small arguments do not overflow. Even in nu by construction.
inline double bessel_k(double nu, double x, const AnalyticConfig& cfg = {}) {
    detail::validate(cfg);
    require(std::isfinite(nu) && std::isfinite(x), "bessel_k: non-finite input");
    require(x > 0.0, "bessel_k: argument must be positive");
    nu = std::abs(nu);

    auto log_g = [&](double u) { return -x * std::cosh(u) + detail::log_cosh(nu * u); };

    // Locate the integrand's crest, then truncate where it has fallen by a
    // fixed log margin (double-exponential decay makes this cheap).
    double u_peak = 0.0;
    if (nu > x) u_peak = std::asinh(nu / x);
    double log_peak = log_g(0.0);
    for (double u = 0.0; u <= u_peak + 1.0; u += 0.125)
        log_peak = std::max(log_peak, log_g(u));

    const double margin = -std::log(cfg.rel_tol) + 12.0;
    double upper = u_peak + 1.0;
    while (log_g(upper) > log_peak - margin) upper *= 1.5;

    auto g = [&](double u) { return std::exp(log_g(u)); };
    return detail::integrate(g, 0.0, upper, cfg);
}

// Invariant density of the one-sided interface process,
//   p(x) = exp(-eps cosh x) / (2 K_0(eps)),  eps = e^{-gamma}.
inline double p_gamma(double gamma, double x, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "p_gamma: gamma must be positive");
    const double eps = std::exp(-gamma);
    return std::exp(-eps * std::cosh(x)) / (2.0 * bessel_k(0.0, eps, cfg));
}

namespace detail {

// Numeric support radius: beyond it the density underflows.
inline double p_gamma_cutoff(double gamma) { return gamma + 45.0; }

} // namespace detail

inline double p_gamma_cdf(double gamma, double x, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "p_gamma_cdf: gamma must be positive");
    const double lo = -detail::p_gamma_cutoff(gamma);
    if (x <= lo) return 0.0;
    // Integrate the shorter tail and use symmetry for the other half.
    if (x > 0.0) return 1.0 - p_gamma_cdf(gamma, -x, cfg);
    const double eps = std::exp(-gamma);
    const double norm = 2.0 * bessel_k(0.0, eps, cfg);
    auto density = [&](double y) { return std::exp(-eps * std::cosh(y)) / norm; };
    return detail::integrate(density, lo, x, cfg);
}

// Density of the sum of two independent copies of the invariant law:
//   (p * p)(x) = K_0(2 eps cosh(x/2)) / (2 K_0(eps)^2).
inline double p_convolution(double gamma, double x, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "p_convolution: gamma must be positive");
    const double eps = std::exp(-gamma);
    const double k0 = bessel_k(0.0, eps, cfg);
    const double arg = 2.0 * eps * std::cosh(0.5 * x);
    if (arg > 700.0) return 0.0; // K_0 underflows
    return bessel_k(0.0, arg, cfg) / (2.0 * k0 * k0);
}

// Free energy density: alpha + eps K_{alpha-1}(eps) / K_alpha(eps).
inline double free_energy(double gamma, double alpha, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "free_energy: gamma must be positive");
    require(std::isfinite(alpha), "free_energy: alpha must be finite");
    const double eps = std::exp(-gamma);
    return alpha + eps * bessel_k(alpha - 1.0, eps, cfg) / bessel_k(alpha, eps, cfg);
}

// Density of domain walls: minus the gamma-derivative of the drift-free free
// energy, by Richardson-extrapolated central differences. Asymptotically
// (gamma + log 2 - euler_gamma)^{-2}.
inline double wall_density(double gamma, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "wall_density: gamma must be positive");
    const double h = std::min(1e-4, 0.25 * gamma);
    auto d = [&](double step) {
        return (free_energy(gamma - step, 0.0, cfg) - free_energy(gamma + step, 0.0, cfg)) /
               (2.0 * step);
    };
    const double d1 = d(h);
    const double d2 = d(0.5 * h);
    return (4.0 * d2 - d1) / 3.0;
}

// Density of disorder energy: eps^2 (K_0^2 + K_2 K_0 - 2 K_1^2) / K_0^2.
inline double disorder_energy(double gamma, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "disorder_energy: gamma must be positive");
    const double eps = std::exp(-gamma);
    const double k0 = bessel_k(0.0, eps, cfg);
    const double k1 = bessel_k(1.0, eps, cfg);
    const double k2 = bessel_k(2.0, eps, cfg);
    return eps * eps * (k0 * k0 + k2 * k0 - 2.0 * k1 * k1) / (k0 * k0);
}

namespace detail {

// Dilogarithm by its power series; adequate for |z| < 1, which is all the
// closed forms below ever need.
inline double dilog(double z) {
    require(std::abs(z) < 1.0, "dilog: series needs |z| < 1");
    double term = z, sum = z;
    for (int k = 2; k < 2000; ++k) {
        term *= z;
        const double add = term / static_cast<double>(k * k);
        sum += add;
        if (std::abs(add) <= 1e-18 * std::abs(sum) + 1e-300) break;
    }
    return sum;
}

} // namespace detail

// Expected overlap discrepancy when both endpoint potentials are replaced by
// independent uniform draws on [-gamma, gamma]:
//   log2/gamma - pi^2/(24 gamma^2) - Li_2(-e^{-2 gamma})/(2 gamma^2).
// Equivalently the double integral of (1 + e^{|l+r|})^{-1} over the uniform
// square; the last two terms are the exact tail corrections of the first.
inline double d_hat(double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), "d_hat: gamma must be positive");
    const double pi = 3.14159265358979323846;
    const double g2 = gamma * gamma;
    return std::log(2.0) / gamma - pi * pi / (24.0 * g2) -
           detail::dilog(-std::exp(-2.0 * gamma)) / (2.0 * g2);
}

// Discrepancy of the sign(m)-strategy: integral of (1 + e^{|x|})^{-1} against
// the two-sided stationary convolution density.
inline double d_m_exact(double gamma, const AnalyticConfig& cfg = {}) {
    require(gamma > 0.0 && std::isfinite(gamma), "d_m_exact: gamma must be positive");
    const double eps = std::exp(-gamma);
    const double k0 = bessel_k(0.0, eps, cfg);
    AnalyticConfig inner = cfg;
    inner.rel_tol = std::max(cfg.rel_tol * 1e-2, 1e-14);
    auto f = [&](double x) {
        const double arg = 2.0 * eps * std::cosh(0.5 * x);
        if (arg > 700.0) return 0.0;
        return bessel_k(0.0, arg, inner) / ((2.0 * k0 * k0) * (1.0 + std::exp(x)));
    };
    // Even integrand: twice the right half. The convolution density dies off
    // once 2 eps cosh(x/2) is order one plus the underflow margin.
    const double upper = 2.0 * (gamma + std::log(2.0)) + 80.0;
    return 2.0 * detail::integrate(f, 0.0, upper, cfg);
}

// Second-order expansion of d_m_exact for large gamma.
inline double d_m_expansion(double gamma) {
    require(gamma > 0.0 && std::isfinite(gamma), "d_m_expansion: gamma must be positive");
    const double pi = 3.14159265358979323846;
    const double l2 = std::log(2.0);
    const double c2 = pi * pi / 24.0 + 1.5 * l2 * l2 - euler_gamma * l2;
    return l2 / gamma - c2 / (gamma * gamma);
}

// Sweep table used by the command-line front end.
inline void write_analytic_csv(const std::vector<double>& gammas, std::ostream& os,
                               const AnalyticConfig& cfg = {}) {
    os << "gamma,f0,wall_density,disorder_energy,d_hat,d_m_exact,d_m_expansion\n";
    char buf[256];
    for (double g : gammas) {
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                      g, free_energy(g, 0.0, cfg), wall_density(g, cfg),
                      disorder_energy(g, cfg), d_hat(g), d_m_exact(g, cfg),
                      d_m_expansion(g));
        os << buf;
    }
}

} // namespace crfic
