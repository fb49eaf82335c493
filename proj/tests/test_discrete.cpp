#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "crfic/discrete.hpp"
#include "crfic/rng.hpp"

using namespace crfic;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

DiscreteChain seeded_chain(std::size_t n, double j, double h, double delta, std::uint64_t seed,
                           BoundaryCondition bc = BoundaryCondition::plus_free) {
    DiscreteChain c;
    c.n = n;
    c.j = j;
    c.h = h;
    c.delta = delta;
    c.boundary = bc;
    c.omega.resize(n);
    NormalStream gen(seed, 1);
    for (auto& w : c.omega) w = gen.normal();
    return c;
}

// Direct enumeration of the 2^n configurations, usable up to n ~ 16. Returns
// the log partition function and fills mags with the per-site averages.
double brute_log_partition(const DiscreteChain& c, std::vector<double>* mags = nullptr) {
    const auto n = c.n;
    std::vector<double> energies;
    std::vector<std::vector<double>> spins;
    double mx = -kInf;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        double sp = 1.0, e = 0.0;
        std::vector<double> sig(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double s = (mask >> k) & 1 ? 1.0 : -1.0;
            sig[k] = s;
            e += c.j * s * sp + (c.h + c.delta * c.omega[k]) * s;
            sp = s;
        }
        if (c.boundary == BoundaryCondition::plus_plus && sig[n - 1] != 1.0) continue;
        energies.push_back(e);
        spins.push_back(std::move(sig));
        if (e > mx) mx = e;
    }
    double z = 0.0;
    std::vector<double> num(n, 0.0);
    for (std::size_t i = 0; i < energies.size(); ++i) {
        const double w = std::exp(energies[i] - mx);
        z += w;
        for (std::size_t k = 0; k < n; ++k) num[k] += w * spins[i][k];
    }
    if (mags) {
        mags->resize(n);
        for (std::size_t k = 0; k < n; ++k) (*mags)[k] = num[k] / z;
    }
    return mx + std::log(z);
}

} // namespace

TEST_CASE("one-site chain matches the hand formula", "[discrete]") {
    DiscreteChain c;
    c.n = 1;
    c.j = 0.8;
    c.h = 0.3;
    c.delta = 0.25;
    c.omega = {1.7};

    // log((e^{J+f} + e^{-J-f}) / (e^J + e^{-J})) with f = h + delta*omega_1
    REQUIRE(transfer_ratio(c) == Catch::Approx(0.587370944470323128).margin(1e-12));
    REQUIRE(log_partition(c) ==
            Catch::Approx(std::log(2.0 * std::cosh(0.8 + 0.3 + 0.25 * 1.7))).margin(1e-12));

    const std::vector<double> mag = site_magnetizations(c);
    REQUIRE(mag.size() == 1);
    REQUIRE(mag[0] == Catch::Approx(std::tanh(0.8 + 0.3 + 0.25 * 1.7)).margin(1e-14));

    // clamping the single site to +1 leaves only one configuration
    c.boundary = BoundaryCondition::plus_plus;
    REQUIRE(log_partition(c) == Catch::Approx(0.8 + 0.3 + 0.25 * 1.7).margin(1e-14));
}

TEST_CASE("zero fields give a zero log ratio exactly", "[discrete]") {
    DiscreteChain c = seeded_chain(40, 1.2, 0.0, 0.0, 9);
    REQUIRE(transfer_ratio(c) == 0.0);
    c.boundary = BoundaryCondition::plus_plus;
    REQUIRE(transfer_ratio(c) == 0.0);
}

TEST_CASE("log partition matches direct enumeration", "[discrete]") {
    for (const auto bc : {BoundaryCondition::plus_free, BoundaryCondition::plus_plus}) {
        const DiscreteChain c = seeded_chain(10, 1.3, -0.2, 0.6, 123, bc);
        const double brute = brute_log_partition(c);
        REQUIRE(log_partition(c, TransferDirection::forward) == Catch::Approx(brute).margin(1e-11));
        REQUIRE(log_partition(c, TransferDirection::backward) ==
                Catch::Approx(brute).margin(1e-11));
    }
}

TEST_CASE("transfer direction does not matter", "[discrete]") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        DiscreteChain c = seeded_chain(60, 2.1, 0.15, 0.4, seed);
        REQUIRE(transfer_ratio(c, TransferDirection::forward) ==
                Catch::Approx(transfer_ratio(c, TransferDirection::backward)).margin(1e-12));
        c.boundary = BoundaryCondition::plus_plus;
        REQUIRE(log_partition(c, TransferDirection::forward) ==
                Catch::Approx(log_partition(c, TransferDirection::backward)).margin(1e-12));
    }
}

TEST_CASE("zero-field partition function has the closed form", "[discrete]") {
    const std::size_t n = 25;
    const double j = 1.7;
    DiscreteChain c = seeded_chain(n, j, 0.0, 0.0, 2);
    REQUIRE(log_partition(c) ==
            Catch::Approx(static_cast<double>(n) * std::log(2.0 * std::cosh(j))).margin(1e-11));
    // both ends clamped: ((2cosh J)^n + (2sinh J)^n) / 2
    c.boundary = BoundaryCondition::plus_plus;
    const double expected = static_cast<double>(n) * std::log(2.0 * std::cosh(j)) +
                            std::log1p(std::pow(std::tanh(j), static_cast<double>(n))) -
                            std::log(2.0);
    REQUIRE(log_partition(c) == Catch::Approx(expected).margin(1e-11));
}

TEST_CASE("constant energy shifts leave the ratio unchanged", "[discrete]") {
    const DiscreteChain c = seeded_chain(30, 1.1, -0.3, 0.5, 77);
    const double r0 = transfer_ratio(c);
    for (double shift : {0.9, -2.4}) {
        DiscreteChain cg = c;
        for (auto& w : cg.omega) w += shift;
        cg.h = c.h - c.delta * shift;
        REQUIRE(transfer_ratio(cg) == Catch::Approx(r0).margin(1e-12));
    }
}

TEST_CASE("strong coupling freezes the chain onto its boundary spin", "[discrete]") {
    const DiscreteChain c = seeded_chain(100, 25.0, 0.1, 0.05, 6);
    double field_sum = 0.0;
    for (double w : c.omega) field_sum += c.h + c.delta * w;
    REQUIRE(transfer_ratio(c) == Catch::Approx(field_sum).margin(1e-9));
}

TEST_CASE("site magnetizations match enumeration and stay consistent", "[discrete]") {
    for (const auto bc : {BoundaryCondition::plus_free, BoundaryCondition::plus_plus}) {
        const DiscreteChain c = seeded_chain(10, 1.3, -0.2, 0.6, 123, bc);
        std::vector<double> brute_mags;
        brute_log_partition(c, &brute_mags);
        const std::vector<double> mag = site_magnetizations(c);
        REQUIRE(mag.size() == c.n);
        for (std::size_t k = 0; k < c.n; ++k)
            REQUIRE(mag[k] == Catch::Approx(brute_mags[k]).margin(1e-11));
        if (bc == BoundaryCondition::plus_plus) REQUIRE(mag.back() == Catch::Approx(1.0));
    }
}

TEST_CASE("two-replica chain factorizes into the tensor square", "[discrete]") {
    for (const auto bc : {BoundaryCondition::plus_free, BoundaryCondition::plus_plus}) {
        const DiscreteChain c = seeded_chain(24, 1.6, 0.25, 0.7, 31, bc);
        const std::vector<double> mag = site_magnetizations(c);
        const std::vector<double> cor = replica_pair_correlations(c);
        REQUIRE(cor.size() == c.n);
        for (std::size_t k = 0; k < c.n; ++k) {
            REQUIRE(cor[k] == Catch::Approx(mag[k] * mag[k]).margin(1e-12));
            REQUIRE(cor[k] <= 1.0 + 1e-12);
            REQUIRE(cor[k] >= -1.0 - 1e-12);
        }
    }
}

TEST_CASE("continuum sampler has the exact exponential mean", "[discrete]") {
    const std::size_t n = 2000;
    std::vector<double> lz(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        NormalStream gen(2718, detail::stream_id(32, i));
        lz[i] = sample_continuum_log_z(gen, 1.0, 0.0, 1.0, 1e-3);
        z[i] = std::exp(lz[i]);
    }
    const detail::SampleMoments ml = detail::sample_moments(lz);
    const detail::SampleMoments mz = detail::sample_moments(z);
    REQUIRE(ml.mean == Catch::Approx(0.24707549826361039).margin(1e-13));
    REQUIRE(ml.var == Catch::Approx(0.41100242924722208).margin(1e-13));
    // averaging over the driving noise, E[Z] = e^{ell/2} regardless of gamma
    REQUIRE(std::abs(mz.mean - std::exp(0.5)) <= 3.0 * mz.se_mean);

    REQUIRE_THROWS_AS(
        [] {
            NormalStream g(1, 1);
            return sample_continuum_log_z(g, 1.0, 0.0, 1.0, 3e-4); // off the grid
        }(),
        invalid_argument_error);
    REQUIRE_THROWS_AS(
        [] {
            NormalStream g(1, 1);
            return sample_continuum_log_z(g, -1.0, 0.0, 1.0, 1e-3);
        }(),
        invalid_argument_error);
}

TEST_CASE("scaling report carries per-spacing moment gaps", "[discrete]") {
    const ScalingReport rep = scaling_limit_check(1.0, 0.0, 1.0, {1e-2, 1e-3}, 300, 5);
    REQUIRE(rep.rows.size() == 2);
    REQUIRE(rep.samples == 300);
    REQUIRE(rep.seed == 5);
    REQUIRE(rep.config_digest == "b5cc07df5434f261");

    const ScalingRow& a = rep.rows[0];
    REQUIRE(a.delta == 1e-2);
    REQUIRE(a.mean_log_ratio == Catch::Approx(0.27152640907465808).margin(1e-13));
    REQUIRE(a.var_log_ratio == Catch::Approx(0.38751634192572842).margin(1e-13));
    REQUIRE(a.continuum_mean == Catch::Approx(0.22964202894054647).margin(1e-13));
    REQUIRE(a.continuum_var == Catch::Approx(0.45776780010176904).margin(1e-13));
    REQUIRE(a.gap == Catch::Approx(0.11213583831015222).margin(1e-13));
    REQUIRE(a.gap_stderr == Catch::Approx(0.077200571802325771).margin(1e-13));

    const ScalingRow& b = rep.rows[1];
    REQUIRE(b.delta == 1e-3);
    REQUIRE(b.mean_log_ratio == Catch::Approx(0.35277747418765404).margin(1e-13));
    REQUIRE(b.var_log_ratio == Catch::Approx(0.51022255607553668).margin(1e-13));
    REQUIRE(b.continuum_mean == a.continuum_mean); // one shared reference ensemble
    REQUIRE(b.gap == Catch::Approx(0.17559020122087521).margin(1e-13));

    // gap recomputes from its own row
    REQUIRE(a.gap == Catch::Approx(std::abs(a.mean_log_ratio - a.continuum_mean) +
                                   std::abs(a.var_log_ratio - a.continuum_var))
                         .margin(1e-15));

    std::ostringstream os;
    write_csv(os, rep);
    const std::string csv = os.str();
    REQUIRE(csv.rfind("delta,mean_log_ratio,var_log_ratio,continuum_mean,continuum_var,gap\n",
                      0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 3);
    REQUIRE(csv.find("0.01,0.27152640907465808,") != std::string::npos);
}

TEST_CASE("scaling check is deterministic and thread independent", "[discrete]") {
    McConfig three;
    three.threads = 3;
    const ScalingReport r1 = scaling_limit_check(1.0, 0.0, 1.0, {1e-2}, 200, 8);
    const ScalingReport r2 = scaling_limit_check(1.0, 0.0, 1.0, {1e-2}, 200, 8, three);
    REQUIRE(r1.rows[0].mean_log_ratio == r2.rows[0].mean_log_ratio);
    REQUIRE(r1.rows[0].var_log_ratio == r2.rows[0].var_log_ratio);
    REQUIRE(r1.rows[0].continuum_mean == r2.rows[0].continuum_mean);
    REQUIRE(r1.rows[0].gap == r2.rows[0].gap);
    REQUIRE(r1.config_digest == r2.config_digest);

    const ScalingReport r3 = scaling_limit_check(1.0, 0.0, 1.0, {1e-2}, 200, 9);
    REQUIRE(r3.rows[0].mean_log_ratio != r1.rows[0].mean_log_ratio);
    REQUIRE(r3.config_digest != r1.config_digest);
}

TEST_CASE("drift shifts the mean log ratio by about alpha ell", "[discrete]") {
    const ScalingReport rep = scaling_limit_check(1.0, 0.8, 1.0, {1e-3}, 400, 17);
    REQUIRE(std::abs(rep.rows[0].mean_log_ratio - 0.8) <= 0.12);
    // and the continuum reference drifts along with it
    REQUIRE(std::abs(rep.rows[0].continuum_mean - 0.8) <= 0.12);
}

TEST_CASE("overlap identity holds at one site against the Gaussian closed form",
          "[discrete]") {
    const OverlapReport r = overlap_identity_check(1, 0.8, 0.3, 0.25, 3000, 13);
    REQUIRE(r.n == 3000);
    REQUIRE(r.lhs == Catch::Approx(0.26321882358621312).margin(1e-13));
    REQUIRE(r.lhs_stderr == Catch::Approx(0.003992988148108753).margin(1e-13));
    REQUIRE(r.rhs == Catch::Approx(0.25888669825619043).margin(1e-13));
    REQUIRE(r.rhs_stderr == Catch::Approx(0.00036677393257581137).margin(1e-13));
    REQUIRE(r.config_digest == "91ab54f8318c1194");

    // E[(h + d w) tanh(J + h + d w)] = h E[tanh] + d^2 E[sech^2] for Gaussian w
    const double oracle = 0.258419510938780;
    REQUIRE(std::abs(r.lhs - oracle) <= 3.0 * r.lhs_stderr);
    REQUIRE(std::abs(r.rhs - oracle) <= 3.0 * r.rhs_stderr);
    const double comb = std::sqrt(r.lhs_stderr * r.lhs_stderr + r.rhs_stderr * r.rhs_stderr);
    REQUIRE(std::abs(r.lhs - r.rhs) <= 3.0 * comb);
}

TEST_CASE("without disorder both overlap sides collapse to the field term", "[discrete]") {
    const OverlapReport r = overlap_identity_check(5, 1.0, 0.4, 0.0, 200, 20);
    // the finite difference only carries its truncation error here
    REQUIRE(std::abs(r.lhs - r.rhs) <= 1e-6);
    REQUIRE(r.lhs_stderr <= 1e-12);
    REQUIRE(r.rhs_stderr <= 1e-12);
}

TEST_CASE("overlap identity holds on a long disordered chain", "[discrete]") {
    const OverlapReport r = overlap_identity_check(50, 2.0, 0.0, 0.3, 2000, 31);
    REQUIRE(r.lhs == Catch::Approx(2.4633432083167643).margin(1e-12));
    REQUIRE(r.lhs_stderr == Catch::Approx(0.029220720091270767).margin(1e-13));
    REQUIRE(r.rhs == Catch::Approx(2.4777152836570373).margin(1e-12));
    REQUIRE(r.rhs_stderr == Catch::Approx(0.020445447702637811).margin(1e-13));
    const double comb = std::sqrt(r.lhs_stderr * r.lhs_stderr + r.rhs_stderr * r.rhs_stderr);
    REQUIRE(std::abs(r.lhs - r.rhs) <= 3.0 * comb);

    McConfig three;
    three.threads = 3;
    const OverlapReport rt = overlap_identity_check(50, 2.0, 0.0, 0.3, 2000, 31, three);
    REQUIRE(rt.lhs == r.lhs);
    REQUIRE(rt.rhs == r.rhs);
    REQUIRE(rt.config_digest == r.config_digest);
}

TEST_CASE("discrete interfaces reject malformed input", "[discrete]") {
    DiscreteChain c = seeded_chain(4, 1.0, 0.1, 0.2, 1);

    DiscreteChain bad = c;
    bad.n = 0;
    bad.omega.clear();
    REQUIRE_THROWS_AS(log_partition(bad), invalid_argument_error);

    bad = c;
    bad.omega.pop_back();
    REQUIRE_THROWS_AS(transfer_ratio(bad), invalid_argument_error);

    bad = c;
    bad.j = -0.5;
    REQUIRE_THROWS_AS(log_partition(bad), invalid_argument_error);

    bad = c;
    bad.delta = -1.0;
    REQUIRE_THROWS_AS(site_magnetizations(bad), invalid_argument_error);

    bad = c;
    bad.omega[2] = kInf;
    REQUIRE_THROWS_AS(replica_pair_correlations(bad), invalid_argument_error);

    REQUIRE_THROWS_AS(scaling_limit_check(0.0, 0.0, 1.0, {1e-2}, 100, 1),
                      invalid_argument_error);
    REQUIRE_THROWS_AS(scaling_limit_check(1.0, 0.0, 1.0, {}, 100, 1), invalid_argument_error);
    REQUIRE_THROWS_AS(scaling_limit_check(1.0, 0.0, 1.0, {2.0}, 100, 1),
                      invalid_argument_error);
    REQUIRE_THROWS_AS(scaling_limit_check(1.0, 0.0, 1.0, {1e-2}, 1, 1), invalid_argument_error);
    REQUIRE_THROWS_AS(overlap_identity_check(0, 1.0, 0.1, 0.2, 100, 1), invalid_argument_error);
    REQUIRE_THROWS_AS(overlap_identity_check(5, -1.0, 0.1, 0.2, 100, 1),
                      invalid_argument_error);
    REQUIRE_THROWS_AS(overlap_identity_check(5, 1.0, 0.1, -0.2, 100, 1),
                      invalid_argument_error);
}
