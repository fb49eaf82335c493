// End-to-end acceptance harness. Each criterion prints exactly one verdict
// line; the process exits nonzero if any criterion fails. Runs the heavy
// statistical checks at full scale, so expect a few minutes of wall time.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crfic/cli.hpp"

namespace fs = std::filesystem;
using namespace crfic;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int g_failures = 0;

double now_s() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* pattern, ...) {
    va_list args;
    va_start(args, pattern);
    char buf[512];
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return std::string(buf);
}

void verdict(int idx, const char* what, bool pass, const std::string& detail) {
    std::printf("[%s] %d. %s (%s)\n", pass ? "PASS" : "FAIL", idx, what, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

using KeySet = std::set<std::pair<std::size_t, int>>;

KeySet event_keys(const std::vector<ExtremaEvent>& events, bool confirmed_only) {
    KeySet out;
    for (const auto& e : events) {
        if (confirmed_only && e.provisional) continue;
        out.emplace(e.index, static_cast<int>(e.kind));
    }
    return out;
}

// 1. The bilateral scan reproduces the brute-force extrema sequence, event by
//    event, on a thousand independent windows.
void criterion_extrema() {
    const double t0 = now_s();
    std::size_t events = 0, bad_paths = 0;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        const SampledPath p = sample_bilateral(seed, -50.0, 50.0, 1e-3);
        const BilateralResult bl = bilateral_extrema(p, 1.0);
        const ExtremaSequence bf = brute_force_extrema(p, 1.0);
        const KeySet kb = event_keys(bl.sequence.events, true);
        const KeySet kf = event_keys(bf.events, false);
        if (kb != kf || bl.status != ScanStatus::ok) ++bad_paths;
        events += kf.size();
    }
    verdict(1, "extrema scan matches brute force on 1000 paths", bad_paths == 0,
            fmt("%zu events, %zu mismatched paths, %.0fs", events, bad_paths, now_s() - t0));
}

// 2. The shifted-overlap estimator agrees with its closed form at gamma = 10
//    and resolves it to better than 1e-3.
void criterion_d_hat() {
    const double t0 = now_s();
    const EstimateReport rep = estimate_D_hat(10.0, 100000, 42);
    const double target = d_hat(10.0);
    const double z = (rep.estimate - target) / rep.stderr_mean;
    const bool pass = std::abs(z) <= 3.0 && rep.stderr_mean <= 1e-3;
    verdict(2, "D_hat(10) matches the closed form at 1e5 replicas", pass,
            fmt("est %.7f, target %.7f, z %+.2f, se %.2e, %.0fs", rep.estimate, target, z,
                rep.stderr_mean, now_s() - t0));
}

// 3. All six sampled-law tests pass at n = 1e4 for gamma in {2, 5}.
void criterion_distributions() {
    const double t0 = now_s();
    std::size_t passed = 0, total = 0;
    std::string worst = "-";
    double worst_margin = kInf;
    for (auto [gamma, seed] : {std::pair{2.0, 31415ull}, std::pair{5.0, 27182ull}}) {
        for (const KsReport& r : test_distributions(gamma, 10000, seed)) {
            ++total;
            if (r.pass) ++passed;
            const double margin = r.threshold - r.statistic;
            if (margin < worst_margin) {
                worst_margin = margin;
                worst = fmt("gamma %g %s", gamma, r.target.c_str());
            }
        }
    }
    verdict(3, "all distribution tests pass at n=1e4, gamma in {2,5}", passed == total,
            fmt("%zu/%zu, tightest margin %.4f on %s, %.0fs", passed, total, worst_margin,
                worst.c_str(), now_s() - t0));
}

// 4. The long-window free-energy estimate lands within 2% of the closed form,
//    and the invariant-density quadrature reproduces it to 1e-8 for
//    gamma = 1..20.
void criterion_free_energy() {
    const double t0 = now_s();
    McConfig cfg;
    cfg.dt = 4e-3;
    const EstimateReport fe = estimate_free_energy(2.0, 1e4, 4, cfg);
    const double f0 = free_energy(2.0, 0.0);
    const double rel = std::abs(fe.estimate - f0) / std::abs(f0);

    AnalyticConfig acfg;
    double worst = 0.0;
    for (int g = 1; g <= 20; ++g) {
        const double gamma = static_cast<double>(g);
        const double eps = std::exp(-gamma);
        const double cut = gamma + 45.0;
        const double norm = 2.0 * bessel_k(0.0, eps, acfg);
        auto f = [&](double x) { return std::exp(-eps * std::cosh(x) - x); };
        const double integral = detail::integrate(f, -cut, cut, acfg) / norm;
        worst = std::max(worst, std::abs(eps * integral - free_energy(gamma, 0.0, acfg)));
    }
    const bool pass = rel <= 0.02 && worst <= 1e-8;
    verdict(4, "free energy: long-window estimate and quadrature identity", pass,
            fmt("rel gap %.3f%%, worst quadrature gap %.2e, %.0fs", 100.0 * rel, worst,
                now_s() - t0));
}

// 5. Pathwise guarantees: two-start contraction at the confinement rate,
//    envelope bounds, anchored envelopes, and the linear-system ratio check.
void criterion_pathwise() {
    const double t0 = now_s();
    const double tol = 1e-3;
    std::size_t viol_contract = 0, viol_envelope = 0, viol_anchor = 0;
    for (double gamma : {2.0, 5.0}) {
        const double eps = std::exp(-gamma);
        const std::uint64_t base = gamma == 2.0 ? 9000 : 9200;
        for (std::uint64_t i = 0; i < 100; ++i) {
            const SampledPath p = sample_bilateral(base + i, 0.0, 10.0, 1e-3);
            const SdeTrajectory lo = integrate_l(p, gamma, 0.0, -kInf);
            const SdeTrajectory hi = integrate_l(p, gamma, 0.0, kInf);
            const SdeTrajectory mid = integrate_l(p, gamma, 0.0, 0.0);
            const SdeTrajectory m3 = integrate_l(p, gamma, 0.0, -3.0);
            const std::size_t n = lo.size();

            for (std::size_t k = 0; k < n; ++k)
                if (hi.l[k] < lo.l[k]) ++viol_contract;
            for (std::size_t s : {std::size_t{0}, std::size_t{2500}, std::size_t{5000}}) {
                const double base_gap = std::tanh(0.25 * (hi.l[s] - lo.l[s]));
                for (std::size_t k = s + 1; k < n; ++k) {
                    const double lhs = std::tanh(0.25 * (hi.l[k] - lo.l[k]));
                    const double rhs = std::exp(-2.0 * eps * p.dt * double(k - s)) *
                                       base_gap * (1.0 + tol);
                    if (lhs > rhs) ++viol_contract;
                }
            }

            const struct { double x; const SdeTrajectory* tr; } starts[] = {
                {-3.0, &m3}, {0.0, &mid}, {kInf, &hi}};
            for (std::size_t idx : {std::size_t{2000}, std::size_t{4000}, std::size_t{6000},
                                    std::size_t{8000}, std::size_t{10000}}) {
                for (const auto& st : starts) {
                    const EnvelopeBounds eb =
                        envelope_bounds(p, gamma, 0.0, st.x, p.time(idx));
                    const double l = st.tr->l[idx];
                    if (l < eb.lower - tol || l > eb.upper + tol) ++viol_envelope;
                }
            }

            const std::size_t ti = 2000;
            const double lt = hi.l[ti];
            const double bt = p.values[ti];
            double iu = 0.0, id = 0.0, eu_prev = 1.0, ed_prev = 1.0;
            for (std::size_t k = ti + 1; k < n; ++k) {
                const double eu = std::exp(2.0 * (p.values[k] - bt));
                const double ed = 1.0 / eu;
                iu += 0.5 * p.dt * (eu_prev + eu);
                id += 0.5 * p.dt * (ed_prev + ed);
                eu_prev = eu;
                ed_prev = ed;
                const double shift = lt + 2.0 * (p.values[k] - bt);
                const double lower = shift - std::log1p(eps * std::exp(lt) * iu);
                const double upper = shift + std::log1p(eps * std::exp(-lt) * id);
                if (hi.l[k] < lower - tol || hi.l[k] > upper + tol) ++viol_anchor;
            }
        }
    }

    const SampledPath p = sample_bilateral(123, 0.0, 50.0, 1e-4);
    const LinearSystemResult ls = integrate_linear_system(p, 2.0, 0.0);
    const SdeTrajectory tr = integrate_l(p, 2.0, 0.0, kInf);
    double worst = 0.0;
    for (std::size_t k = 10000; k < tr.size(); ++k)
        worst = std::max(worst, std::abs(ls.l_check[k] - tr.l[k]));

    const bool pass = viol_contract == 0 && viol_envelope == 0 && viol_anchor == 0 &&
                      worst <= 1e-2;
    verdict(5, "pathwise bounds hold on 200 trajectories", pass,
            fmt("contraction %zu, envelope %zu, anchored %zu violations; "
                "linear-system gap %.2e, %.0fs",
                viol_contract, viol_envelope, viol_anchor, worst, now_s() - t0));
}

// 6. Order-parameter estimates: sign-m closed form, the gamma*D lower bound,
//    the D >= D_sign_m ordering on matched seeds, the ergodic cross-check, and
//    growth of the finite-window sign agreement.
void criterion_order_parameter() {
    const double t0 = now_s();
    EstimateReport d[2], dsm[2];
    const double gammas[2] = {5.0, 10.0};
    const std::uint64_t seeds[2] = {1001, 1002};
    bool pass_a = true, pass_b = true, pass_c = true;
    std::string za;
    for (int i = 0; i < 2; ++i) {
        dsm[i] = estimate_D_sign_m(gammas[i], 10000, seeds[i]);
        d[i] = estimate_D(gammas[i], 10000, seeds[i]);
        const double z = (dsm[i].estimate - d_m_exact(gammas[i])) / dsm[i].stderr_mean;
        za += fmt("%s%+.2f", i ? "/" : "", z);
        pass_a = pass_a && std::abs(z) <= 3.0;
        pass_b = pass_b && gammas[i] * d[i].estimate >= 0.45;
        pass_c = pass_c && d[i].estimate >= dsm[i].estimate;
    }

    const EstimateReport erg = ergodic_discrepancy(5.0, 25000.0, 77);
    const double comb = std::hypot(erg.stderr_mean, d[0].stderr_mean);
    const double zd = (erg.estimate - d[0].estimate) / comb;
    const bool pass_d = std::abs(zd) <= 3.0;

    const CompareTable tab = compare_l_lhat({5.0, 10.0, 20.0}, 1000, 2025);
    bool pass_e = true;
    std::string agree;
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
        agree += fmt("%s%.3f", i ? "/" : "", tab.rows[i].sign_agreement);
        if (i > 0 && tab.rows[i].sign_agreement <= tab.rows[i - 1].sign_agreement)
            pass_e = false;
    }

    verdict(6, "order-parameter estimates line up across routes",
            pass_a && pass_b && pass_c && pass_d && pass_e,
            fmt("sign-m z %s; g*D %.3f/%.3f; ordering %s; ergodic z %+.2f; "
                "agreement %s; %.0fs",
                za.c_str(), gammas[0] * d[0].estimate, gammas[1] * d[1].estimate,
                pass_c ? "ok" : "violated", zd, agree.c_str(), now_s() - t0));
}

// 7. The discrete chain converges to the continuum free energy as the lattice
//    spacing shrinks, and the finite-size overlap identity balances.
void criterion_discrete() {
    const double t0 = now_s();
    const ScalingReport sc =
        scaling_limit_check(1.0, 0.0, 1.0, {1e-2, 1e-3, 1e-4}, 1000, 71);
    bool monotone = true;
    std::string gaps;
    for (std::size_t i = 0; i < sc.rows.size(); ++i) {
        gaps += fmt("%s%.4f", i ? "/" : "", sc.rows[i].gap);
        if (i > 0) {
            const double slack =
                3.0 * std::hypot(sc.rows[i].gap_stderr, sc.rows[i - 1].gap_stderr);
            if (sc.rows[i].gap >= sc.rows[i - 1].gap + slack) monotone = false;
        }
    }

    const OverlapReport ov = overlap_identity_check(50, 2.0, 0.0, 0.3, 10000, 4242);
    const double comb = std::hypot(ov.lhs_stderr, ov.rhs_stderr);
    const double z = (ov.lhs - ov.rhs) / comb;
    const bool pass = monotone && std::abs(z) <= 3.0;
    verdict(7, "scaling limit and overlap identity", pass,
            fmt("gaps %s %s; overlap z %+.2f; %.0fs", gaps.c_str(),
                monotone ? "shrink within CI" : "NOT monotone", z, now_s() - t0));
}

// 8. Every command produces byte-identical report payloads when rerun with the
//    same configuration and seed, no matter how many workers execute it.
void criterion_reproducibility() {
    const double t0 = now_s();
    const fs::path dir = fs::path("acceptance_scratch");
    fs::remove_all(dir);
    fs::create_directories(dir);

    auto base_config = [&](const std::string& command) {
        RunConfig rc;
        rc.command = command;
        rc.format = "json";
        rc.out_path = (dir / (command + ".json")).string();
        return rc;
    };

    std::vector<RunConfig> runs;
    {
        RunConfig rc = base_config("extrema");
        rc.gamma = 1.0; rc.ell = 20.0; rc.seed = 3;
        runs.push_back(rc);
        rc = base_config("simulate");
        rc.gamma = 2.0; rc.seed = 4;
        runs.push_back(rc);
        rc = base_config("estimate-d");
        rc.gamma = 2.0; rc.replicas = 150; rc.seed = 5;
        runs.push_back(rc);
        rc = base_config("estimate-dhat");
        rc.gamma = 2.0; rc.replicas = 300; rc.seed = 9;
        runs.push_back(rc);
        rc = base_config("ergodic");
        rc.gamma = 1.0; rc.ell = 400.0; rc.seed = 11;
        runs.push_back(rc);
        rc = base_config("free-energy");
        rc.gamma = 2.0; rc.ell = 100.0; rc.dt = 4e-3; rc.seed = 4;
        runs.push_back(rc);
        rc = base_config("analytic");
        rc.gamma_grid = {1.0, 2.0, 5.0, 10.0, 20.0};
        runs.push_back(rc);
        rc = base_config("distributions");
        rc.gamma = 2.0; rc.replicas = 300; rc.seed = 99;
        runs.push_back(rc);
        rc = base_config("discrete-scaling");
        rc.gamma = 1.0; rc.ell = 1.0; rc.deltas = {1e-2, 1e-3}; rc.replicas = 200;
        rc.seed = 5;
        runs.push_back(rc);
        rc = base_config("overlap");
        rc.sites = 10; rc.coupling = 2.0; rc.field = 0.0; rc.disorder = 0.3;
        rc.replicas = 300; rc.seed = 7;
        runs.push_back(rc);
    }

    std::size_t mismatches = 0;
    std::string first_bad;
    auto check_pair = [&](RunConfig rc) {
        rc.workers = 1;
        if (run(rc) != 0) { ++mismatches; first_bad = rc.command; return; }
        const fs::path out = rc.out_path;
        const fs::path side = out.string() + ".first";
        fs::rename(out, side);
        rc.workers = 3;
        if (run(rc) != 0) { ++mismatches; first_bad = rc.command; return; }
        const std::string a = payload_text(read_json_file(side.string()));
        const std::string b = payload_text(read_json_file(out.string()));
        if (a != b || a.empty()) {
            ++mismatches;
            if (first_bad.empty()) first_bad = rc.command;
        }
    };

    for (const RunConfig& rc : runs) check_pair(rc);

    RunConfig rep = base_config("report");
    rep.inputs = {(dir / "estimate-dhat.json").string()};
    check_pair(rep);

    verdict(8, "all 11 commands reproduce payloads across reruns and workers",
            mismatches == 0,
            fmt("%zu mismatches%s%s, %.0fs", mismatches, first_bad.empty() ? "" : " first: ",
                first_bad.c_str(), now_s() - t0));
}

} // namespace

int main() {
    criterion_extrema();
    criterion_d_hat();
    criterion_distributions();
    criterion_free_energy();
    criterion_pathwise();
    criterion_order_parameter();
    criterion_discrete();
    criterion_reproducibility();
    std::printf("%d of 8 criteria passed\n", 8 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
