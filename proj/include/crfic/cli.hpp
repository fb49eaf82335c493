#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "crfic/analytic.hpp"
#include "crfic/common.hpp"
#include "crfic/discrete.hpp"
#include "crfic/extrema.hpp"
#include "crfic/mc.hpp"
#include "crfic/path.hpp"
#include "crfic/report.hpp"
#include "crfic/rng.hpp"
#include "crfic/sde.hpp"

namespace crfic {

// Effective configuration of one invocation, after merging defaults, the
// optional JSON config file and the command-line flags (in that order of
// precedence). The trailing fields only matter to specific commands.
struct RunConfig {
    std::string command;
    double gamma = 0.0;
    double alpha = 0.0;
    double ell = 0.0;
    double dt = 0.0; // 0: let the module pick its default grid
    std::size_t replicas = 1000;
    double window_factor = 2.0;
    std::uint64_t seed = 1;
    std::string out_path;
    std::string format; // "json", "csv", or empty to infer from out_path
    unsigned workers = 0;

    std::vector<double> gamma_grid;             // analytic
    std::vector<double> deltas{1e-2, 1e-3, 1e-4}; // discrete-scaling
    std::size_t sites = 50;                     // overlap
    double coupling = 2.0;                      // overlap
    double field = 0.0;                         // overlap
    double disorder = 0.3;                      // overlap
    std::vector<std::string> inputs;            // report
};

namespace detail {

inline std::string resolved_format(const RunConfig& rc) {
    if (!rc.format.empty()) {
        require(rc.format == "json" || rc.format == "csv", "run: format must be json or csv");
        return rc.format;
    }
    return rc.out_path.ends_with(".csv") ? "csv" : "json";
}

// r.csv -> r.json; anything without a .csv suffix gets .json appended.
inline std::string json_sibling(const std::string& out) {
    if (out.ends_with(".csv")) return out.substr(0, out.size() - 4) + ".json";
    return out + ".json";
}

inline Json estimate_json(const EstimateReport& r) {
    Json j;
    j["name"] = r.name;
    j["estimate"] = r.estimate;
    j["stderr"] = r.stderr_mean;
    j["n"] = r.n;
    j["ci_level"] = r.ci_level;
    j["degenerate_labels"] = r.degenerate_labels;
    j["module_digest"] = r.config_digest;
    return j;
}

inline std::string estimate_csv(const EstimateReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "name,estimate,stderr,n\n%s,%.17g,%.17g,%zu\n",
                  r.name.c_str(), r.estimate, r.stderr_mean, r.n);
    return buf;
}

// Carrier for one dispatched command: the reproducible pieces of the report
// plus an optional CSV table.
struct CommandOutput {
    Json config;
    Json result;
    std::string csv; // empty: the command has no tabular data
};

inline CommandOutput run_extrema(const RunConfig& rc) {
    require(std::isfinite(rc.gamma) && rc.gamma > 0.0, "extrema: gamma must be positive");
    require(std::isfinite(rc.ell) && rc.ell > 0.0, "extrema: ell must be positive");
    const double dt = rc.dt > 0.0 ? rc.dt : default_step(rc.gamma);
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["ell"] = rc.ell;
    out.config["dt"] = dt;
    out.config["seed"] = rc.seed;

    const SampledPath p = sample_bilateral(rc.seed, -rc.ell, rc.ell, dt);
    const BilateralResult bl = bilateral_extrema(p, rc.gamma);
    if (bl.status == ScanStatus::window_too_short)
        throw window_exhausted("extrema: no stop time inside [-ell, ell]; enlarge ell");

    Json events = Json::array();
    for (const ExtremaEvent& e : bl.sequence.events) {
        Json je;
        je["index"] = e.index;
        je["time"] = e.time;
        je["value"] = e.value;
        je["kind"] = e.kind == ExtremumKind::maximum ? "max" : "min";
        je["provisional"] = e.provisional;
        events.push_back(std::move(je));
    }
    Json origin;
    origin["label"] = bl.origin.label;
    origin["degenerate"] = bl.origin.degenerate;
    origin["right_candidate_kept"] = bl.origin.u_kept;
    origin["left_candidate_kept"] = bl.origin.v_kept;
    out.result["n_events"] = bl.sequence.events.size();
    out.result["origin"] = std::move(origin);
    out.result["events"] = std::move(events);

    std::ostringstream os;
    write_csv(bl.sequence.events, os);
    out.csv = os.str();
    return out;
}

inline CommandOutput run_simulate(const RunConfig& rc) {
    require(std::isfinite(rc.gamma) && rc.gamma > 0.0, "simulate: gamma must be positive");
    const double dt = rc.dt > 0.0 ? rc.dt : default_step(rc.gamma);
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["dt"] = dt;
    out.config["window_factor"] = rc.window_factor;
    out.config["seed"] = rc.seed;

    NormalStream gen(rc.seed, 0);
    const AdaptiveWindow w = sample_adaptive_window(gen, rc.gamma, dt, rc.window_factor);
    const double inf = std::numeric_limits<double>::infinity();
    const SdeTrajectory lt = integrate_l(w.path, rc.gamma, w.path.t0, inf);
    const SdeTrajectory rt = integrate_r(w.path, rc.gamma, w.path.back_time(), inf);
    const std::size_t k0 = grid_index(w.path, 0.0, "simulate");
    const double l0 = lt.l[k0];
    const double r0 = rt.l[k0];
    out.result["t_min"] = w.path.t0;
    out.result["t_max"] = w.path.back_time();
    out.result["steps"] = w.path.values.size();
    out.result["left_confirm"] = w.left_confirm;
    out.result["right_confirm"] = w.right_confirm;
    out.result["l0"] = l0;
    out.result["r0"] = r0;
    out.result["m0"] = l0 + r0;
    out.result["sign"] = l0 + r0 > 0.0 ? 1 : (l0 + r0 < 0.0 ? -1 : 0);

    std::ostringstream os;
    write_csv(lt, rt, os);
    out.csv = os.str();
    return out;
}

inline CommandOutput run_estimate(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["replicas"] = rc.replicas;
    out.config["dt"] = rc.dt;
    out.config["window_factor"] = rc.window_factor;
    out.config["seed"] = rc.seed;
    const EstimateReport rep = rc.command == "estimate-d"
                                   ? estimate_D(rc.gamma, rc.replicas, rc.seed, cfg)
                                   : estimate_D_hat(rc.gamma, rc.replicas, rc.seed, cfg);
    out.result = estimate_json(rep);
    out.csv = estimate_csv(rep);
    return out;
}

inline CommandOutput run_ergodic(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["ell"] = rc.ell;
    out.config["dt"] = rc.dt;
    out.config["seed"] = rc.seed;
    const EstimateReport rep = ergodic_discrepancy(rc.gamma, rc.ell, rc.seed, cfg);
    out.result = estimate_json(rep);
    out.csv = estimate_csv(rep);
    return out;
}

inline CommandOutput run_free_energy(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["ell"] = rc.ell;
    out.config["dt"] = rc.dt;
    out.config["seed"] = rc.seed;
    const EstimateReport rep = estimate_free_energy(rc.gamma, rc.ell, rc.seed, cfg);
    out.result = estimate_json(rep);
    if (std::isfinite(rc.gamma)) {
        const double f0 = free_energy(rc.gamma, 0.0);
        out.result["f0_closed_form"] = f0;
        if (f0 != 0.0) out.result["relative_gap"] = (rep.estimate - f0) / f0;
    }
    out.csv = estimate_csv(rep);
    return out;
}

inline CommandOutput run_analytic(const RunConfig& rc) {
    require(!rc.gamma_grid.empty(), "analytic: --gamma-grid is required");
    for (double g : rc.gamma_grid)
        require(std::isfinite(g) && g > 0.0, "analytic: gamma grid entries must be positive");
    CommandOutput out;
    out.config["gamma_grid"] = rc.gamma_grid;
    out.config["seed"] = rc.seed;

    Json rows = Json::array();
    for (double g : rc.gamma_grid) {
        Json row;
        row["gamma"] = g;
        row["f0"] = free_energy(g, 0.0);
        row["wall_density"] = wall_density(g);
        row["disorder_energy"] = disorder_energy(g);
        row["d_hat"] = d_hat(g);
        row["d_m_exact"] = d_m_exact(g);
        row["d_m_expansion"] = d_m_expansion(g);
        rows.push_back(std::move(row));
    }
    out.result["rows"] = std::move(rows);

    std::ostringstream os;
    write_analytic_csv(rc.gamma_grid, os);
    out.csv = os.str();
    return out;
}

inline CommandOutput run_distributions(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["replicas"] = rc.replicas;
    out.config["dt"] = rc.dt;
    out.config["seed"] = rc.seed;
    const std::vector<KsReport> reps = test_distributions(rc.gamma, rc.replicas, rc.seed, cfg);
    Json tests = Json::array();
    bool all = true;
    std::string csv = "target,statistic,n,threshold,pass\n";
    char buf[256];
    for (const KsReport& r : reps) {
        Json t;
        t["target"] = r.target;
        t["statistic"] = r.statistic;
        t["n"] = r.n;
        t["threshold"] = r.threshold;
        t["pass"] = r.pass;
        tests.push_back(std::move(t));
        all = all && r.pass;
        std::snprintf(buf, sizeof buf, "\"%s\",%.17g,%zu,%.17g,%d\n", r.target.c_str(),
                      r.statistic, r.n, r.threshold, r.pass ? 1 : 0);
        csv += buf;
    }
    out.result["tests"] = std::move(tests);
    out.result["all_pass"] = all;
    out.csv = std::move(csv);
    return out;
}

inline CommandOutput run_discrete_scaling(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["gamma"] = rc.gamma;
    out.config["alpha"] = rc.alpha;
    out.config["ell"] = rc.ell;
    out.config["deltas"] = rc.deltas;
    out.config["replicas"] = rc.replicas;
    out.config["dt"] = rc.dt;
    out.config["seed"] = rc.seed;
    const ScalingReport rep =
        scaling_limit_check(rc.gamma, rc.alpha, rc.ell, rc.deltas, rc.replicas, rc.seed, cfg);
    Json rows = Json::array();
    for (const ScalingRow& r : rep.rows) {
        Json row;
        row["delta"] = r.delta;
        row["mean_log_ratio"] = r.mean_log_ratio;
        row["var_log_ratio"] = r.var_log_ratio;
        row["continuum_mean"] = r.continuum_mean;
        row["continuum_var"] = r.continuum_var;
        row["gap"] = r.gap;
        row["gap_stderr"] = r.gap_stderr;
        rows.push_back(std::move(row));
    }
    out.result["rows"] = std::move(rows);
    out.result["module_digest"] = rep.config_digest;

    std::ostringstream os;
    write_csv(os, rep);
    out.csv = os.str();
    return out;
}

inline CommandOutput run_overlap(const RunConfig& rc, const McConfig& cfg) {
    CommandOutput out;
    out.config["sites"] = rc.sites;
    out.config["coupling"] = rc.coupling;
    out.config["field"] = rc.field;
    out.config["disorder"] = rc.disorder;
    out.config["replicas"] = rc.replicas;
    out.config["seed"] = rc.seed;
    const OverlapReport rep = overlap_identity_check(rc.sites, rc.coupling, rc.field,
                                                     rc.disorder, rc.replicas, rc.seed, cfg);
    const double comb =
        std::sqrt(rep.lhs_stderr * rep.lhs_stderr + rep.rhs_stderr * rep.rhs_stderr);
    out.result["lhs"] = rep.lhs;
    out.result["lhs_stderr"] = rep.lhs_stderr;
    out.result["rhs"] = rep.rhs;
    out.result["rhs_stderr"] = rep.rhs_stderr;
    out.result["combined_stderr"] = comb;
    if (comb > 0.0) out.result["z"] = (rep.lhs - rep.rhs) / comb;
    out.result["n"] = rep.n;
    out.result["module_digest"] = rep.config_digest;
    char buf[256];
    std::snprintf(buf, sizeof buf, "lhs,lhs_stderr,rhs,rhs_stderr,n\n%.17g,%.17g,%.17g,%.17g,%zu\n",
                  rep.lhs, rep.lhs_stderr, rep.rhs, rep.rhs_stderr, rep.n);
    out.csv = buf;
    return out;
}

// Collects the identifying fields and headline numbers of previously written
// JSON reports into one index.
inline CommandOutput run_report(const RunConfig& rc) {
    require(!rc.inputs.empty(), "report: --inputs is required");
    CommandOutput out;
    out.config["inputs"] = rc.inputs;
    out.config["seed"] = rc.seed;

    Json rows = Json::array();
    std::string csv = "path,command,seed,config_digest,estimate,stderr\n";
    for (const std::string& path : rc.inputs) {
        const Json in = read_json_file(path);
        require(in.is_object() && in.contains("command") && in.contains("config_digest"),
                "report: " + path + " is not a report produced by this tool");
        Json row;
        row["path"] = path;
        row["artifact_version"] = in.value("artifact_version", std::string{});
        row["command"] = in.value("command", std::string{});
        row["seed"] = in.value("seed", std::uint64_t{0});
        row["config_digest"] = in.value("config_digest", std::string{});
        std::string est = "", se = "";
        if (in.contains("result") && in["result"].is_object()) {
            const Json& res = in["result"];
            if (res.contains("estimate")) {
                row["estimate"] = res["estimate"];
                row["stderr"] = res.value("stderr", 0.0);
                est = res["estimate"].dump();
                se = res["stderr"].dump();
            }
        }
        csv += path + "," + row["command"].get<std::string>() + "," +
               std::to_string(row["seed"].get<std::uint64_t>()) + "," +
               row["config_digest"].get<std::string>() + "," + est + "," + se + "\n";
        rows.push_back(std::move(row));
    }
    out.result["runs"] = std::move(rows);
    out.csv = std::move(csv);
    return out;
}

} // namespace detail

// Dispatches one command, writes its outputs, and maps failures onto the exit
// code contract: 0 success, 1 invalid input, 2 numerical failure (a window
// that could not be extended far enough). Reports land at out_path; when the
// requested format is csv, the table goes to out_path and the JSON report to
// the same name with a .json extension.
inline int run(const RunConfig& rc) {
    try {
        require(!rc.out_path.empty(), "run: --out is required");
        const std::string fmt = detail::resolved_format(rc);
        const auto start = std::chrono::steady_clock::now();

        McConfig cfg;
        cfg.dt = rc.dt;
        cfg.window_factor = rc.window_factor;
        cfg.threads = rc.workers;

        detail::CommandOutput out;
        if (rc.command == "extrema") out = detail::run_extrema(rc);
        else if (rc.command == "simulate") out = detail::run_simulate(rc);
        else if (rc.command == "estimate-d" || rc.command == "estimate-dhat")
            out = detail::run_estimate(rc, cfg);
        else if (rc.command == "ergodic") out = detail::run_ergodic(rc, cfg);
        else if (rc.command == "free-energy") out = detail::run_free_energy(rc, cfg);
        else if (rc.command == "analytic") out = detail::run_analytic(rc);
        else if (rc.command == "distributions") out = detail::run_distributions(rc, cfg);
        else if (rc.command == "discrete-scaling") out = detail::run_discrete_scaling(rc, cfg);
        else if (rc.command == "overlap") out = detail::run_overlap(rc, cfg);
        else if (rc.command == "report") out = detail::run_report(rc);
        else throw invalid_argument_error("run: unknown command '" + rc.command + "'");

        out.config["out"] = rc.out_path;
        out.config["format"] = fmt;
        Json rep = make_report(rc.command, std::move(out.config), rc.seed,
                               std::move(out.result));
        attach_execution(rep, detail::resolve_threads(rc.workers),
                         detail::seconds_since(start));
        if (fmt == "json") {
            write_text_file(rc.out_path, serialize_report(rep));
        } else {
            require(!out.csv.empty(),
                    "run: command '" + rc.command + "' has no csv table; use --format json");
            write_text_file(rc.out_path, csv_metadata(rep) + out.csv);
            write_text_file(detail::json_sibling(rc.out_path), serialize_report(rep));
        }
        return 0;
    } catch (const window_exhausted& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

} // namespace crfic
