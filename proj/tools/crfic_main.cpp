#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "crfic/cli.hpp"
#include "crfic/report.hpp"

namespace {

// Lays config-file values under whatever the flags overwrite afterwards,
// giving the documented precedence: defaults < config file < flags.
void apply_config_file(const crfic::Json& j, crfic::RunConfig& rc) {
    crfic::require(j.is_object(), "config file must hold a JSON object");
    for (const auto& [key, val] : j.items()) {
        if (key == "gamma") rc.gamma = val.get<double>();
        else if (key == "alpha") rc.alpha = val.get<double>();
        else if (key == "ell") rc.ell = val.get<double>();
        else if (key == "dt") rc.dt = val.get<double>();
        else if (key == "replicas") rc.replicas = val.get<std::size_t>();
        else if (key == "window_factor") rc.window_factor = val.get<double>();
        else if (key == "seed") rc.seed = val.get<std::uint64_t>();
        else if (key == "out") rc.out_path = val.get<std::string>();
        else if (key == "format") rc.format = val.get<std::string>();
        else if (key == "workers") rc.workers = val.get<unsigned>();
        else if (key == "gamma_grid") rc.gamma_grid = val.get<std::vector<double>>();
        else if (key == "deltas") rc.deltas = val.get<std::vector<double>>();
        else if (key == "sites") rc.sites = val.get<std::size_t>();
        else if (key == "coupling") rc.coupling = val.get<double>();
        else if (key == "field") rc.field = val.get<double>();
        else if (key == "disorder") rc.disorder = val.get<double>();
        else if (key == "inputs") rc.inputs = val.get<std::vector<std::string>>();
        else crfic::require(false, "config file: unknown key '" + key + "'");
    }
}

std::string scan_for_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string s = argv[i];
        if (s == "--config" && i + 1 < argc) return argv[i + 1];
        if (s.rfind("--config=", 0) == 0) return s.substr(9);
    }
    return {};
}

} // namespace

int main(int argc, char** argv) {
    crfic::RunConfig rc;

    // The config file must be merged before CLI11 runs, so that flags given on
    // the command line keep the last word.
    const std::string config_path = scan_for_config_path(argc, argv);
    if (!config_path.empty()) {
        try {
            apply_config_file(crfic::read_json_file(config_path), rc);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 1;
        }
    }

    CLI::App app{"simulation and verification toolkit for the continuum random-field Ising chain"};
    app.require_subcommand(1);
    std::string config_sink;
    auto add_common = [&](CLI::App* s) {
        s->add_option("--seed", rc.seed, "random seed");
        s->add_option("--out", rc.out_path, "output path (.json or .csv)");
        s->add_option("--format", rc.format, "json or csv (default: from the out extension)");
        s->add_option("--workers", rc.workers, "worker threads (0: machine parallelism)");
        s->add_option("--config", config_sink, "JSON config file; flags override its values");
    };

    auto* c_extrema =
        app.add_subcommand("extrema", "confirmed extrema skeleton of one seeded path");
    c_extrema->add_option("--gamma", rc.gamma, "excursion threshold");
    c_extrema->add_option("--ell", rc.ell, "path window half-width");
    c_extrema->add_option("--dt", rc.dt, "grid step (0: module default)");
    add_common(c_extrema);

    auto* c_sim =
        app.add_subcommand("simulate", "one-sided order parameters on an adaptive window");
    c_sim->add_option("--gamma", rc.gamma, "excursion threshold");
    c_sim->add_option("--dt", rc.dt, "grid step (0: module default)");
    c_sim->add_option("--window-factor", rc.window_factor, "window extent per stop distance");
    add_common(c_sim);

    auto* c_d = app.add_subcommand("estimate-d", "origin sign-overlap estimate");
    c_d->add_option("--gamma", rc.gamma, "excursion threshold");
    c_d->add_option("--replicas", rc.replicas, "independent windows");
    c_d->add_option("--dt", rc.dt, "grid step (0: module default)");
    c_d->add_option("--window-factor", rc.window_factor, "window extent per stop distance");
    add_common(c_d);

    auto* c_dhat = app.add_subcommand("estimate-dhat", "closed-form model overlap estimate");
    c_dhat->add_option("--gamma", rc.gamma, "excursion threshold");
    c_dhat->add_option("--replicas", rc.replicas, "independent windows");
    c_dhat->add_option("--dt", rc.dt, "grid step (0: module default)");
    add_common(c_dhat);

    auto* c_erg = app.add_subcommand("ergodic", "time-average discrepancy along one long path");
    c_erg->add_option("--gamma", rc.gamma, "excursion threshold");
    c_erg->add_option("--ell", rc.ell, "observation span");
    c_erg->add_option("--dt", rc.dt, "grid step (0: module default)");
    add_common(c_erg);

    auto* c_fe = app.add_subcommand("free-energy", "quenched free energy density estimate");
    c_fe->add_option("--gamma", rc.gamma, "excursion threshold");
    c_fe->add_option("--ell", rc.ell, "chain length");
    c_fe->add_option("--dt", rc.dt, "grid step (0: module default)");
    add_common(c_fe);

    auto* c_an = app.add_subcommand("analytic", "closed-form reference table over a gamma grid");
    c_an->add_option("--gamma-grid", rc.gamma_grid, "comma-separated gamma values")
        ->delimiter(',');
    add_common(c_an);

    auto* c_dist = app.add_subcommand("distributions", "empirical-law test suite");
    c_dist->add_option("--gamma", rc.gamma, "excursion threshold");
    c_dist->add_option("--replicas", rc.replicas, "sample size per test");
    c_dist->add_option("--dt", rc.dt, "grid step (0: per-test defaults)");
    add_common(c_dist);

    auto* c_ds = app.add_subcommand("discrete-scaling",
                                    "lattice chain moments against the continuum reference");
    c_ds->add_option("--gamma", rc.gamma, "excursion threshold");
    c_ds->add_option("--alpha", rc.alpha, "drift / uniform field scale");
    c_ds->add_option("--ell", rc.ell, "continuum length");
    c_ds->add_option("--deltas", rc.deltas, "comma-separated lattice spacings")->delimiter(',');
    c_ds->add_option("--replicas", rc.replicas, "disorder samples per spacing");
    c_ds->add_option("--dt", rc.dt, "continuum reference step (0: ell * 1e-5)");
    add_common(c_ds);

    auto* c_ov = app.add_subcommand("overlap", "two-replica overlap identity check");
    c_ov->add_option("--sites", rc.sites, "chain length");
    c_ov->add_option("--coupling", rc.coupling, "nearest-neighbor coupling");
    c_ov->add_option("--field", rc.field, "uniform field");
    c_ov->add_option("--disorder", rc.disorder, "disorder strength");
    c_ov->add_option("--replicas", rc.replicas, "disorder samples");
    add_common(c_ov);

    auto* c_rep = app.add_subcommand("report", "index previously written JSON reports");
    c_rep->add_option("--inputs", rc.inputs, "comma-separated report paths")->delimiter(',');
    add_common(c_rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    rc.command = app.get_subcommands().front()->get_name();
    return crfic::run(rc);
}
