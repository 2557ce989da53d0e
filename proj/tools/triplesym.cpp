// triplesym: certify symbol families, run frequency-side and cone solves, sweep for derivative loss.

#include "triplesym/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace triplesym;

struct Flags {
    std::string config;
    std::string out = "triplesym_out";
    std::optional<std::uint64_t> seed;
    cli::FamilyFlags family;
    std::optional<std::string> xi;
    std::optional<double> y, K, delta, T, cfl;
    std::optional<int> N, cells;
};

void add_family_options(CLI::App& app, Flags& f) {
    app.add_option("--family", f.family.name,
                   "tricomi | complex-nu | three-real | theta | general-triple | polynomial | a=<expr>");
    app.add_option("--l", f.family.l, "tricomi exponent");
    app.add_option("--c", f.family.c, "tricomi transport speed");
    app.add_option("--theta", f.family.theta, "theta family ratio (also general-triple)");
    app.add_option("--a", f.family.a, "coefficient a for polynomial and theta families");
    app.add_option("--b", f.family.b, "coefficient b for polynomial families");
    app.add_option("--alpha", f.family.alpha, "general-triple alpha, a = alpha^2");
    app.add_option("--y-coupling", f.family.y_coupling, "complex-nu root coupling");
}

void apply(const std::string& command, const Flags& f, cli::RunConfig& c) {
    if (!f.family.name.empty()) c.family = cli::family_from_flags(f.family);
    if (f.seed) c.seed = *f.seed;
    if (command == "certify") {
        if (f.K) c.certify.K = *f.K;
        if (f.delta) c.certify.delta = *f.delta;
    } else if (command == "solve-t") {
        if (f.xi) {
            const auto xs = cli::parse_xi_list(*f.xi);
            if (xs.size() != 1) throw ConfigurationError("solve-t takes a single --xi");
            c.solve_t.xi = xs.front();
        }
        if (f.y) c.solve_t.y = *f.y;
        if (f.N) c.solve_t.N = *f.N;
        if (f.delta) c.solve_t.delta = *f.delta;
    } else if (command == "sweep") {
        if (f.xi) c.sweep.xi = cli::parse_xi_list(*f.xi);
        if (f.y) c.sweep.y = *f.y;
        if (f.N) c.sweep.N = *f.N;
    } else if (command == "solve-x") {
        if (f.cells) c.solve_x.cells = *f.cells;
        if (f.cfl) c.solve_x.cfl = *f.cfl;
        if (f.delta) c.solve_x.delta = *f.delta;
        if (f.T) c.solve_x.T = *f.T;
        if (f.N) c.solve_x.Ns = {*f.N};
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-method certification and solvers for third-order symbols with triple characteristics"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "JSON run configuration (see docs/config.md)");
    app.add_option("--out", f.out, "output directory")->capture_default_str();
    app.add_option("--seed", f.seed, "seed for randomized sampling");

    auto* certify = app.add_subcommand("certify", "algebraic, derivative and weight certifications");
    certify->add_option("--K", f.K, "constant in the eigenvalue bounds");
    certify->add_option("--delta", f.delta, "partition top");
    auto* solve_t = app.add_subcommand("solve-t", "one frequency: weighted energies and verdicts");
    solve_t->add_option("--xi", f.xi, "frequency |xi| >= 1");
    solve_t->add_option("--y", f.y, "slice parameter");
    solve_t->add_option("--N", f.N, "weight exponent");
    solve_t->add_option("--delta", f.delta, "partition top");
    auto* sweep = app.add_subcommand("sweep", "frequency sweep: loss of derivatives");
    sweep->add_option("--xi", f.xi, "lo..hi (doubling), comma list, or one value");
    sweep->add_option("--y", f.y, "slice parameter");
    sweep->add_option("--N", f.N, "weight exponent for the reported constants");
    auto* solve_x = app.add_subcommand("solve-x", "x-space cone solve with snapshots and weighted-energy verdicts");
    solve_x->add_option("--cells", f.cells, "cells across the cone base");
    solve_x->add_option("--cfl", f.cfl, "CFL number in (0, 0.9]");
    solve_x->add_option("--delta", f.delta, "cone slope");
    solve_x->add_option("--T", f.T, "cone height");
    solve_x->add_option("--N", f.N, "single weight exponent");
    for (auto* sub : {certify, solve_t, sweep, solve_x}) {
        add_family_options(*sub, f);
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return cli::kConfigurationError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    cli::RunConfig cfg;
    try {
        if (!f.config.empty()) cfg = cli::load_config(f.config);
        apply(command, f, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kConfigurationError;
    }
    return cli::run_command(command, cfg, f.out, std::cout, std::cerr);
}
