// green-route: solve, verify and analyze green routing game scenarios.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "green_route/experiments.hpp"

namespace {

using green_route::RunOptions;

void add_common(CLI::App& cmd, RunOptions& opts) {
    cmd.add_option("scenario", opts.scenario_path, "Scenario JSON file")->required();
    cmd.add_option("--solver", opts.solver, "Equilibrium dynamics: sird or itproxpt")
        ->check(CLI::IsMember({"sird", "itproxpt"}));
    cmd.add_option("--gamma", opts.gamma, "Step size (default: derived from the game)");
    cmd.add_option("--eps", opts.epsilon, "Stopping threshold on successive iterates");
    cmd.add_option("--max-iter", opts.max_iterations, "Iteration cap");
    cmd.add_option("--starts", opts.starts, "Number of multi-start initializations");
    cmd.add_option("--seed", opts.seed, "Seed for low-discrepancy starts and sampling");
    cmd.add_option("--out", opts.out_path, "Output file (default: stdout)");
    cmd.add_option("--tol", opts.tolerance, "KKT tolerance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nash equilibria, social optima and price of anarchy for green routing games"};
    app.require_subcommand(1);
    RunOptions opts;

    auto* solve = app.add_subcommand("solve", "Run SIRD or ItProxPt and write the final profile");
    add_common(*solve, opts);
    solve->add_option("--trace", opts.trace_path, "Per-iteration CSV trace");

    auto* verify = app.add_subcommand("verify", "KKT-check a profile");
    add_common(*verify, opts);
    verify->add_option("--profile", opts.profile_path, "Profile JSON (solve output or array of rows)")->required();

    auto* social = app.add_subcommand("social-opt", "Multi-start social optimum");
    add_common(*social, opts);

    auto* poa = app.add_subcommand("poa", "Price of anarchy");
    add_common(*poa, opts);

    auto* sweep = app.add_subcommand("sweep", "Parameter sweep written as CSV");
    add_common(*sweep, opts);
    sweep->add_option("--param", opts.param, "alpha_scale, deadline_shift or family_coordinate")
        ->check(CLI::IsMember({"alpha_scale", "deadline_shift", "family_coordinate"}));
    sweep->add_option("--from", opts.from, "Range start");
    sweep->add_option("--to", opts.to, "Range end");
    sweep->add_option("--steps", opts.steps, "Grid points (>= 2)");
    sweep->add_flag("--log", opts.log, "Geometric grid");
    sweep->add_option("--player", opts.player, "Shifted or pinned player (0-based)");
    sweep->add_option("--route", opts.route, "Pinned route for family sweeps (0-based)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : green_route::exit_code::validation;
    }

    if (*solve) return green_route::cmd_solve(opts, std::cout, std::cerr);
    if (*verify) return green_route::cmd_verify(opts, std::cout, std::cerr);
    if (*social) return green_route::cmd_social_opt(opts, std::cout, std::cerr);
    if (*poa) return green_route::cmd_poa(opts, std::cout, std::cerr);
    return green_route::cmd_sweep(opts, std::cout, std::cerr);
}
