#pragma once

// Command implementations behind the green-route executable. Each command
// takes parsed options plus output streams and returns the process exit code,
// so tests can drive them without spawning processes.

#include <cinttypes>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "green_route/equilibrium_analysis.hpp"
#include "green_route/scenario.hpp"
#include "green_route/solvers.hpp"

namespace green_route {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int not_equilibrium = 1;  ///< verify: the profile fails the KKT check
inline constexpr int validation = 2;
inline constexpr int solver_failure = 3;
}  // namespace exit_code

struct RunOptions {
    std::string scenario_path;
    std::string solver = "sird";
    std::optional<double> gamma;
    std::optional<double> epsilon;
    std::optional<std::size_t> max_iterations;
    std::optional<std::size_t> starts;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> trace_path;
    std::optional<std::string> out_path;
    std::optional<std::string> profile_path;
    std::optional<double> tolerance;
    std::optional<std::string> param;
    std::optional<double> from;
    std::optional<double> to;
    std::optional<std::size_t> steps;
    bool log = false;
    std::optional<std::size_t> player;
    std::optional<std::size_t> route;
};

/// %.17g: enough digits to round-trip any double.
[[nodiscard]] inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
[[nodiscard]] inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

namespace detail {

struct Context {
    Scenario scenario;
    SolverConfig config;
    std::size_t starts = 8;
    std::string hash;
};

inline std::string optional_text(const std::optional<double>& v) { return v ? format_number(*v) : "auto"; }

inline Context make_context(const RunOptions& opts) {
    Context ctx{load_scenario(opts.scenario_path), {}, 8, {}};
    ctx.config = ctx.scenario.solver;
    ctx.starts = ctx.scenario.starts;
    if (opts.gamma) ctx.config.gamma = opts.gamma;
    if (opts.epsilon) ctx.config.epsilon = opts.epsilon;
    if (opts.max_iterations) ctx.config.max_iterations = *opts.max_iterations;
    if (opts.seed) ctx.config.seed = *opts.seed;
    if (opts.starts) ctx.starts = *opts.starts;
    if (opts.solver != "sird" && opts.solver != "itproxpt") {
        throw ScenarioError("--solver", "expected sird or itproxpt");
    }
    if (ctx.starts < 2) throw ScenarioError("--starts", "must be >= 2");
    try {
        ctx.config.validate();
    } catch (const DomainError& e) {
        throw ScenarioError("solver", e.what());
    }
    std::ostringstream key;
    key << "solver=" << opts.solver << ";gamma=" << optional_text(ctx.config.gamma)
        << ";epsilon=" << optional_text(ctx.config.epsilon) << ";max_iterations=" << ctx.config.max_iterations
        << ";theta=" << format_number(ctx.config.theta) << ";step_exponent=" << format_number(ctx.config.step_exponent)
        << ";seed=" << ctx.config.seed << ";starts=" << ctx.starts << ";tol=" << optional_text(opts.tolerance);
    ctx.hash = fnv1a_hex(key.str());
    return ctx;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline nlohmann::json profile_json(const FlowProfile& x) { return x.rows(); }

inline FlowProfile profile_from_json(const nlohmann::json& doc) {
    const auto& rows = doc.is_object() && doc.contains("profile") ? doc.at("profile") : doc;
    if (!rows.is_array() || rows.empty()) throw ScenarioError("profile", "expected an array of player rows");
    std::vector<std::vector<double>> data;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string where = "profile[" + std::to_string(i) + "]";
        if (!rows[i].is_array()) throw ScenarioError(where, "expected an array");
        std::vector<double> row;
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            row.push_back(number_at(rows[i][k], where + "[" + std::to_string(k) + "]"));
        }
        data.push_back(std::move(row));
    }
    try {
        return FlowProfile(data);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("profile", e.what());
    }
}

/// Writes to --out when given, otherwise to `fallback`.
inline void emit(const std::optional<std::string>& path, std::ostream& fallback, const std::string& text) {
    if (!path) {
        fallback << text;
        return;
    }
    std::ofstream file(*path, std::ios::binary);
    if (!file) throw ScenarioError("--out", "cannot write '" + *path + "'");
    file << text;
}

inline nlohmann::json header_json(const Context& ctx) {
    return {{"scenario", ctx.scenario.name}, {"seed", ctx.config.seed}, {"config_hash", ctx.hash}};
}

inline std::string row_prefix(const Context& ctx) {
    return csv_field(ctx.scenario.name) + "," + std::to_string(ctx.config.seed) + "," + ctx.hash;
}

inline nlohmann::json kkt_json(const KktReport& k) {
    nlohmann::json players = nlohmann::json::array();
    for (const auto& p : k.players) {
        players.push_back({{"lambda", p.lambda},
                           {"slack_multipliers", p.slack_multipliers},
                           {"stationarity_residual", p.stationarity_residual},
                           {"complementarity_residual", p.complementarity_residual},
                           {"feasibility_residual", p.feasibility_residual}});
    }
    return {{"is_ne", k.is_ne}, {"max_residual", k.max_residual}, {"tolerance", k.tolerance}, {"players", players}};
}

/// Maps exceptions to exit codes and a one-line diagnostic.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ScenarioError& e) {
        err << "validation error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const StructuralError& e) {
        err << "validation error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const DomainError& e) {
        err << "validation error: " << e.what() << "\n";
        return exit_code::validation;
    } catch (const std::exception& e) {
        err << "solver failure: " << e.what() << "\n";
        return exit_code::solver_failure;
    }
}

}  // namespace detail

/// Runs SIRD or ItProxPt from the uniform split and writes the final profile
/// as JSON; --trace adds one CSV row per iteration.
inline int cmd_solve(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        auto ctx = detail::make_context(opts);
        const auto& game = ctx.scenario.game;
        ctx.config.record_trace = opts.trace_path.has_value();
        const auto start = uniform_profile(game);
        const auto report = opts.solver == "sird" ? sird(game, start, ctx.config) : itproxpt(game, start, ctx.config);
        const double tol = opts.tolerance.value_or(sird_kkt_tolerance(game, ctx.config, report));
        const auto kkt = kkt_verify(game, report.final_profile, tol);

        auto doc = detail::header_json(ctx);
        doc["command"] = "solve";
        doc["solver"] = opts.solver;
        doc["stop_reason"] = to_string(report.stop_reason);
        doc["iterations"] = report.iterations;
        doc["gamma"] = report.gamma;
        doc["final_step_norm"] = report.final_step_norm;
        doc["profile"] = detail::profile_json(report.final_profile);
        doc["player_costs"] = player_costs(game, report.final_profile);
        doc["social_cost"] = social_cost(game, report.final_profile);
        doc["kkt"] = detail::kkt_json(kkt);
        doc["kkt_tolerance"] = tol;
        doc["warnings"] = report.warnings;
        detail::emit(opts.out_path, out, doc.dump(2) + "\n");

        if (opts.trace_path) {
            std::ostringstream csv;
            csv << "scenario,seed,config_hash,iter,step_norm,social_cost";
            for (std::size_t i = 0; i < game.num_players(); ++i) csv << ",cost_p" << i + 1;
            csv << "\n";
            const auto prefix = detail::row_prefix(ctx);
            for (const auto& rec : report.trace) {
                csv << prefix << "," << rec.iteration << "," << format_number(rec.step_norm) << ","
                    << format_number(rec.social_cost);
                for (double c : rec.player_costs) csv << "," << format_number(c);
                csv << "\n";
            }
            std::ofstream file(*opts.trace_path, std::ios::binary);
            if (!file) throw ScenarioError("--trace", "cannot write '" + *opts.trace_path + "'");
            file << csv.str();
        }
        for (const auto& w : report.warnings) err << "warning: " << w << "\n";
        if (!report.converged()) {
            err << "solver stopped without converging: " << to_string(report.stop_reason) << "\n";
            return exit_code::solver_failure;
        }
        return exit_code::ok;
    });
}

/// KKT-checks a profile file (a bare array of rows or a solve output). The
/// tolerance defaults to the one recorded by solve, else 1e-6.
inline int cmd_verify(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto ctx = detail::make_context(opts);
        if (!opts.profile_path) throw ScenarioError("--profile", "verify needs a profile file");
        std::ifstream in(*opts.profile_path);
        if (!in) throw ScenarioError("--profile", "cannot open '" + *opts.profile_path + "'");
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ScenarioError("--profile", std::string("parse error: ") + e.what());
        }
        const auto profile = detail::profile_from_json(doc);
        check_dimensions(ctx.scenario.game, profile);
        double tol = 1e-6;
        if (doc.is_object() && doc.contains("kkt_tolerance") && doc.at("kkt_tolerance").is_number()) {
            tol = doc.at("kkt_tolerance").get<double>();
        }
        tol = opts.tolerance.value_or(tol);
        const auto kkt = kkt_verify(ctx.scenario.game, profile, tol);

        auto report = detail::header_json(ctx);
        report["command"] = "verify";
        report["kkt"] = detail::kkt_json(kkt);
        report["player_costs"] = player_costs(ctx.scenario.game, profile);
        report["social_cost"] = social_cost(ctx.scenario.game, profile);
        detail::emit(opts.out_path, out, report.dump(2) + "\n");
        return kkt.is_ne ? exit_code::ok : exit_code::not_equilibrium;
    });
}

inline int cmd_social_opt(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto ctx = detail::make_context(opts);
        const auto& game = ctx.scenario.game;
        const auto report = social_optimum(game, ctx.config, ctx.starts);

        auto doc = detail::header_json(ctx);
        doc["command"] = "social-opt";
        doc["social_cost"] = report.best_cost;
        doc["profile"] = detail::profile_json(report.best.final_profile);
        doc["player_costs"] = player_costs(game, report.best.final_profile);
        doc["stop_reason"] = to_string(report.best.stop_reason);
        doc["minima_disagree"] = report.minima_disagree;
        nlohmann::json minima = nlohmann::json::array();
        for (const auto& m : report.minima) {
            minima.push_back({{"social_cost", m.social_cost},
                              {"stop_reason", to_string(m.stop_reason)},
                              {"iterations", m.iterations}});
        }
        doc["minima"] = minima;
        detail::emit(opts.out_path, out, doc.dump(2) + "\n");
        if (report.minima_disagree) err << "warning: local minima disagree across starts\n";
        return report.best.converged() ? exit_code::ok : exit_code::solver_failure;
    });
}

inline nlohmann::json poa_json(const PoaReport& r) {
    return {{"poa", r.poa},
            {"optimum_cost", r.optimum_cost},
            {"worst_ne_cost", r.worst_ne_cost},
            {"provenance", to_string(r.provenance)},
            {"essentially_unique", r.probe.essentially_unique},
            {"optimum_profile", detail::profile_json(r.optimum)},
            {"worst_ne_profile", detail::profile_json(r.worst_ne)},
            {"notes", r.notes}};
}

inline int cmd_poa(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto ctx = detail::make_context(opts);
        const auto report = price_of_anarchy(ctx.scenario.game, ctx.config, {ctx.starts, 101});
        auto doc = detail::header_json(ctx);
        doc["command"] = "poa";
        doc.update(poa_json(report));
        detail::emit(opts.out_path, out, doc.dump(2) + "\n");
        return exit_code::ok;
    });
}

namespace detail {

inline SweepSpec resolve_sweep(const RunOptions& opts, const Scenario& scenario) {
    std::optional<SweepSpec> spec;
    std::optional<SweepParameter> wanted;
    if (opts.param) {
        wanted = parse_sweep_parameter(*opts.param);
        if (!wanted) throw ScenarioError("--param", "unknown sweep parameter '" + *opts.param + "'");
    }
    for (const auto& s : scenario.sweeps) {
        if (!wanted || s.parameter == *wanted) {
            spec = s;
            break;
        }
    }
    if (!spec) {
        if (!wanted) throw ScenarioError("--param", "no sweep requested and none declared in the scenario");
        if (!opts.from || !opts.to || !opts.steps) {
            throw ScenarioError("--param", "--from, --to and --steps are required for an undeclared sweep");
        }
        spec = SweepSpec{};
        spec->parameter = *wanted;
    }
    if (opts.from) spec->from = *opts.from;
    if (opts.to) spec->to = *opts.to;
    if (opts.steps) spec->steps = *opts.steps;
    if (opts.log) spec->log = true;
    if (opts.player) spec->player = *opts.player;
    if (opts.route) spec->route = *opts.route;
    spec->validate("sweep");
    if (spec->parameter == SweepParameter::family_coordinate && spec->log) {
        throw ScenarioError("sweep.log", "family sweeps use a linear grid");
    }
    if (spec->player >= scenario.game.num_players()) throw ScenarioError("sweep.player", "no such player");
    if (spec->parameter == SweepParameter::family_coordinate && spec->route >= scenario.game.num_routes()) {
        throw ScenarioError("sweep.route", "no such route");
    }
    return *spec;
}

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace detail

/// One CSV row per grid value, in grid order. A failing point keeps its row
/// with the failure in the `status` column.
inline int cmd_sweep(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto ctx = detail::make_context(opts);
        const auto spec = detail::resolve_sweep(opts, ctx.scenario);
        const auto& game = ctx.scenario.game;
        const std::size_t N = game.num_players();
        const std::size_t R = game.num_routes();

        std::string header = "scenario,seed,config_hash,";
        switch (spec.parameter) {
            case SweepParameter::alpha_scale:
                header += "c_alpha,poa,optimum_cost,worst_ne_cost,provenance";
                break;
            case SweepParameter::deadline_shift:
                header += "delta";
                for (std::size_t i = 0; i < N; ++i) {
                    for (std::size_t k = 0; k <= R; ++k) header += ",x" + std::to_string(i + 1) + "_" + std::to_string(k);
                }
                header += ",essentially_unique";
                break;
            case SweepParameter::family_coordinate:
                header += "x" + std::to_string(spec.player + 1) + "_" + std::to_string(spec.route + 1) +
                          ",is_ne,social_cost,kkt_residual";
                break;
        }
        header += ",status\n";

        std::vector<std::string> rows(spec.steps);
        std::vector<bool> failed(spec.steps, false);
        const auto prefix = detail::row_prefix(ctx);
        const std::string nan = "nan";

        if (spec.parameter == SweepParameter::family_coordinate) {
            FamilySweepOptions fam;
            fam.from = spec.from;
            fam.to = spec.to;
            fam.solver = ctx.config;
            if (opts.tolerance) fam.kkt_tolerance = *opts.tolerance;
            const auto points = ne_family_sweep(game, spec.player, spec.route, spec.steps, fam);
            for (std::size_t k = 0; k < spec.steps; ++k) {
                const auto& p = points[k];
                rows[k] = prefix + "," + format_number(p.value) + "," + detail::bool_text(p.is_ne) + "," +
                          (p.valid ? format_number(p.social_cost) : nan) + "," +
                          (p.valid ? format_number(p.kkt_residual) : nan) + "," + (p.valid ? "ok" : "unsettled");
            }
        } else {
            detail::parallel_for(spec.steps, [&](std::size_t k) {
                const double v = spec.value(k);
                std::string cells = prefix + "," + format_number(v);
                try {
                    if (spec.parameter == SweepParameter::alpha_scale) {
                        const auto r = price_of_anarchy(game.with_alpha_scale(v), ctx.config, {ctx.starts, 101});
                        cells += "," + format_number(r.poa) + "," + format_number(r.optimum_cost) + "," +
                                 format_number(r.worst_ne_cost) + "," + to_string(r.provenance) + ",ok";
                    } else {
                        const auto probe = uniqueness_probe(game.with_deadline_shift(spec.player, v), ctx.config, ctx.starts);
                        for (std::size_t i = 0; i < N; ++i) {
                            for (std::size_t c = 0; c <= R; ++c) {
                                cells += "," + (probe.witnesses.empty() ? nan
                                                                        : format_number(probe.witnesses.front().profile(i, c)));
                            }
                        }
                        cells += "," + detail::bool_text(probe.essentially_unique && !probe.inconclusive) + "," +
                                 (probe.witnesses.empty() ? "no_ne" : probe.inconclusive ? "inconclusive" : "ok");
                        failed[k] = probe.witnesses.empty();
                    }
                } catch (const std::exception& e) {
                    const std::size_t columns = spec.parameter == SweepParameter::alpha_scale ? 4 : N * (R + 1) + 1;
                    for (std::size_t c = 0; c < columns; ++c) cells += "," + nan;
                    cells += "," + detail::csv_field(std::string("error: ") + e.what());
                    failed[k] = true;
                }
                rows[k] = std::move(cells);
            });
        }

        std::string text = header;
        for (const auto& r : rows) text += r + "\n";
        detail::emit(opts.out_path, out, text);
        for (std::size_t k = 0; k < spec.steps; ++k) {
            if (failed[k]) {
                err << "sweep point " << k << " failed\n";
                return exit_code::solver_failure;
            }
        }
        return exit_code::ok;
    });
}

}  // namespace green_route
