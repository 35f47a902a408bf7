#pragma once

// Scenario files: one JSON document describing a game, solver defaults and
// declared sweeps. Requires nlohmann/json on the include path.
//
//   {
//     "schema_version": 1,
//     "name": "two_routes",
//     "flow_unit": 10,
//     "players": [{"demand": 100, "alpha": 0.5, "tau": 8}, ...],
//     "routes":  [{"mu": 0.3, "nu": 5}, ...],
//     "delay_cost_overrides": [{"player": 0, "route": 1, "family": "quadratic",
//                               "chi": 10, "coefficient": 1}],
//     "solver": {"epsilon": 1e-9, "max_iterations": 1000000, "theta": 0.5,
//                "step_exponent": 0.5, "seed": 0, "starts": 8},
//     "sweeps": [{"parameter": "alpha_scale", "from": 1, "to": 1e5,
//                 "steps": 6, "log": true}]
//   }
//
// Player and route indices are 0-based.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "green_route/errors.hpp"
#include "green_route/game_model.hpp"
#include "green_route/solvers.hpp"

namespace green_route {

/// A scenario that failed to parse or validate. `field` is a JSON path such
/// as `players[0].demand` (empty for whole-document problems).
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field(std::move(field)) {}

    std::string field;
};

enum class SweepParameter { alpha_scale, deadline_shift, family_coordinate };

[[nodiscard]] inline std::string to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::alpha_scale: return "alpha_scale";
        case SweepParameter::deadline_shift: return "deadline_shift";
        case SweepParameter::family_coordinate: return "family_coordinate";
    }
    return "unknown";
}

[[nodiscard]] inline std::optional<SweepParameter> parse_sweep_parameter(const std::string& name) {
    if (name == "alpha_scale") return SweepParameter::alpha_scale;
    if (name == "deadline_shift") return SweepParameter::deadline_shift;
    if (name == "family_coordinate") return SweepParameter::family_coordinate;
    return std::nullopt;
}

struct SweepSpec {
    SweepParameter parameter = SweepParameter::alpha_scale;
    double from = 0.0;
    double to = 1.0;
    std::size_t steps = 2;
    bool log = false;
    std::size_t player = 0;  ///< shifted player (deadline_shift) or pinned player (family)
    std::size_t route = 1;   ///< pinned route (family)

    void validate(const std::string& where) const {
        if (!std::isfinite(from) || !std::isfinite(to)) throw ScenarioError(where, "range must be finite");
        if (!(from <= to)) throw ScenarioError(where + ".from", "must satisfy from <= to");
        if (steps < 2) throw ScenarioError(where + ".steps", "must be >= 2");
        if (log && !(from > 0.0)) throw ScenarioError(where + ".from", "a log sweep needs from > 0");
    }

    /// Grid value k of `steps`, geometric when `log` is set.
    [[nodiscard]] double value(std::size_t k) const {
        const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
        if (k == 0) return from;
        if (k + 1 == steps) return to;
        if (log) return std::exp(std::log(from) + t * (std::log(to) - std::log(from)));
        return from + t * (to - from);
    }
};

struct Scenario {
    int schema_version = 1;
    std::string name;
    GameInstance game;
    SolverConfig solver;
    std::size_t starts = 8;
    std::vector<SweepSpec> sweeps;
};

namespace detail {

using nlohmann::json;

inline std::string field_path(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

inline const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ScenarioError(field_path(where, key), "missing");
    return obj.at(key);
}

inline double number_at(const json& v, const std::string& where) {
    if (!v.is_number()) throw ScenarioError(where, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ScenarioError(where, "must be finite");
    return d;
}

inline std::size_t index_at(const json& v, const std::string& where) {
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ScenarioError(where, "expected an integer >= 0");
    return v.get<std::size_t>();
}

inline std::optional<double> optional_number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    return number_at(obj.at(key), field_path(where, key));
}

/// Central differences of c against c' and of c' against c'' at eight points
/// beyond the threshold.
inline void check_cost_consistency(const DelayCostFn& c, double scale, const std::string& where) {
    const double chi = c.threshold();
    for (int k = 1; k <= 8; ++k) {
        const double X = chi + scale * static_cast<double>(k) / 8.0;
        const double h = 1e-5 * std::max(1.0, X);
        const double d1 = (c.value(X + h) - c.value(X - h)) / (2.0 * h);
        const double d2 = (c.derivative(X + h) - c.derivative(X - h)) / (2.0 * h);
        const auto off = [](double fd, double exact) {
            return std::abs(fd - exact) > 1e-5 * std::max(1.0, std::abs(exact));
        };
        if (off(d1, c.derivative(X)) || off(d2, c.second_derivative(X))) {
            throw ScenarioError(where, "delay cost derivatives are inconsistent at X = " + std::to_string(X));
        }
    }
}

inline SolverConfig parse_solver(const json& s, std::size_t& starts) {
    SolverConfig config;
    const std::string where = "solver";
    if (!s.is_object()) throw ScenarioError(where, "expected an object");
    config.gamma = optional_number(s, "gamma", where);
    config.epsilon = optional_number(s, "epsilon", where);
    if (config.gamma && !(*config.gamma > 0.0)) throw ScenarioError(where + ".gamma", "must be > 0");
    if (config.epsilon && !(*config.epsilon > 0.0)) throw ScenarioError(where + ".epsilon", "must be > 0");
    if (s.contains("max_iterations")) {
        config.max_iterations = index_at(s.at("max_iterations"), where + ".max_iterations");
        if (config.max_iterations == 0) throw ScenarioError(where + ".max_iterations", "must be >= 1");
    }
    if (auto theta = optional_number(s, "theta", where)) {
        if (!(*theta > 0.0 && *theta < 1.0)) throw ScenarioError(where + ".theta", "must lie in (0, 1)");
        config.theta = *theta;
    }
    if (auto p = optional_number(s, "step_exponent", where)) {
        if (!(*p > 0.0 && *p <= 1.0)) throw ScenarioError(where + ".step_exponent", "must lie in (0, 1]");
        config.step_exponent = *p;
    }
    if (s.contains("seed")) config.seed = index_at(s.at("seed"), where + ".seed");
    if (s.contains("starts")) {
        starts = index_at(s.at("starts"), where + ".starts");
        if (starts < 2) throw ScenarioError(where + ".starts", "must be >= 2");
    }
    if (s.contains("bound_samples")) {
        config.bound_samples = index_at(s.at("bound_samples"), where + ".bound_samples");
        if (config.bound_samples == 0) throw ScenarioError(where + ".bound_samples", "must be >= 1");
    }
    return config;
}

inline SweepSpec parse_sweep(const json& s, const std::string& where) {
    if (!s.is_object()) throw ScenarioError(where, "expected an object");
    SweepSpec sweep;
    const auto& name = require(s, "parameter", where);
    if (!name.is_string()) throw ScenarioError(where + ".parameter", "expected a string");
    const auto parameter = parse_sweep_parameter(name.get<std::string>());
    if (!parameter) throw ScenarioError(where + ".parameter", "unknown sweep parameter '" + name.get<std::string>() + "'");
    sweep.parameter = *parameter;
    sweep.from = number_at(require(s, "from", where), where + ".from");
    sweep.to = number_at(require(s, "to", where), where + ".to");
    sweep.steps = index_at(require(s, "steps", where), where + ".steps");
    if (s.contains("log")) {
        if (!s.at("log").is_boolean()) throw ScenarioError(where + ".log", "expected a boolean");
        sweep.log = s.at("log").get<bool>();
    }
    if (s.contains("player")) sweep.player = index_at(s.at("player"), where + ".player");
    if (s.contains("route")) sweep.route = index_at(s.at("route"), where + ".route");
    sweep.validate(where);
    return sweep;
}

}  // namespace detail

/// Validates and builds a scenario from an already parsed document.
[[nodiscard]] inline Scenario parse_scenario(const nlohmann::json& doc) {
    using detail::number_at;
    if (!doc.is_object()) throw ScenarioError("", "scenario must be a JSON object");

    const auto& version = detail::require(doc, "schema_version", "");
    if (!version.is_number_integer() || version.get<int>() != 1) {
        throw ScenarioError("schema_version", "unsupported schema version (expected 1)");
    }
    std::string name = "unnamed";
    if (doc.contains("name")) {
        if (!doc.at("name").is_string()) throw ScenarioError("name", "expected a string");
        name = doc.at("name").get<std::string>();
    }
    double flow_unit = 1.0;
    if (auto u = detail::optional_number(doc, "flow_unit", "")) {
        if (!(*u > 0.0)) throw ScenarioError("flow_unit", "must be > 0");
        flow_unit = *u;
    }

    const auto& players_doc = detail::require(doc, "players", "");
    if (!players_doc.is_array() || players_doc.empty()) throw ScenarioError("players", "expected a non-empty array");
    std::vector<PlayerSpec> players;
    for (std::size_t i = 0; i < players_doc.size(); ++i) {
        const std::string where = "players[" + std::to_string(i) + "]";
        const auto& p = players_doc[i];
        if (!p.is_object()) throw ScenarioError(where, "expected an object");
        PlayerSpec spec;
        spec.demand = number_at(detail::require(p, "demand", where), where + ".demand");
        spec.alpha = number_at(detail::require(p, "alpha", where), where + ".alpha");
        spec.tau = p.contains("tau") ? number_at(p.at("tau"), where + ".tau") : 0.0;
        if (spec.demand < 0.0) throw ScenarioError(where + ".demand", "must be >= 0");
        if (spec.alpha < 0.0) throw ScenarioError(where + ".alpha", "must be >= 0");
        if (spec.tau < 0.0) throw ScenarioError(where + ".tau", "must be >= 0");
        players.push_back(spec);
    }

    const auto& routes_doc = detail::require(doc, "routes", "");
    if (!routes_doc.is_array() || routes_doc.empty()) throw ScenarioError("routes", "expected a non-empty array");
    std::vector<RouteSpec> routes;
    for (std::size_t r = 0; r < routes_doc.size(); ++r) {
        const std::string where = "routes[" + std::to_string(r) + "]";
        const auto& spec_doc = routes_doc[r];
        if (!spec_doc.is_object()) throw ScenarioError(where, "expected an object");
        RouteSpec spec;
        if (auto mu = detail::optional_number(spec_doc, "mu", where)) {
            if (!(*mu > 0.0)) throw ScenarioError(where + ".mu", "must be > 0");
            spec.mu = *mu;
        }
        if (auto nu = detail::optional_number(spec_doc, "nu", where)) {
            if (!(*nu > 0.0)) throw ScenarioError(where + ".nu", "must be > 0");
            spec.nu = *nu;
        }
        routes.push_back(spec);
    }

    std::vector<CostOverride> overrides;
    if (doc.contains("delay_cost_overrides")) {
        const auto& list = doc.at("delay_cost_overrides");
        if (!list.is_array()) throw ScenarioError("delay_cost_overrides", "expected an array");
        for (std::size_t k = 0; k < list.size(); ++k) {
            const std::string where = "delay_cost_overrides[" + std::to_string(k) + "]";
            const auto& o = list[k];
            if (!o.is_object()) throw ScenarioError(where, "expected an object");
            const std::size_t i = detail::index_at(detail::require(o, "player", where), where + ".player");
            const std::size_t r = detail::index_at(detail::require(o, "route", where), where + ".route");
            if (i >= players.size()) throw ScenarioError(where + ".player", "no such player");
            if (r >= routes.size()) throw ScenarioError(where + ".route", "no such route");
            const auto& family = detail::require(o, "family", where);
            if (!family.is_string()) throw ScenarioError(where + ".family", "expected a string");
            const double chi = number_at(detail::require(o, "chi", where), where + ".chi");
            const double k_coef = o.contains("coefficient") ? number_at(o.at("coefficient"), where + ".coefficient") : 1.0;
            if (chi < 0.0) throw ScenarioError(where + ".chi", "must be >= 0");
            if (!(k_coef > 0.0)) throw ScenarioError(where + ".coefficient", "must be > 0");
            const auto f = family.get<std::string>();
            if (f == "quadratic") {
                overrides.push_back({i, r, DelayCostFn::quadratic(chi, k_coef)});
            } else if (f == "linear") {
                overrides.push_back({i, r, DelayCostFn::linear(chi, k_coef)});
            } else {
                throw ScenarioError(where + ".family", "unknown family '" + f + "' (quadratic or linear)");
            }
        }
    }

    std::vector<bool> covered(players.size() * routes.size(), false);
    for (const auto& o : overrides) covered[o.player * routes.size() + o.route] = true;
    for (std::size_t r = 0; r < routes.size(); ++r) {
        bool needs_duration = false;
        for (std::size_t i = 0; i < players.size(); ++i) needs_duration = needs_duration || !covered[i * routes.size() + r];
        if (needs_duration && !routes[r].has_duration()) {
            throw ScenarioError("routes[" + std::to_string(r) + "]", "mu and nu are required unless every player overrides this route");
        }
    }

    Scenario out{1, name, GameInstance(std::move(players), std::move(routes), flow_unit, std::move(overrides)), {}, 8, {}};
    const double scale = std::max(1.0, out.game.total_demand());
    for (std::size_t i = 0; i < out.game.num_players(); ++i) {
        for (std::size_t r = 0; r < out.game.num_routes(); ++r) {
            detail::check_cost_consistency(out.game.cost(i, r), scale,
                                           "delay_cost[" + std::to_string(i) + "][" + std::to_string(r) + "]");
        }
    }

    if (doc.contains("solver")) out.solver = detail::parse_solver(doc.at("solver"), out.starts);
    if (doc.contains("sweeps")) {
        const auto& list = doc.at("sweeps");
        if (!list.is_array()) throw ScenarioError("sweeps", "expected an array");
        for (std::size_t k = 0; k < list.size(); ++k) {
            out.sweeps.push_back(detail::parse_sweep(list[k], "sweeps[" + std::to_string(k) + "]"));
        }
    }
    return out;
}

[[nodiscard]] inline Scenario parse_scenario_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("", std::string("parse error: ") + e.what());
    }
    return parse_scenario(doc);
}

[[nodiscard]] inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("", "cannot open scenario file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_scenario_text(text.str());
}

}  // namespace green_route
