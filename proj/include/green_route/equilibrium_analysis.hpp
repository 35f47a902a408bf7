#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "green_route/errors.hpp"
#include "green_route/game_model.hpp"
#include "green_route/kkt.hpp"
#include "green_route/parallel.hpp"
#include "green_route/sampling.hpp"
#include "green_route/solvers.hpp"
#include "green_route/step_bound.hpp"

namespace green_route {

/// Raised when an analysis has nothing to work with (e.g. no verified NE).
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct KktReport {
    std::vector<PlayerKkt> players;
    double max_residual = 0.0;
    double tolerance = 0.0;
    bool is_ne = false;
};

/// Checks the KKT system of every player's problem at x. x is a NE iff
/// alpha^i = lambda^i + mu_0^i, beta_r^i = lambda^i + mu_r^i, x^i on its
/// simplex and mu_k^i x_k^i = 0 with mu >= 0. Infeasible profiles are
/// reported through the feasibility residual rather than rejected.
[[nodiscard]] inline KktReport kkt_verify(const GameInstance& game, const FlowProfile& x, double tolerance) {
    check_dimensions(game, x);
    KktReport out;
    out.tolerance = tolerance;
    const auto X = aggregate_flows(x);
    std::vector<double> grad(game.num_routes() + 1);
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        detail::player_gradient(game, x, X, i, grad);
        out.players.push_back(detail::player_kkt(x.player(i), grad, game.player(i).demand));
        out.max_residual = std::max(out.max_residual, out.players.back().max_residual());
    }
    out.is_ne = out.max_residual <= tolerance;
    return out;
}

/// Tolerance at which a converged SIRD profile is accepted as a NE.
[[nodiscard]] inline double sird_kkt_tolerance(const GameInstance& game, const SolverConfig& config,
                                               const SolverReport& report) {
    return 10.0 * resolve_epsilon(game, config) / report.gamma;
}

struct NeWitness {
    std::size_t start_index = 0;
    FlowProfile profile;
    std::vector<double> costs;
    std::vector<double> aggregate;
    double kkt_residual = 0.0;
};

struct UniquenessOptions {
    double cost_tolerance = 1e-5;  ///< relative, with a unit floor
    double flow_tolerance = 1e-5;
    std::optional<double> kkt_tolerance;  ///< defaults to 10 eps / gamma per run
    /// Probe runs stop at this fraction of the configured epsilon. Slowly
    /// contracting instances stop far from the limit otherwise, and the cost
    /// comparison then sees solver error instead of distinct equilibria.
    double epsilon_scale = 1e-3;
};

struct UniquenessReport {
    bool essentially_unique = false;
    bool inconclusive = false;          ///< fewer than two verified NE
    bool aggregates_agree = false;      ///< every witness has the same X_r
    bool all_routes_congested = false;  ///< every witness has X_r > chi_r on all routes
    bool cost_free_regime = false;      ///< some witness has a route cost-free for everyone
    std::vector<NeWitness> witnesses;
    std::size_t excluded_starts = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline bool close_relative(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline double min_threshold(const GameInstance& game, std::size_t r) {
    double chi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < game.num_players(); ++i) chi = std::min(chi, game.cost(i, r).threshold());
    return chi;
}

inline double max_threshold(const GameInstance& game, std::size_t r) {
    double chi = 0.0;
    for (std::size_t i = 0; i < game.num_players(); ++i) chi = std::max(chi, game.cost(i, r).threshold());
    return chi;
}

/// Start 0 is the uniform split; later starts are low-discrepancy profiles.
inline FlowProfile probe_start(const GameInstance& game, const ProfileSampler& sampler, std::size_t s) {
    return s == 0 ? uniform_profile(game) : sampler.sample(s - 1);
}

}  // namespace detail

/// Runs SIRD from `starts` initializations, keeps the KKT-verified limits and
/// compares their cost vectors. NE are essentially unique when all verified
/// limits give every player the same cost.
[[nodiscard]] inline UniquenessReport uniqueness_probe(const GameInstance& game, const SolverConfig& config,
                                                       std::size_t starts, const UniquenessOptions& options = {}) {
    if (starts < 2) throw DomainError("uniqueness_probe needs at least two starts");
    SolverConfig run = config;
    run.epsilon = resolve_epsilon(game, config) * options.epsilon_scale;
    ProfileSampler sampler(game, config.seed);
    std::vector<std::optional<NeWitness>> found(starts);
    std::vector<std::string> notes(starts);

    detail::parallel_for(starts, [&](std::size_t s) {
        const auto report = sird(game, detail::probe_start(game, sampler, s), run);
        if (!report.converged()) {
            notes[s] = "start " + std::to_string(s) + " excluded: " + to_string(report.stop_reason);
            return;
        }
        const double tol = options.kkt_tolerance.value_or(sird_kkt_tolerance(game, run, report));
        const auto kkt = kkt_verify(game, report.final_profile, tol);
        if (!kkt.is_ne) {
            notes[s] = "start " + std::to_string(s) + " excluded: KKT residual " + std::to_string(kkt.max_residual);
            return;
        }
        NeWitness w;
        w.start_index = s;
        w.profile = report.final_profile;
        w.costs = player_costs(game, w.profile);
        w.aggregate = aggregate_flows(w.profile);
        w.kkt_residual = kkt.max_residual;
        found[s] = std::move(w);
    });

    UniquenessReport out;
    for (std::size_t s = 0; s < starts; ++s) {
        if (found[s]) {
            out.witnesses.push_back(std::move(*found[s]));
        } else {
            ++out.excluded_starts;
            out.warnings.push_back(notes[s]);
        }
    }
    out.inconclusive = out.witnesses.size() < 2;
    if (out.witnesses.empty()) return out;

    out.essentially_unique = true;
    out.aggregates_agree = true;
    out.all_routes_congested = true;
    const auto& ref = out.witnesses.front();
    for (const auto& w : out.witnesses) {
        for (std::size_t i = 0; i < game.num_players(); ++i) {
            if (!detail::close_relative(w.costs[i], ref.costs[i], options.cost_tolerance)) out.essentially_unique = false;
        }
        for (std::size_t r = 0; r < game.num_routes(); ++r) {
            if (!detail::close_relative(w.aggregate[r], ref.aggregate[r], options.flow_tolerance)) {
                out.aggregates_agree = false;
            }
            if (w.aggregate[r] <= detail::max_threshold(game, r)) out.all_routes_congested = false;
            if (w.aggregate[r] <= detail::min_threshold(game, r)) out.cost_free_regime = true;
        }
    }
    return out;
}

/// Players whose NE cost is zero while some route still has room below their
/// threshold: their best response is a continuum, so NE come in families.
[[nodiscard]] inline std::vector<std::size_t> family_players(const GameInstance& game, const FlowProfile& x) {
    const auto X = aggregate_flows(game, x);
    const auto costs = player_costs(game, x);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        if (game.player(i).demand <= 0.0) continue;
        if (costs[i] > 1e-12 * std::max(1.0, game.player(i).demand)) continue;
        for (std::size_t r = 0; r < game.num_routes(); ++r) {
            if (X[r] < game.cost(i, r).threshold()) {
                out.push_back(i);
                break;
            }
        }
    }
    return out;
}

struct FamilySweepOptions {
    double from = 0.0;
    std::optional<double> to;  ///< defaults to the free player's demand
    double kkt_tolerance = 1e-6;
    double response_tolerance = 1e-8;  ///< iterated best responses stop below this change
    std::size_t max_rounds = 1000;
    SolverConfig solver;
};

struct FamilyPoint {
    double value = 0.0;  ///< pinned x_r^i
    FlowProfile profile;
    bool valid = false;  ///< opponents' responses settled
    bool is_ne = false;
    double social_cost = 0.0;
    double kkt_residual = 0.0;
};

namespace detail {

/// Player i pinned to (0, ..., v on route r, ...) with the remainder split
/// evenly over the other routes.
inline std::optional<std::vector<double>> family_template(const GameInstance& game, std::size_t i, std::size_t r,
                                                          double v) {
    const double D = game.player(i).demand;
    const std::size_t R = game.num_routes();
    if (v < 0.0 || v > D * (1.0 + 1e-12)) return std::nullopt;
    v = std::min(v, D);
    std::vector<double> row(R + 1, 0.0);
    row[r + 1] = v;
    if (R == 1) {
        if (std::abs(D - v) > 1e-12 * std::max(1.0, D)) return std::nullopt;
        return row;
    }
    const double share = (D - v) / static_cast<double>(R - 1);
    for (std::size_t s = 0; s < R; ++s) {
        if (s != r) row[s + 1] = share;
    }
    return row;
}

inline FamilyPoint family_point(const GameInstance& game, std::size_t i, std::size_t r, double v,
                                const FamilySweepOptions& options) {
    FamilyPoint point;
    point.value = v;
    const auto pinned = family_template(game, i, r, v);
    if (!pinned) return point;

    FlowProfile x = uniform_profile(game);
    std::copy(pinned->begin(), pinned->end(), x.player(i).begin());
    if (game.num_players() > 1) {
        bool settled = false;
        try {
            for (std::size_t round = 0; round < options.max_rounds && !settled; ++round) {
                double change = 0.0;
                for (std::size_t j = 0; j < game.num_players(); ++j) {
                    if (j == i) continue;
                    const auto br = best_response(game, x, j, options.solver);
                    auto row = x.player(j);
                    for (std::size_t k = 0; k < row.size(); ++k) {
                        change = std::max(change, std::abs(row[k] - br.strategy[k]));
                        row[k] = br.strategy[k];
                    }
                }
                settled = change <= options.response_tolerance;
            }
        } catch (const BestResponseError&) {
            settled = false;
        }
        if (!settled) {
            point.profile = x;
            return point;
        }
    }
    point.valid = true;
    point.profile = x;
    const auto kkt = kkt_verify(game, x, options.kkt_tolerance);
    point.is_ne = kkt.is_ne;
    point.kkt_residual = kkt.max_residual;
    point.social_cost = social_cost(game, x);
    return point;
}

}  // namespace detail

/// Sweeps the pinned coordinate x_r^i over `grid` evenly spaced values in
/// [from, to] (the midpoint when grid == 1). At each value the other players
/// iterate best responses to a joint fixed point and the assembled profile is
/// KKT-checked. Points are independent and computed concurrently.
[[nodiscard]] inline std::vector<FamilyPoint> ne_family_sweep(const GameInstance& game, std::size_t player,
                                                              std::size_t route, std::size_t grid,
                                                              const FamilySweepOptions& options = {}) {
    detail::check_player(game, player);
    detail::check_route(game, route);
    if (grid == 0) throw DomainError("family sweep needs at least one grid point");
    const double from = options.from;
    const double to = options.to.value_or(game.player(player).demand);
    if (!(from <= to)) throw DomainError("family sweep range must satisfy from <= to");

    std::vector<FamilyPoint> points(grid);
    detail::parallel_for(grid, [&](std::size_t k) {
        const double v = grid == 1 ? 0.5 * (from + to)
                                   : from + (to - from) * static_cast<double>(k) / static_cast<double>(grid - 1);
        points[k] = detail::family_point(game, player, route, v, options);
    });
    return points;
}

enum class NeProvenance { unique, family_sweep, multi_start };

[[nodiscard]] inline std::string to_string(NeProvenance p) {
    switch (p) {
        case NeProvenance::unique: return "unique";
        case NeProvenance::family_sweep: return "family_sweep";
        case NeProvenance::multi_start: return "multi_start";
    }
    return "unknown";
}

struct PoaOptions {
    std::size_t starts = 8;
    std::size_t family_grid = 101;
};

struct PoaReport {
    double optimum_cost = 0.0;
    double worst_ne_cost = 0.0;
    double poa = 1.0;
    NeProvenance provenance = NeProvenance::multi_start;
    FlowProfile optimum;
    FlowProfile worst_ne;
    UniquenessReport probe;
    std::vector<std::string> notes;
};

/// Worst verified NE social cost over the optimal social cost. The worst NE
/// comes from the multi-start probe plus, when some player has a zero-cost
/// best-response continuum, one-coordinate family sweeps of that player.
[[nodiscard]] inline PoaReport price_of_anarchy(const GameInstance& game, const SolverConfig& config,
                                                const PoaOptions& options = {}) {
    PoaReport out;
    out.probe = uniqueness_probe(game, config, std::max<std::size_t>(options.starts, 2));
    if (out.probe.witnesses.empty()) throw AnalysisError("no verified Nash equilibrium found");

    const NeWitness* worst = nullptr;
    const NeWitness* cheapest = nullptr;
    for (const auto& w : out.probe.witnesses) {
        const double c = social_cost(game, w.profile);
        if (!worst || c > social_cost(game, worst->profile)) worst = &w;
        if (!cheapest || c < social_cost(game, cheapest->profile)) cheapest = &w;
    }
    out.worst_ne = worst->profile;
    out.worst_ne_cost = social_cost(game, worst->profile);
    out.provenance = out.probe.essentially_unique && !out.probe.inconclusive ? NeProvenance::unique
                                                                              : NeProvenance::multi_start;

    std::vector<std::pair<std::size_t, std::size_t>> swept;
    for (const auto& w : out.probe.witnesses) {
        for (std::size_t i : family_players(game, w.profile)) {
            for (std::size_t r = 0; r < game.num_routes(); ++r) {
                if (std::find(swept.begin(), swept.end(), std::pair{i, r}) != swept.end()) continue;
                swept.emplace_back(i, r);
                FamilySweepOptions sweep;
                sweep.solver = config;
                for (const auto& p : ne_family_sweep(game, i, r, options.family_grid, sweep)) {
                    if (p.valid && p.is_ne && p.social_cost > out.worst_ne_cost) {
                        out.worst_ne_cost = p.social_cost;
                        out.worst_ne = p.profile;
                        out.provenance = NeProvenance::family_sweep;
                    }
                }
            }
        }
    }

    const auto optimum = social_optimum(game, config, std::max<std::size_t>(options.starts, 1));
    out.optimum = optimum.best.final_profile;
    out.optimum_cost = optimum.best_cost;
    const double cheapest_ne = social_cost(game, cheapest->profile);
    if (cheapest_ne < out.optimum_cost) {
        // Any NE is feasible, so it bounds the optimum from above.
        out.optimum_cost = cheapest_ne;
        out.optimum = cheapest->profile;
        out.notes.push_back("optimum search stopped above a verified NE; using the NE cost");
    }
    if (optimum.minima_disagree) out.notes.push_back("social optimum starts reached different local minima");

    const double zero = 1e-12 * std::max(1.0, game.total_demand());
    if (out.optimum_cost <= zero) {
        out.poa = out.worst_ne_cost <= zero ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
        out.poa = out.worst_ne_cost / out.optimum_cost;
    }
    return out;
}

}  // namespace green_route
