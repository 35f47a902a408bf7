#pragma once

// Iterative dynamics on the product of demand simplices.
//
//   sird          x^i[k] = P_i(x^i[k-1] - gamma grad_i J^i(x[k-1])), all i at once
//   itproxpt      same with diminishing steps gamma_k and a damping term
//                 theta (x^i[k-1] - x^i[k-2]) added to the gradient
//   best_response projected gradient on one player's convex problem
//   social_optimum multi-start projected gradient on sum_i J^i

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "green_route/errors.hpp"
#include "green_route/game_model.hpp"
#include "green_route/kkt.hpp"
#include "green_route/parallel.hpp"
#include "green_route/sampling.hpp"
#include "green_route/simplex_projection.hpp"
#include "green_route/step_bound.hpp"

namespace green_route {

struct SolverConfig {
    std::optional<double> gamma;    ///< fixed step; derived from the game when unset
    std::optional<double> epsilon;  ///< stop when ||x[k] - x[k-1]|| < epsilon
    std::size_t max_iterations = 1'000'000;
    double theta = 0.5;          ///< itproxpt damping weight, in [0, 1)
    double step_exponent = 0.5;  ///< itproxpt schedule gamma_k = gamma k^-p, p in [0, 1]
    std::uint64_t seed = 0;
    bool record_trace = false;
    std::optional<FlowProfile> reference;  ///< traced distances are measured to this
    std::size_t bound_samples = 10'000;    ///< samples for the default-step certificate

    void validate() const {
        if (gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) throw DomainError("gamma must be > 0");
        if (epsilon && !(*epsilon > 0.0 && std::isfinite(*epsilon))) throw DomainError("epsilon must be > 0");
        if (max_iterations == 0) throw DomainError("max_iterations must be >= 1");
        if (!(theta >= 0.0 && theta < 1.0)) throw DomainError("theta must lie in [0, 1)");
        if (!(step_exponent >= 0.0 && step_exponent <= 1.0)) throw DomainError("step exponent must lie in [0, 1]");
    }
};

enum class StopReason { converged, max_iterations, divergence_detected };

[[nodiscard]] inline std::string to_string(StopReason s) {
    switch (s) {
        case StopReason::converged: return "converged";
        case StopReason::max_iterations: return "max_iterations";
        case StopReason::divergence_detected: return "divergence_detected";
    }
    return "unknown";
}

struct TraceRecord {
    std::size_t iteration = 0;
    double step_norm = 0.0;
    double social_cost = 0.0;
    std::vector<double> player_costs;
    std::optional<double> distance_to_reference;
};

struct SolverReport {
    FlowProfile final_profile;
    std::size_t iterations = 0;
    StopReason stop_reason = StopReason::max_iterations;
    double gamma = 0.0;  ///< step in force at the end (after any halving)
    double final_step_norm = std::numeric_limits<double>::infinity();
    std::vector<TraceRecord> trace;
    std::vector<std::string> warnings;

    [[nodiscard]] bool converged() const { return stop_reason == StopReason::converged; }
};

/// 1e-9 max(1, sum D) unless configured.
[[nodiscard]] inline double resolve_epsilon(const GameInstance& game, const SolverConfig& config) {
    return config.epsilon.value_or(1e-9 * std::max(1.0, game.total_demand()));
}

struct StepChoice {
    double gamma = 1.0;
    bool adaptive = false;
};

/// Default SIRD step: the sampled certificate a when positive, capped by the
/// inverse Jacobian bound, otherwise the inverse bound alone. Divergence
/// monitoring stays on either way.
[[nodiscard]] inline StepChoice default_step(const GameInstance& game, const SolverConfig& config) {
    const double lipschitz = jacobian_norm_bound(game);
    const double inverse = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
    double gamma = inverse;
    if (game.identical_costs()) {
        const double a = detail::sampled_modulus(game, config.bound_samples, config.seed);
        if (a > 0.0) gamma = std::min(a, inverse);
    }
    return {gamma, true};
}

namespace detail {

inline void require_feasible_start(const GameInstance& game, const FlowProfile& start) {
    check_dimensions(game, start);
    const double violation = feasibility_violation(game, start);
    if (!(violation <= 1e-9)) {
        throw DomainError("start profile is infeasible (relative violation " + std::to_string(violation) + ")");
    }
}

inline TraceRecord make_record(const GameInstance& game, const FlowProfile& x, std::size_t k, double step,
                               const SolverConfig& config) {
    TraceRecord rec;
    rec.iteration = k;
    rec.step_norm = step;
    rec.player_costs = player_costs(game, x);
    for (double c : rec.player_costs) rec.social_cost += c;
    if (config.reference) rec.distance_to_reference = distance(x, *config.reference);
    return rec;
}

/// Watches successive-iterate distances; fires when the distance grew more
/// than tenfold over the last `window` steps.
class DivergenceMonitor {
public:
    explicit DivergenceMonitor(std::size_t window = 50) : history_(window, 0.0) {}

    bool push(double step) {
        const std::size_t slot = count_ % history_.size();
        const bool full = count_ >= history_.size();
        const double old = history_[slot];
        history_[slot] = step;
        ++count_;
        return full && old > 0.0 && step > 10.0 * old;
    }

    void reset() { count_ = 0; }

private:
    std::vector<double> history_;
    std::size_t count_ = 0;
};

/// Shared loop for sird (theta = 0, constant schedule) and itproxpt.
/// `step_at(k)` returns the step used in iteration k >= 1.
template <class Schedule>
SolverReport projected_dynamics(const GameInstance& game, const FlowProfile& start, const SolverConfig& config,
                                Schedule step_at, double theta, bool adaptive) {
    const double eps = resolve_epsilon(game, config);
    const std::size_t N = game.num_players();
    const std::size_t n = game.num_routes() + 1;

    SolverReport report;
    FlowProfile x = start;
    FlowProfile previous = start;  // x[k-2] for the damping term; x[-1] = x[0]
    FlowProfile next(N, game.num_routes());
    std::vector<double> grad(n), shifted(n), scratch;
    DivergenceMonitor monitor;
    double halving = 1.0;

    for (std::size_t k = 1; k <= config.max_iterations; ++k) {
        const double gamma = step_at(k) * halving;
        report.gamma = gamma;
        const auto X = aggregate_flows(x);
        bool finite = true;
        for (std::size_t i = 0; i < N && finite; ++i) {
            detail::player_gradient(game, x, X, i, grad);
            const auto xi = x.player(i);
            const auto pi = previous.player(i);
            for (std::size_t c = 0; c < n; ++c) {
                shifted[c] = xi[c] - gamma * (grad[c] + theta * (xi[c] - pi[c]));
                finite = finite && std::isfinite(shifted[c]);
            }
            if (finite) project_onto_simplex(game.player(i).demand, shifted, next.player(i), scratch);
        }
        if (!finite) {
            report.stop_reason = StopReason::divergence_detected;
            report.final_profile = x;
            report.iterations = k - 1;
            report.warnings.push_back("non-finite iterate at iteration " + std::to_string(k));
            return report;
        }
        const double step = distance(next, x);
        previous = x;
        std::swap(x, next);
        report.iterations = k;
        report.final_step_norm = step;
        if (config.record_trace) report.trace.push_back(make_record(game, x, k, step, config));
        if (step < eps) {
            report.stop_reason = StopReason::converged;
            report.final_profile = x;
            return report;
        }
        if (adaptive && monitor.push(step)) {
            halving *= 0.5;
            monitor.reset();
            report.warnings.push_back("step growth detected at iteration " + std::to_string(k) +
                                      "; gamma halved to " + std::to_string(step_at(k + 1) * halving));
        }
    }
    report.stop_reason = StopReason::max_iterations;
    report.final_profile = x;
    return report;
}

}  // namespace detail

/// Simultaneous improving response dynamics: every player takes one projected
/// gradient step against x[k-1]; stops once ||x[k] - x[k-1]|| < epsilon.
[[nodiscard]] inline SolverReport sird(const GameInstance& game, const FlowProfile& start,
                                       const SolverConfig& config = {}) {
    config.validate();
    detail::require_feasible_start(game, start);
    const StepChoice step = config.gamma ? StepChoice{*config.gamma, false} : default_step(game, config);
    return detail::projected_dynamics(
        game, start, config, [gamma = step.gamma](std::size_t) { return gamma; }, 0.0, step.adaptive);
}

/// Iterative proximal-point baseline: step k uses gamma k^-p (gamma defaults
/// to 1) and the gradient gains theta (x^i[k-1] - x^i[k-2]).
[[nodiscard]] inline SolverReport itproxpt(const GameInstance& game, const FlowProfile& start,
                                           const SolverConfig& config = {}) {
    config.validate();
    detail::require_feasible_start(game, start);
    const double base = config.gamma.value_or(1.0);
    const double p = config.step_exponent;
    auto schedule = [base, p](std::size_t k) {
        return p == 0.0 ? base : base * std::pow(static_cast<double>(k), -p);
    };
    return detail::projected_dynamics(game, start, config, schedule, config.theta, false);
}

struct BestResponse {
    std::vector<double> strategy;  ///< (x_0^i, x_1^i, ..., x_R^i)
    double cost = 0.0;
    bool non_unique = false;  ///< a different zero-cost split exists
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
};

class BestResponseError : public std::runtime_error {
public:
    BestResponseError(const std::string& what, std::vector<double> best, double residual)
        : std::runtime_error(what), best_iterate(std::move(best)), residual(residual) {}

    std::vector<double> best_iterate;
    double residual;
};

namespace detail {

struct BestResponseOptions {
    double target = 1e-11;     ///< stop once the KKT residual is below this
    double acceptance = 1e-7;  ///< fail above this
};

inline double player_cost_against(const GameInstance& game, std::size_t i, std::span<const double> y,
                                  std::span<const double> others) {
    double cost = game.player(i).alpha * y[0];
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        if (y[r + 1] != 0.0) cost += y[r + 1] * game.cost(i, r).value(others[r] + y[r + 1]);
    }
    return cost;
}

}  // namespace detail

/// argmin over X^i of J^i(., x^{-i}), by projected gradient with step 1/L
/// where L bounds the curvature of each route term on [0, D^i].
[[nodiscard]] inline BestResponse best_response(const GameInstance& game, const FlowProfile& profile, std::size_t i,
                                                const SolverConfig& config = {},
                                                detail::BestResponseOptions options = {}) {
    config.validate();
    check_dimensions(game, profile);
    detail::check_player(game, i);
    const std::size_t R = game.num_routes();
    const double D = game.player(i).demand;

    std::vector<double> others(R);  // sum_{j != i} x_r^j
    for (std::size_t j = 0; j < game.num_players(); ++j) {
        if (j == i) continue;
        for (std::size_t r = 0; r < R; ++r) others[r] += profile.route(j, r);
    }

    double curvature = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const auto& c = game.cost(i, r);
        curvature = std::max(curvature, 2.0 * c.derivative(others[r] + D) + D * c.second_derivative(others[r] + D));
    }
    const double gamma = curvature > 0.0 ? 1.0 / curvature : 1.0;

    std::vector<double> y(R + 1), grad(R + 1), shifted(R + 1), next(R + 1), scratch;
    {
        auto row = profile.player(i);
        std::copy(row.begin(), row.end(), y.begin());
        project_onto_simplex(D, std::vector<double>(y), y, scratch);
    }
    auto prices = [&](std::span<const double> v, std::span<double> out) {
        out[0] = game.player(i).alpha;
        for (std::size_t r = 0; r < R; ++r) {
            const auto& c = game.cost(i, r);
            const double X = others[r] + v[r + 1];
            out[r + 1] = c.value(X) + v[r + 1] * c.derivative(X);
        }
    };

    BestResponse out;
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= config.max_iterations; ++k) {
        prices(y, grad);
        residual = detail::player_kkt(y, grad, D).max_residual();
        out.iterations = k;
        if (residual <= options.target) break;
        for (std::size_t c = 0; c <= R; ++c) shifted[c] = y[c] - gamma * grad[c];
        project_onto_simplex(D, shifted, next, scratch);
        double moved = 0.0;
        for (std::size_t c = 0; c <= R; ++c) moved = std::max(moved, std::abs(next[c] - y[c]));
        std::swap(y, next);
        if (moved <= 1e-16 * std::max(1.0, D)) {
            prices(y, grad);
            residual = detail::player_kkt(y, grad, D).max_residual();
            break;
        }
    }
    if (!(residual <= options.acceptance)) {
        throw BestResponseError("best response for player " + std::to_string(i) + " did not converge (residual " +
                                    std::to_string(residual) + ")",
                                y, residual);
    }
    out.strategy = y;
    out.kkt_residual = residual;
    out.cost = detail::player_cost_against(game, i, y, others);

    // Zero-cost options: ICEVs when alpha = 0 (unbounded room), and each route
    // up to the flow that keeps X_r inside player i's cost-free interval.
    if (D > 0.0 && out.cost <= 1e-12 * std::max(1.0, D)) {
        std::size_t options_with_room = 0;
        double room = 0.0;
        if (game.player(i).alpha == 0.0) {
            ++options_with_room;
            room = std::numeric_limits<double>::infinity();
        }
        for (std::size_t r = 0; r < R; ++r) {
            const double cap = game.cost(i, r).threshold() - others[r];
            if (cap > 0.0) {
                ++options_with_room;
                room += cap;
            }
        }
        out.non_unique = options_with_room >= 2 && room > D * (1.0 + 1e-12);
    }
    return out;
}

struct LocalMinimum {
    FlowProfile profile;
    double social_cost = 0.0;
    StopReason stop_reason = StopReason::max_iterations;
    std::size_t iterations = 0;
};

struct SocialOptimumReport {
    SolverReport best;
    double best_cost = 0.0;
    std::vector<LocalMinimum> minima;  ///< one per start, in start order
    bool minima_disagree = false;      ///< costs spread by more than 1e-6 relative
};

namespace detail {

/// Curvature bound for sum_i J^i on each route block; c' and c'' are
/// nondecreasing, so entries peak at X = sum D.
inline double social_hessian_bound(const GameInstance& game) {
    const double X = game.total_demand();
    double bound = 0.0;
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        double shared = 0.0;
        for (std::size_t k = 0; k < game.num_players(); ++k) {
            shared += game.player(k).demand * game.cost(k, r).second_derivative(X);
        }
        double frob = 0.0;
        for (std::size_t i = 0; i < game.num_players(); ++i) {
            for (std::size_t j = 0; j < game.num_players(); ++j) {
                const double e = game.cost(i, r).derivative(X) + game.cost(j, r).derivative(X) + shared;
                frob += e * e;
            }
        }
        bound = std::max(bound, std::sqrt(frob));
    }
    return bound;
}

/// d/dx_r^i sum_j J^j = c_r^i(X_r) + sum_j x_r^j c_r^j'(X_r); d/dx_0^i = alpha^i.
inline void social_gradient(const GameInstance& game, const FlowProfile& x, std::span<const double> X,
                            FlowProfile& grad) {
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        double spill = 0.0;
        for (std::size_t j = 0; j < game.num_players(); ++j) spill += x.route(j, r) * game.cost(j, r).derivative(X[r]);
        for (std::size_t i = 0; i < game.num_players(); ++i) grad(i, r + 1) = game.cost(i, r).value(X[r]) + spill;
    }
    for (std::size_t i = 0; i < game.num_players(); ++i) grad(i, 0) = game.player(i).alpha;
}

inline LocalMinimum social_descent(const GameInstance& game, FlowProfile x, double gamma, double eps,
                                   std::size_t max_iterations) {
    const std::size_t n = game.num_routes() + 1;
    FlowProfile grad(game.num_players(), game.num_routes());
    FlowProfile next(game.num_players(), game.num_routes());
    std::vector<double> shifted(n), scratch;
    LocalMinimum out;
    for (std::size_t k = 1; k <= max_iterations; ++k) {
        const auto X = aggregate_flows(x);
        social_gradient(game, x, X, grad);
        for (std::size_t i = 0; i < game.num_players(); ++i) {
            const auto xi = x.player(i);
            const auto gi = grad.player(i);
            for (std::size_t c = 0; c < n; ++c) shifted[c] = xi[c] - gamma * gi[c];
            project_onto_simplex(game.player(i).demand, shifted, next.player(i), scratch);
        }
        const double step = distance(next, x);
        std::swap(x, next);
        out.iterations = k;
        if (step < eps) {
            out.stop_reason = StopReason::converged;
            break;
        }
    }
    out.social_cost = social_cost(game, x);
    out.profile = std::move(x);
    return out;
}

}  // namespace detail

/// Multi-start projected gradient on the social cost. Starts are
/// low-discrepancy profiles drawn from config.seed; the best local minimum
/// wins (earliest start on ties).
[[nodiscard]] inline SocialOptimumReport social_optimum(const GameInstance& game, const SolverConfig& config = {},
                                                        std::size_t starts = 8) {
    config.validate();
    if (starts == 0) throw DomainError("social_optimum needs at least one start");
    const double curvature = detail::social_hessian_bound(game);
    const double gamma = config.gamma.value_or(curvature > 0.0 ? 1.0 / curvature : 1.0);
    const double eps = resolve_epsilon(game, config);

    SocialOptimumReport out;
    out.minima.resize(starts);
    ProfileSampler sampler(game, config.seed);
    detail::parallel_for(starts, [&](std::size_t s) {
        out.minima[s] = detail::social_descent(game, sampler.sample(s), gamma, eps, config.max_iterations);
    });

    std::size_t best = 0;
    double lo = out.minima[0].social_cost;
    double hi = lo;
    for (std::size_t s = 1; s < starts; ++s) {
        const double c = out.minima[s].social_cost;
        if (c < out.minima[best].social_cost) best = s;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    out.minima_disagree = (hi - lo) > 1e-6 * std::max(1.0, std::abs(lo));
    const auto& winner = out.minima[best];
    out.best_cost = winner.social_cost;
    out.best.final_profile = winner.profile;
    out.best.iterations = winner.iterations;
    out.best.stop_reason = winner.stop_reason;
    out.best.gamma = gamma;
    if (out.minima_disagree) out.best.warnings.push_back("local minima disagree across starts");
    return out;
}

}  // namespace green_route
