#pragma once

// Step-size certificate for simultaneous projected-gradient play.
//
// On each route the symmetric part of the Jacobian of F = [grad_i J^i]_i is
// PSD whenever
//
//     2 c'(X) (1 - (c''(X) / (2 c'(X)))^2 ||x_r||^2) >= a > 0,
//
// with x_r = (x_r^1, ..., x_r^N). A uniform a over the feasible set makes F
// co-coercive and the projected iteration averaged for gamma < 2a.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "green_route/errors.hpp"
#include "green_route/game_model.hpp"
#include "green_route/sampling.hpp"

namespace green_route {

/// Left side of the route-r condition, using player 0's cost (identical-cost
/// games). Zero where c'(X_r) = 0.
[[nodiscard]] inline double cocoercivity_lhs(const GameInstance& game, const FlowProfile& x, std::size_t r) {
    const auto& c = game.cost(0, r);
    double X = 0.0;
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        X += x.route(i, r);
        norm_sq += x.route(i, r) * x.route(i, r);
    }
    const double d1 = c.derivative(X);
    if (d1 <= 0.0) return 0.0;
    const double ratio = c.second_derivative(X) / (2.0 * d1);
    return 2.0 * d1 * (1.0 - ratio * ratio * norm_sq);
}

/// Route-r block of the Jacobian of F: d beta_r^i / d x_r^j.
[[nodiscard]] inline Eigen::MatrixXd route_jacobian(const GameInstance& game, const FlowProfile& x, std::size_t r) {
    const std::size_t N = game.num_players();
    double X = 0.0;
    for (std::size_t i = 0; i < N; ++i) X += x.route(i, r);
    Eigen::MatrixXd G(N, N);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& c = game.cost(i, r);
        const double d1 = c.derivative(X);
        const double cross = d1 + x.route(i, r) * c.second_derivative(X);
        for (std::size_t j = 0; j < N; ++j) G(i, j) = cross + (i == j ? d1 : 0.0);
    }
    return G;
}

/// Smallest eigenvalue of G + G^T over the route blocks. The ICEV block of
/// the Jacobian is identically zero and is left out.
[[nodiscard]] inline double symmetric_jacobian_min_eigenvalue(const GameInstance& game, const FlowProfile& x) {
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        const Eigen::MatrixXd G = route_jacobian(game, x, r);
        const Eigen::MatrixXd S = G + G.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Eigen::EigenvaluesOnly);
        lowest = std::min(lowest, solver.eigenvalues().minCoeff());
    }
    return lowest;
}

/// Upper bound on the spectral norm of the Jacobian of F over the feasible
/// box: entries are bounded at X = sum D and x^i = D^i, since c' and c'' are
/// nondecreasing for every supported family.
[[nodiscard]] inline double jacobian_norm_bound(const GameInstance& game) {
    const double X = game.total_demand();
    double bound = 0.0;
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        double frob = 0.0;
        for (std::size_t i = 0; i < game.num_players(); ++i) {
            const auto& c = game.cost(i, r);
            const double off = c.derivative(X) + game.player(i).demand * c.second_derivative(X);
            const double diag = off + c.derivative(X);
            frob += diag * diag + static_cast<double>(game.num_players() - 1) * off * off;
        }
        bound = std::max(bound, std::sqrt(frob));
    }
    return bound;
}

struct StepBound {
    double a = 0.0;          ///< modulus over sampled points where c' > 0
    double gamma_max = 0.0;  ///< always exactly 2a
    bool condition_holds = false;
    std::size_t samples = 0;
    std::size_t cost_free_hits = 0;  ///< (sample, route) pairs with c'(X_r) = 0
    double worst_lhs = std::numeric_limits<double>::infinity();
    FlowProfile worst_point;
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    /// Over samples whose every route satisfies lhs >= 0.
    double min_eigenvalue_where_condition = std::numeric_limits<double>::infinity();
    std::size_t condition_samples = 0;
};

namespace detail {

/// Restricted-region modulus only; no eigenvalue work.
inline double sampled_modulus(const GameInstance& game, std::size_t samples, std::uint64_t seed) {
    ProfileSampler sampler(game, seed);
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
        const auto x = sampler.sample(s);
        const auto X = aggregate_flows(x);
        for (std::size_t r = 0; r < game.num_routes(); ++r) {
            if (game.cost(0, r).derivative(X[r]) > 0.0) lowest = std::min(lowest, cocoercivity_lhs(game, x, r));
        }
    }
    return std::isfinite(lowest) ? std::max(0.0, lowest) : 0.0;
}

}  // namespace detail

/// Samples the co-coercivity condition over low-discrepancy feasible profiles.
/// `a` is the infimum over points with c'(X_r) > 0; `condition_holds` also
/// requires that no sampled route sat in its cost-free interval.
[[nodiscard]] inline StepBound step_size_bound(const GameInstance& game, std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw DomainError("step_size_bound needs at least one sample");
    if (!game.identical_costs()) {
        throw DomainError("step_size_bound requires delay costs identical across players");
    }
    StepBound out;
    out.samples = samples;
    ProfileSampler sampler(game, seed);
    double restricted = std::numeric_limits<double>::infinity();
    double overall = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) {
        const auto x = sampler.sample(s);
        const auto X = aggregate_flows(x);
        double sample_min = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < game.num_routes(); ++r) {
            const double lhs = cocoercivity_lhs(game, x, r);
            sample_min = std::min(sample_min, lhs);
            overall = std::min(overall, lhs);
            if (game.cost(0, r).derivative(X[r]) > 0.0) {
                if (lhs < restricted) {
                    restricted = lhs;
                    out.worst_lhs = lhs;
                    out.worst_point = x;
                }
            } else {
                ++out.cost_free_hits;
            }
        }
        const double eig = symmetric_jacobian_min_eigenvalue(game, x);
        out.min_eigenvalue = std::min(out.min_eigenvalue, eig);
        if (sample_min >= 0.0) {
            ++out.condition_samples;
            out.min_eigenvalue_where_condition = std::min(out.min_eigenvalue_where_condition, eig);
        }
    }
    out.a = std::isfinite(restricted) ? std::max(0.0, restricted) : 0.0;
    out.gamma_max = 2.0 * out.a;
    out.condition_holds = out.a > 0.0 && overall >= out.a;
    return out;
}

}  // namespace green_route
