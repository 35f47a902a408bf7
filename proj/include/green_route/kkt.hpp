#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "green_route/game_model.hpp"
#include "green_route/simplex_projection.hpp"

namespace green_route {

/// KKT measures for one player's problem min J^i over the demand simplex.
///
/// Prices are alpha^i for the ICEV share and beta_r^i for route r. The
/// multiplier of the demand constraint is the cheapest price, and the slack
/// multipliers are the price gaps to it (nonnegative by construction).
struct PlayerKkt {
    double lambda = 0.0;
    std::vector<double> slack_multipliers;  ///< mu_0 .. mu_R
    double stationarity_residual = 0.0;     ///< || x^i - P(x^i - grad_i J^i) ||_inf
    double complementarity_residual = 0.0;  ///< max_k |mu_k x_k| / max(1, D^i)
    double feasibility_residual = 0.0;      ///< relative conservation / sign violation

    [[nodiscard]] double max_residual() const {
        return std::max({stationarity_residual, complementarity_residual, feasibility_residual});
    }
};

namespace detail {

/// `prices` is grad_i J^i, `strategy` is x^i.
inline PlayerKkt player_kkt(std::span<const double> strategy, std::span<const double> prices, double demand) {
    PlayerKkt out;
    const double scale = std::max(1.0, demand);
    out.lambda = *std::min_element(prices.begin(), prices.end());
    out.slack_multipliers.resize(prices.size());

    double sum = 0.0;
    for (std::size_t k = 0; k < prices.size(); ++k) {
        const double mu = prices[k] - out.lambda;
        out.slack_multipliers[k] = mu;
        out.complementarity_residual = std::max(out.complementarity_residual, std::abs(mu * strategy[k]) / scale);
        out.feasibility_residual = std::max(out.feasibility_residual, -strategy[k] / scale);
        sum += strategy[k];
    }
    out.feasibility_residual = std::max(out.feasibility_residual, std::abs(sum - demand) / scale);

    bool finite = std::isfinite(sum);
    for (double p : prices) finite = finite && std::isfinite(p);
    if (!finite) {
        out.stationarity_residual = std::numeric_limits<double>::infinity();
        return out;
    }
    std::vector<double> shifted(prices.size());
    std::vector<double> projected(prices.size());
    std::vector<double> scratch;
    for (std::size_t k = 0; k < prices.size(); ++k) shifted[k] = strategy[k] - prices[k];
    project_onto_simplex(std::max(demand, 0.0), shifted, projected, scratch);
    for (std::size_t k = 0; k < prices.size(); ++k) {
        out.stationarity_residual = std::max(out.stationarity_residual, std::abs(strategy[k] - projected[k]));
    }
    return out;
}

}  // namespace detail

}  // namespace green_route
