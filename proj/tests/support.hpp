#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// re-derive quantities from raw parameters instead of calling the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "green_route/game_model.hpp"

namespace test_support {

using green_route::DelayCostFn;
using green_route::FlowProfile;
using green_route::GameInstance;
using green_route::PlayerSpec;

inline std::string scenario_path(const std::string& file) { return std::string(GREEN_ROUTE_SCENARIO_DIR) + "/" + file; }

/// Raw k * max(X - chi, 0)^p, kept alongside the instance for the oracles.
struct RawCost {
    double chi = 0.0;
    double k = 1.0;
    int power = 2;

    [[nodiscard]] double operator()(double X) const {
        const double t = X - chi;
        if (t <= 0.0) return 0.0;
        return power == 1 ? k * t : k * t * t;
    }
};

struct RandomGame {
    GameInstance game;
    std::vector<std::vector<RawCost>> raw;  // [player][route]
};

/// Random instance with quadratic-beyond-threshold costs. With `identical`
/// every player shares one cost per route.
inline RandomGame random_game(std::mt19937_64& rng, std::size_t N, std::size_t R, bool identical,
                              double demand_scale = 10.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<PlayerSpec> players;
    for (std::size_t i = 0; i < N; ++i) {
        players.push_back({demand_scale * (0.2 + unit(rng)), 0.5 + 4.0 * unit(rng), 0.0});
    }
    double total = 0.0;
    for (const auto& p : players) total += p.demand;

    std::vector<RawCost> shared(R);
    for (auto& c : shared) c = {0.3 * total * unit(rng) / static_cast<double>(R), 0.05 + unit(rng), 2};
    std::vector<std::vector<RawCost>> raw(N, std::vector<RawCost>(R));
    std::vector<std::vector<DelayCostFn>> matrix(N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t r = 0; r < R; ++r) {
            raw[i][r] = identical ? shared[r] : RawCost{0.3 * total * unit(rng) / static_cast<double>(R), 0.05 + unit(rng), 2};
            matrix[i].push_back(DelayCostFn::quadratic(raw[i][r].chi, raw[i][r].k));
        }
    }
    return {GameInstance::from_costs(players, matrix), raw};
}

/// Uniformly random feasible profile (normalized exponentials).
inline FlowProfile random_profile(std::mt19937_64& rng, const GameInstance& game) {
    std::exponential_distribution<double> expo(1.0);
    FlowProfile x(game.num_players(), game.num_routes());
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        double sum = 0.0;
        for (double& v : x.player(i)) sum += (v = expo(rng));
        for (double& v : x.player(i)) v *= game.player(i).demand / sum;
    }
    return x;
}

/// J^i by direct double summation over the raw parameters.
inline double oracle_cost(const RandomGame& g, const FlowProfile& x, std::size_t i) {
    const std::size_t R = g.game.num_routes();
    double cost = g.game.player(i).alpha * x(i, 0);
    for (std::size_t r = 0; r < R; ++r) {
        double X = 0.0;
        for (std::size_t j = 0; j < g.game.num_players(); ++j) X += x(j, r + 1);
        cost += x(i, r + 1) * g.raw[i][r](X);
    }
    return cost;
}

/// Exact projection onto {v >= 0, sum v = total} by enumerating supports: on
/// a support S the minimizer is p_S - t with t fixed by the sum constraint.
inline std::vector<double> projection_oracle(const std::vector<double>& p, double total) {
    const std::size_t n = p.size();
    std::vector<double> best(n, 0.0);
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask & (1u << j)) {
                sum += p[j];
                ++count;
            }
        }
        const double t = (sum - total) / static_cast<double>(count);
        std::vector<double> v(n, 0.0);
        bool ok = true;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask & (1u << j)) {
                v[j] = p[j] - t;
                if (v[j] < 0.0) ok = false;
            }
        }
        if (!ok) continue;
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) d += (p[j] - v[j]) * (p[j] - v[j]);
        if (d < best_dist) {
            best_dist = d;
            best = v;
        }
    }
    return best;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

/// The two-player, two-route instance with thresholds 10 (player 1) and 1
/// (player 2), unit quadratic costs, D = (2, 10), alpha = (3, 3).
inline GameInstance two_threshold_game() {
    return GameInstance::from_costs(
        {{2.0, 3.0, 0.0}, {10.0, 3.0, 0.0}},
        {{DelayCostFn::quadratic(10.0, 1.0), DelayCostFn::quadratic(10.0, 1.0)},
         {DelayCostFn::quadratic(1.0, 1.0), DelayCostFn::quadratic(1.0, 1.0)}});
}

/// First equilibrium: x^1 = (0, 1, 1), x^2 = (8, 1, 1).
inline FlowProfile two_threshold_first_ne() { return FlowProfile({{0.0, 1.0, 1.0}, {8.0, 1.0, 1.0}}); }

/// Second equilibrium: x^1 = (0, 2, 0) and player 2 balancing beta = alpha.
inline FlowProfile two_threshold_second_ne() {
    const double s = std::sqrt(10.0);
    return FlowProfile({{0.0, 2.0, 0.0}, {10.0 - 2.0 * s / 3.0, (-2.0 + s) / 3.0, (2.0 + s) / 3.0}});
}

/// Identical composed costs T_r(X) = mu_r X / unit + nu_r with deadline 8 for
/// both players and the demands and pollution rates of the reference study.
inline GameInstance reference_game(double flow_unit = 10.0) {
    return GameInstance({{100.0, 0.5, 8.0}, {150.0, 1.5, 8.0}}, {{0.3, 5.0}, {0.5, 6.0}}, flow_unit);
}

}  // namespace test_support
