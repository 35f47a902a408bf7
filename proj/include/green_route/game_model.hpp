#pragma once

// Green routing game: N operators split demand between ICEVs (pollution cost
// alpha per unit) and EVs on R parallel routes whose charging congestion makes
// late delivery costly. Player i pays
//
//     J^i(x) = alpha^i x_0^i + sum_r x_r^i c_r^i(X_r),   X_r = sum_i x_r^i,
//
// where c_r^i vanishes on the cost-free interval [0, chi_r^i] and is convex
// and strictly increasing beyond it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "green_route/errors.hpp"

namespace green_route {

/// Linear delivery duration T_r(X) = mu * X / flow_unit + nu, in hours.
struct RouteSpec {
    double mu = 0.0;
    double nu = 0.0;

    [[nodiscard]] bool has_duration() const { return mu > 0.0 && nu > 0.0; }
};

struct PlayerSpec {
    double demand = 0.0;  ///< D^i, commodity units
    double alpha = 0.0;   ///< marginal pollution cost per ICEV-delivered unit
    double tau = 0.0;     ///< delivery deadline (hours)
};

enum class CostFamily { quadratic, linear, composed };

[[nodiscard]] inline std::string to_string(CostFamily f) {
    switch (f) {
        case CostFamily::quadratic: return "quadratic";
        case CostFamily::linear: return "linear";
        case CostFamily::composed: return "composed";
    }
    return "unknown";
}

/// Threshold-convex per-unit delay cost c(X).
///
/// Every family is stored in the normal form c(X) = k * max(X - pivot, 0)^p
/// with p in {1, 2}; the cost-free threshold is chi = max(pivot, 0). For the
/// composed family, c(X) = max(T(X) - tau, 0)^2, so k = (mu/unit)^2 and
/// pivot = (tau - nu) / (mu/unit). A negative pivot (tau < nu) means every
/// delivery is late even at zero flow and chi clamps to 0.
class DelayCostFn {
public:
    /// c(X) = k (X - chi)^2 beyond chi.
    static DelayCostFn quadratic(double chi, double coefficient) {
        require_threshold(chi);
        require_coefficient(coefficient);
        return DelayCostFn(CostFamily::quadratic, 2, coefficient, chi);
    }

    /// c(X) = k (X - chi) beyond chi. Not C^1 at chi unless chi = 0.
    static DelayCostFn linear(double chi, double coefficient) {
        require_threshold(chi);
        require_coefficient(coefficient);
        return DelayCostFn(CostFamily::linear, 1, coefficient, chi);
    }

    /// c(X) = max(mu X / unit + nu - tau, 0)^2.
    static DelayCostFn composed(double mu, double nu, double tau, double flow_unit = 1.0) {
        if (!(mu > 0.0) || !(nu > 0.0) || !std::isfinite(mu) || !std::isfinite(nu)) {
            throw DomainError("composed delay cost needs mu > 0 and nu > 0");
        }
        if (!(tau >= 0.0) || !std::isfinite(tau)) {
            throw DomainError("composed delay cost needs a finite deadline tau >= 0");
        }
        if (!(flow_unit > 0.0) || !std::isfinite(flow_unit)) {
            throw DomainError("flow_unit must be positive");
        }
        const double slope = mu / flow_unit;
        return DelayCostFn(CostFamily::composed, 2, slope * slope, (tau - nu) / slope);
    }

    [[nodiscard]] CostFamily family() const { return family_; }
    [[nodiscard]] double coefficient() const { return coefficient_; }
    [[nodiscard]] double pivot() const { return pivot_; }
    [[nodiscard]] double threshold() const { return std::max(pivot_, 0.0); }

    [[nodiscard]] double value(double X) const {
        const double t = X - pivot_;
        if (t <= 0.0) return 0.0;
        return power_ == 2 ? coefficient_ * t * t : coefficient_ * t;
    }

    [[nodiscard]] double derivative(double X) const {
        const double t = X - pivot_;
        if (t <= 0.0) return 0.0;
        return power_ == 2 ? 2.0 * coefficient_ * t : coefficient_;
    }

    [[nodiscard]] double second_derivative(double X) const {
        const double t = X - pivot_;
        if (t <= 0.0 || power_ == 1) return 0.0;
        return 2.0 * coefficient_;
    }

    /// Equal as functions of X, regardless of which family produced them.
    friend bool operator==(const DelayCostFn& a, const DelayCostFn& b) {
        return a.power_ == b.power_ && a.coefficient_ == b.coefficient_ && a.pivot_ == b.pivot_;
    }

private:
    DelayCostFn(CostFamily family, int power, double coefficient, double pivot)
        : family_(family), power_(power), coefficient_(coefficient), pivot_(pivot) {}

    static void require_threshold(double chi) {
        if (!(chi >= 0.0) || !std::isfinite(chi)) throw DomainError("threshold chi must be finite and >= 0");
    }
    static void require_coefficient(double k) {
        if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("cost coefficient must be finite and > 0");
    }

    CostFamily family_;
    int power_;
    double coefficient_;
    double pivot_;
};

/// Explicit delay cost for one (player, route) cell, bypassing T_r.
struct CostOverride {
    std::size_t player = 0;
    std::size_t route = 0;
    DelayCostFn cost;
};

/// The game: players, routes and the N x R matrix of delay costs.
class GameInstance {
public:
    /// Cells without an override use the composed form from (route, player.tau).
    GameInstance(std::vector<PlayerSpec> players, std::vector<RouteSpec> routes, double flow_unit = 1.0,
                 std::vector<CostOverride> overrides = {})
        : players_(std::move(players)), routes_(std::move(routes)), flow_unit_(flow_unit) {
        if (players_.empty()) throw StructuralError("a game needs at least one player");
        if (routes_.empty()) throw StructuralError("a game needs at least one route");
        if (!(flow_unit_ > 0.0) || !std::isfinite(flow_unit_)) throw DomainError("flow_unit must be positive");
        for (std::size_t i = 0; i < players_.size(); ++i) {
            const auto& p = players_[i];
            const auto where = "player " + std::to_string(i);
            if (!(p.demand >= 0.0) || !std::isfinite(p.demand)) throw DomainError(where + ": demand must be >= 0");
            if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw DomainError(where + ": alpha must be >= 0");
            if (!(p.tau >= 0.0) || !std::isfinite(p.tau)) throw DomainError(where + ": tau must be >= 0");
        }
        overrides_.assign(players_.size() * routes_.size(), std::nullopt);
        for (auto& o : overrides) {
            if (o.player >= players_.size() || o.route >= routes_.size()) {
                throw StructuralError("delay cost override addresses a missing (player, route) cell");
            }
            overrides_[o.player * routes_.size() + o.route] = o.cost;
        }
        rebuild_costs();
    }

    /// Game defined entirely by an explicit cost matrix costs[i][r].
    static GameInstance from_costs(std::vector<PlayerSpec> players,
                                   const std::vector<std::vector<DelayCostFn>>& costs) {
        if (costs.size() != players.size() || costs.empty()) {
            throw StructuralError("cost matrix needs one row per player");
        }
        const std::size_t R = costs.front().size();
        std::vector<CostOverride> cells;
        for (std::size_t i = 0; i < costs.size(); ++i) {
            if (costs[i].size() != R) throw StructuralError("cost matrix rows differ in length");
            for (std::size_t r = 0; r < R; ++r) cells.push_back({i, r, costs[i][r]});
        }
        return GameInstance(std::move(players), std::vector<RouteSpec>(R), 1.0, std::move(cells));
    }

    [[nodiscard]] std::size_t num_players() const { return players_.size(); }
    [[nodiscard]] std::size_t num_routes() const { return routes_.size(); }
    [[nodiscard]] const PlayerSpec& player(std::size_t i) const { return players_.at(i); }
    [[nodiscard]] const RouteSpec& route(std::size_t r) const { return routes_.at(r); }
    [[nodiscard]] const std::vector<PlayerSpec>& players() const { return players_; }
    [[nodiscard]] const std::vector<RouteSpec>& routes() const { return routes_; }
    [[nodiscard]] double flow_unit() const { return flow_unit_; }

    [[nodiscard]] const DelayCostFn& cost(std::size_t i, std::size_t r) const {
        return costs_[i * routes_.size() + r];
    }
    [[nodiscard]] bool is_overridden(std::size_t i, std::size_t r) const {
        return overrides_[i * routes_.size() + r].has_value();
    }

    /// Every route's delay cost is the same function for all players.
    [[nodiscard]] bool identical_costs() const {
        for (std::size_t r = 0; r < num_routes(); ++r) {
            for (std::size_t i = 1; i < num_players(); ++i) {
                if (!(cost(i, r) == cost(0, r))) return false;
            }
        }
        return true;
    }

    [[nodiscard]] double total_demand() const {
        double total = 0.0;
        for (const auto& p : players_) total += p.demand;
        return total;
    }

    [[nodiscard]] GameInstance with_alpha_scale(double scale) const {
        if (!(scale >= 0.0) || !std::isfinite(scale)) throw DomainError("alpha scale must be >= 0");
        GameInstance copy = *this;
        for (auto& p : copy.players_) p.alpha *= scale;
        return copy;
    }

    /// Prolongs one player's deadline: tau^i <- tau^i + delta.
    [[nodiscard]] GameInstance with_deadline_shift(std::size_t i, double delta) const {
        if (i >= num_players()) throw StructuralError("deadline shift addresses a missing player");
        GameInstance copy = *this;
        copy.players_[i].tau += delta;
        if (!(copy.players_[i].tau >= 0.0)) throw DomainError("shifted deadline must stay >= 0");
        copy.rebuild_costs();
        return copy;
    }

private:
    void rebuild_costs() {
        costs_.clear();
        costs_.reserve(overrides_.size());
        for (std::size_t i = 0; i < players_.size(); ++i) {
            for (std::size_t r = 0; r < routes_.size(); ++r) {
                const auto& o = overrides_[i * routes_.size() + r];
                if (o) {
                    costs_.push_back(*o);
                    continue;
                }
                if (!routes_[r].has_duration()) {
                    throw DomainError("route " + std::to_string(r) +
                                      " has no mu/nu and player " + std::to_string(i) + " has no override");
                }
                costs_.push_back(DelayCostFn::composed(routes_[r].mu, routes_[r].nu, players_[i].tau, flow_unit_));
            }
        }
    }

    std::vector<PlayerSpec> players_;
    std::vector<RouteSpec> routes_;
    double flow_unit_ = 1.0;
    std::vector<std::optional<DelayCostFn>> overrides_;
    std::vector<DelayCostFn> costs_;
};

/// Joint strategy x = (x^1, ..., x^N); row i is (x_0^i, x_1^i, ..., x_R^i)
/// with component 0 the ICEV share and component r+1 the EV flow on route r.
class FlowProfile {
public:
    FlowProfile() = default;

    FlowProfile(std::size_t players, std::size_t routes, double fill = 0.0)
        : players_(players), routes_(routes), data_(players * (routes + 1), fill) {}

    explicit FlowProfile(const std::vector<std::vector<double>>& rows) {
        if (rows.empty() || rows.front().size() < 2) {
            throw StructuralError("a flow profile needs >= 1 player and >= 1 route");
        }
        players_ = rows.size();
        routes_ = rows.front().size() - 1;
        data_.reserve(players_ * (routes_ + 1));
        for (const auto& row : rows) {
            if (row.size() != routes_ + 1) throw StructuralError("flow profile rows differ in length");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    [[nodiscard]] std::size_t num_players() const { return players_; }
    [[nodiscard]] std::size_t num_routes() const { return routes_; }
    [[nodiscard]] std::size_t components() const { return routes_ + 1; }

    double& operator()(std::size_t i, std::size_t k) { return data_[i * (routes_ + 1) + k]; }
    double operator()(std::size_t i, std::size_t k) const { return data_[i * (routes_ + 1) + k]; }

    [[nodiscard]] double icev(std::size_t i) const { return (*this)(i, 0); }
    [[nodiscard]] double route(std::size_t i, std::size_t r) const { return (*this)(i, r + 1); }

    [[nodiscard]] std::span<const double> player(std::size_t i) const {
        return {data_.data() + i * (routes_ + 1), routes_ + 1};
    }
    std::span<double> player(std::size_t i) { return {data_.data() + i * (routes_ + 1), routes_ + 1}; }

    [[nodiscard]] std::span<const double> flat() const { return data_; }
    std::span<double> flat() { return data_; }

    [[nodiscard]] std::vector<std::vector<double>> rows() const {
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < players_; ++i) {
            auto p = player(i);
            out.emplace_back(p.begin(), p.end());
        }
        return out;
    }

    friend bool operator==(const FlowProfile&, const FlowProfile&) = default;

private:
    std::size_t players_ = 0;
    std::size_t routes_ = 0;
    std::vector<double> data_;
};

/// Euclidean distance over all N(R+1) components.
[[nodiscard]] inline double distance(const FlowProfile& a, const FlowProfile& b) {
    if (a.num_players() != b.num_players() || a.num_routes() != b.num_routes()) {
        throw StructuralError("profiles have different shapes");
    }
    double sum = 0.0;
    auto fa = a.flat();
    auto fb = b.flat();
    for (std::size_t k = 0; k < fa.size(); ++k) sum += (fa[k] - fb[k]) * (fa[k] - fb[k]);
    return std::sqrt(sum);
}

inline void check_dimensions(const GameInstance& game, const FlowProfile& x) {
    if (x.num_players() != game.num_players() || x.num_routes() != game.num_routes()) {
        throw StructuralError("flow profile is " + std::to_string(x.num_players()) + "x" +
                              std::to_string(x.num_routes()) + " but the game has " +
                              std::to_string(game.num_players()) + " players and " +
                              std::to_string(game.num_routes()) + " routes");
    }
}

/// Largest relative violation of nonnegativity or demand conservation,
/// each scaled by max(1, D^i).
[[nodiscard]] inline double feasibility_violation(const GameInstance& game, const FlowProfile& x) {
    check_dimensions(game, x);
    double worst = 0.0;
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        const double scale = std::max(1.0, game.player(i).demand);
        double sum = 0.0;
        for (double v : x.player(i)) {
            if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, -v / scale);
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - game.player(i).demand) / scale);
    }
    return worst;
}

[[nodiscard]] inline bool is_feasible(const GameInstance& game, const FlowProfile& x, double tolerance = 1e-9) {
    return feasibility_violation(game, x) <= tolerance;
}

/// x_k^i = D^i / (R+1) for every component.
[[nodiscard]] inline FlowProfile uniform_profile(const GameInstance& game) {
    FlowProfile x(game.num_players(), game.num_routes());
    for (std::size_t i = 0; i < game.num_players(); ++i) {
        const double share = game.player(i).demand / static_cast<double>(game.num_routes() + 1);
        for (double& v : x.player(i)) v = share;
    }
    return x;
}

/// X_r = sum_i x_r^i.
[[nodiscard]] inline std::vector<double> aggregate_flows(const FlowProfile& x) {
    std::vector<double> X(x.num_routes(), 0.0);
    for (std::size_t i = 0; i < x.num_players(); ++i) {
        for (std::size_t r = 0; r < x.num_routes(); ++r) X[r] += x.route(i, r);
    }
    return X;
}

[[nodiscard]] inline std::vector<double> aggregate_flows(const GameInstance& game, const FlowProfile& x) {
    check_dimensions(game, x);
    return aggregate_flows(x);
}

namespace detail {

inline void check_player(const GameInstance& game, std::size_t i) {
    if (i >= game.num_players()) throw StructuralError("player index " + std::to_string(i) + " out of range");
}

inline void check_route(const GameInstance& game, std::size_t r) {
    if (r >= game.num_routes()) throw StructuralError("route index " + std::to_string(r) + " out of range");
}

inline double player_cost(const GameInstance& game, const FlowProfile& x, std::span<const double> X,
                          std::size_t i) {
    double cost = game.player(i).alpha * x.icev(i);
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        const double flow = x.route(i, r);
        if (flow != 0.0) cost += flow * game.cost(i, r).value(X[r]);
    }
    return cost;
}

inline double marginal_route_cost(const GameInstance& game, double own_flow, double aggregate, std::size_t i,
                                  std::size_t r) {
    const auto& c = game.cost(i, r);
    return c.value(aggregate) + own_flow * c.derivative(aggregate);
}

/// Writes grad_i J^i into out (length R+1).
inline void player_gradient(const GameInstance& game, const FlowProfile& x, std::span<const double> X,
                            std::size_t i, std::span<double> out) {
    out[0] = game.player(i).alpha;
    for (std::size_t r = 0; r < game.num_routes(); ++r) {
        out[r + 1] = marginal_route_cost(game, x.route(i, r), X[r], i, r);
    }
}

}  // namespace detail

/// J^i(x) = alpha^i x_0^i + sum_r x_r^i c_r^i(X_r).
[[nodiscard]] inline double player_cost(const GameInstance& game, const FlowProfile& x, std::size_t i) {
    check_dimensions(game, x);
    detail::check_player(game, i);
    const auto X = aggregate_flows(x);
    return detail::player_cost(game, x, X, i);
}

[[nodiscard]] inline std::vector<double> player_costs(const GameInstance& game, const FlowProfile& x) {
    check_dimensions(game, x);
    const auto X = aggregate_flows(x);
    std::vector<double> costs(game.num_players());
    for (std::size_t i = 0; i < game.num_players(); ++i) costs[i] = detail::player_cost(game, x, X, i);
    return costs;
}

/// beta_r^i = c_r^i(X_r) + x_r^i c_r^i'(X_r), the price of one more EV unit on r.
[[nodiscard]] inline double marginal_route_cost(const GameInstance& game, const FlowProfile& x, std::size_t i,
                                                std::size_t r) {
    check_dimensions(game, x);
    detail::check_player(game, i);
    detail::check_route(game, r);
    double X = 0.0;
    for (std::size_t j = 0; j < x.num_players(); ++j) X += x.route(j, r);
    return detail::marginal_route_cost(game, x.route(i, r), X, i, r);
}

/// (alpha^i, beta_1^i, ..., beta_R^i).
[[nodiscard]] inline std::vector<double> player_gradient(const GameInstance& game, const FlowProfile& x,
                                                         std::size_t i) {
    check_dimensions(game, x);
    detail::check_player(game, i);
    const auto X = aggregate_flows(x);
    std::vector<double> g(game.num_routes() + 1);
    detail::player_gradient(game, x, X, i, g);
    return g;
}

[[nodiscard]] inline double social_cost(const GameInstance& game, const FlowProfile& x) {
    double total = 0.0;
    for (double c : player_costs(game, x)) total += c;
    return total;
}

}  // namespace green_route
