#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "green_route/equilibrium_analysis.hpp"
#include "green_route/solvers.hpp"
#include "support.hpp"

using namespace green_route;
using Catch::Matchers::WithinAbs;

namespace {

SolverConfig tight() {
    SolverConfig c;
    c.epsilon = 1e-12;
    return c;
}

FlowProfile reference_ne() {
    const auto game = test_support::reference_game();
    return sird(game, uniform_profile(game), tight()).final_profile;
}

}  // namespace

TEST_CASE("config validation", "[config]") {
    SolverConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = -1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.theta = 1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.step_exponent = 1.5;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = {};
    c.max_iterations = 0;
    CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("infeasible start is rejected", "[sird]") {
    const auto game = test_support::reference_game();
    auto x = uniform_profile(game);
    x(0, 0) += 1.0;
    CHECK_THROWS_AS(sird(game, x), DomainError);
    CHECK_THROWS_AS(itproxpt(game, x), DomainError);
}

TEST_CASE("sird converges to a KKT point on the reference instance", "[sird]") {
    const auto game = test_support::reference_game();
    SolverConfig config;
    const auto report = sird(game, uniform_profile(game), config);
    REQUIRE(report.converged());
    CHECK(report.final_step_norm < resolve_epsilon(game, config));
    CHECK(is_feasible(game, report.final_profile));
    const auto kkt = kkt_verify(game, report.final_profile, sird_kkt_tolerance(game, config, report));
    CHECK(kkt.is_ne);
}

TEST_CASE("sird started at an equilibrium stops after one step", "[sird]") {
    const auto game = test_support::reference_game();
    const auto ne = reference_ne();
    SolverConfig config;
    const auto report = sird(game, ne, config);
    CHECK(report.converged());
    CHECK(report.iterations == 1);
    CHECK(distance(report.final_profile, ne) < resolve_epsilon(game, config));
}

TEST_CASE("every iterate stays feasible", "[sird][property]") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const auto g = test_support::random_game(rng, 1 + rng() % 4, 1 + rng() % 4, trial % 2 == 0);
        auto x = test_support::random_profile(rng, g.game);
        SolverConfig one;
        one.max_iterations = 1;
        for (int k = 0; k < 40; ++k) {
            x = sird(g.game, x, one).final_profile;
            REQUIRE(is_feasible(g.game, x, 1e-12));
        }
        auto y = test_support::random_profile(rng, g.game);
        for (int k = 0; k < 40; ++k) {
            y = itproxpt(g.game, y, one).final_profile;
            REQUIRE(is_feasible(g.game, y, 1e-12));
        }
    }
}

TEST_CASE("single-player limit matches a dense grid search", "[sird][oracle]") {
    // One player, two routes, D = 1: grid over (x_1, x_2) with x_0 = 1 - x_1 - x_2.
    const auto game = GameInstance::from_costs(
        {{1.0, 0.8, 0.0}}, {{DelayCostFn::quadratic(0.2, 3.0), DelayCostFn::quadratic(0.1, 5.0)}});
    const auto report = sird(game, uniform_profile(game), tight());
    REQUIRE(report.converged());

    const int steps = 1000;  // grid step 1e-3 D
    double best = 1e300;
    double b1 = 0.0, b2 = 0.0;
    for (int a = 0; a <= steps; ++a) {
        for (int b = 0; a + b <= steps; ++b) {
            const double x1 = a / double(steps), x2 = b / double(steps);
            const double x0 = 1.0 - x1 - x2;
            const double c1 = x1 > 0.2 ? 3.0 * (x1 - 0.2) * (x1 - 0.2) : 0.0;
            const double c2 = x2 > 0.1 ? 5.0 * (x2 - 0.1) * (x2 - 0.1) : 0.0;
            const double J = 0.8 * x0 + x1 * c1 + x2 * c2;
            if (J < best) {
                best = J;
                b1 = x1;
                b2 = x2;
            }
        }
    }
    CHECK_THAT(report.final_profile(0, 1), WithinAbs(b1, 1e-3));
    CHECK_THAT(report.final_profile(0, 2), WithinAbs(b2, 1e-3));
    CHECK(player_cost(game, report.final_profile, 0) <= best + 1e-9);
}

TEST_CASE("itproxpt reaches the sird equilibrium more slowly", "[itproxpt]") {
    const auto game = test_support::reference_game();
    const auto fast = sird(game, uniform_profile(game), {});
    // Diminishing steps shrink the step norm long before the iterate settles,
    // so the baseline needs a much tighter stopping threshold.
    SolverConfig config;
    config.epsilon = 1e-9;
    const auto slow = itproxpt(game, uniform_profile(game), config);
    REQUIRE(fast.converged());
    REQUIRE(slow.converged());
    CHECK(distance(fast.final_profile, slow.final_profile) < 1e-3);
    CHECK(slow.iterations > fast.iterations);
}

TEST_CASE("itproxpt started at an equilibrium stays there", "[itproxpt]") {
    const auto game = test_support::reference_game();
    const auto ne = reference_ne();
    SolverConfig config;
    config.max_iterations = 200;
    const auto report = itproxpt(game, ne, config);
    CHECK(distance(report.final_profile, ne) < 1e-9);
}

TEST_CASE("itproxpt without damping or decay reproduces sird", "[itproxpt]") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        const auto g = test_support::random_game(rng, 2 + rng() % 3, 1 + rng() % 4, true);
        const auto start = test_support::random_profile(rng, g.game);
        SolverConfig config;
        config.gamma = 0.05;
        config.theta = 0.0;
        config.step_exponent = 0.0;
        config.max_iterations = 50;
        config.epsilon = 1e-300;
        const auto a = sird(g.game, start, config);
        const auto b = itproxpt(g.game, start, config);
        CHECK(a.iterations == 50);
        CHECK(a.final_profile == b.final_profile);
    }
}

TEST_CASE("sird is deterministic", "[sird]") {
    const auto game = test_support::reference_game().with_deadline_shift(0, 0.3);
    SolverConfig config;
    config.record_trace = true;
    const auto a = sird(game, uniform_profile(game), config);
    const auto b = sird(game, uniform_profile(game), config);
    CHECK(a.final_profile == b.final_profile);
    CHECK(a.iterations == b.iterations);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) CHECK(a.trace[k].social_cost == b.trace[k].social_cost);
}

TEST_CASE("sird updates players simultaneously", "[sird]") {
    // Relabelling the players permutes the iterates and changes nothing else.
    const auto game = test_support::reference_game().with_deadline_shift(0, 0.2);
    const GameInstance swapped({game.player(1), game.player(0)}, game.routes(), game.flow_unit());
    SolverConfig config;
    config.gamma = 0.1;
    config.max_iterations = 300;
    const auto start = uniform_profile(game);
    FlowProfile start_swapped({start.rows()[1], start.rows()[0]});
    const auto a = sird(game, start, config);
    const auto b = sird(swapped, start_swapped, config);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK_THAT(a.final_profile(0, k), WithinAbs(b.final_profile(1, k), 1e-10));
        CHECK_THAT(a.final_profile(1, k), WithinAbs(b.final_profile(0, k), 1e-10));
    }
}

TEST_CASE("trace records costs and reference distances", "[sird]") {
    const auto game = test_support::reference_game();
    SolverConfig config;
    config.record_trace = true;
    config.reference = reference_ne();
    config.max_iterations = 20;
    const auto report = sird(game, uniform_profile(game), config);
    REQUIRE(report.trace.size() == 20);
    for (std::size_t k = 0; k < report.trace.size(); ++k) {
        const auto& rec = report.trace[k];
        CHECK(rec.iteration == k + 1);
        REQUIRE(rec.player_costs.size() == 2);
        CHECK_THAT(rec.social_cost, WithinAbs(rec.player_costs[0] + rec.player_costs[1], 1e-12));
        CHECK(rec.distance_to_reference.has_value());
    }
    CHECK(report.stop_reason == StopReason::max_iterations);
}

TEST_CASE("divergence monitor fires on sustained growth", "[sird]") {
    detail::DivergenceMonitor monitor(5);
    bool fired = false;
    double step = 1.0;
    for (int k = 0; k < 20 && !fired; ++k) {
        fired = monitor.push(step);
        step *= 2.0;
    }
    CHECK(fired);
    detail::DivergenceMonitor calm(5);
    bool any = false;
    for (int k = 0; k < 50; ++k) any = any || calm.push(1.0 / (k + 1));
    CHECK_FALSE(any);
}

TEST_CASE("best response with free ICEVs", "[best_response]") {
    const auto game = GameInstance::from_costs({{4.0, 0.0, 0.0}, {2.0, 1.0, 0.0}},
                                               {{DelayCostFn::quadratic(0.0, 1.0)}, {DelayCostFn::quadratic(0.0, 1.0)}});
    const auto br = best_response(game, uniform_profile(game), 0);
    CHECK_THAT(br.strategy[0], WithinAbs(4.0, 1e-9));
    CHECK_THAT(br.cost, WithinAbs(0.0, 1e-12));
}

TEST_CASE("best response inside the cost-free interval is flagged non-unique", "[best_response]") {
    const auto game = test_support::two_threshold_game();
    const auto br = best_response(game, test_support::two_threshold_second_ne(), 0);
    CHECK(br.strategy[0] == 0.0);
    CHECK_THAT(br.cost, WithinAbs(0.0, 1e-12));
    CHECK(br.non_unique);
}

TEST_CASE("best response of the congested player balances both routes", "[best_response]") {
    const auto game = test_support::two_threshold_game();
    const auto br = best_response(game, test_support::two_threshold_second_ne(), 1);
    const double s = std::sqrt(10.0);
    CHECK_THAT(br.strategy[0], WithinAbs(10.0 - 2.0 * s / 3.0, 1e-7));
    CHECK_THAT(br.strategy[1], WithinAbs((-2.0 + s) / 3.0, 1e-7));
    CHECK_THAT(br.strategy[2], WithinAbs((2.0 + s) / 3.0, 1e-7));
    CHECK(br.kkt_residual <= 1e-7);
    CHECK_FALSE(br.non_unique);
}

TEST_CASE("best response that cannot converge reports its last iterate", "[best_response]") {
    const auto game = test_support::reference_game();
    SolverConfig config;
    config.max_iterations = 1;
    try {
        (void)best_response(game, uniform_profile(game), 1, config);
        FAIL("expected BestResponseError");
    } catch (const BestResponseError& e) {
        CHECK(e.best_iterate.size() == 3);
        CHECK(e.residual > 1e-7);
    }
}

TEST_CASE("social optimum with free pollution costs nothing", "[social]") {
    const auto game = test_support::reference_game().with_alpha_scale(0.0);
    const auto report = social_optimum(game, {}, 4);
    CHECK_THAT(report.best_cost, WithinAbs(0.0, 1e-9));
    CHECK_FALSE(report.minima_disagree);
}

TEST_CASE("social optimum of the reference instance keeps player 1 on ICEVs", "[social]") {
    const auto report = social_optimum(test_support::reference_game(), {}, 8);
    CHECK_THAT(report.best.final_profile(0, 0), WithinAbs(100.0, 1e-6));
    CHECK(report.minima.size() == 8);
    CHECK_FALSE(report.minima_disagree);
}

TEST_CASE("two-player single-route optimum matches a dense grid", "[social][oracle]") {
    const auto game = GameInstance::from_costs({{1.0, 0.6, 0.0}, {2.0, 1.4, 0.0}},
                                               {{DelayCostFn::quadratic(0.5, 2.0)}, {DelayCostFn::quadratic(0.8, 1.0)}});
    const auto report = social_optimum(game, tight(), 4);

    const int steps = 1000;
    double best = 1e300, b1 = 0.0, b2 = 0.0;
    for (int a = 0; a <= steps; ++a) {
        for (int b = 0; b <= steps; ++b) {
            const double y1 = 1.0 * a / steps, y2 = 2.0 * b / steps;
            const double X = y1 + y2;
            const double c1 = X > 0.5 ? 2.0 * (X - 0.5) * (X - 0.5) : 0.0;
            const double c2 = X > 0.8 ? (X - 0.8) * (X - 0.8) : 0.0;
            const double S = 0.6 * (1.0 - y1) + y1 * c1 + 1.4 * (2.0 - y2) + y2 * c2;
            if (S < best) {
                best = S;
                b1 = y1;
                b2 = y2;
            }
        }
    }
    CHECK_THAT(report.best.final_profile(0, 1), WithinAbs(b1, 2e-3));
    CHECK_THAT(report.best.final_profile(1, 1), WithinAbs(b2, 2e-3));
    CHECK(report.best_cost <= best + 1e-9);
}

TEST_CASE("default step stays below the certificate and the Jacobian bound", "[sird]") {
    const auto game = GameInstance::from_costs({{1.0, 5.0, 0.0}, {1.0, 5.0, 0.0}},
                                               {{DelayCostFn::linear(0.0, 1.0)}, {DelayCostFn::linear(0.0, 1.0)}});
    const auto step = default_step(game, {});
    CHECK(step.gamma > 0.0);
    CHECK(step.gamma <= 2.0);
    CHECK(step.gamma <= 1.0 / jacobian_norm_bound(game) + 1e-15);
}

TEST_CASE("default step stays stable where the certificate step overshoots", "[sird]") {
    const auto game = GameInstance::from_costs(
        {{4.0, 2.0, 0.0}, {6.0, 3.0, 0.0}, {3.0, 1.5, 0.0}},
        {{DelayCostFn::linear(0.0, 1.0), DelayCostFn::linear(0.0, 0.5)},
         {DelayCostFn::linear(0.0, 1.0), DelayCostFn::linear(0.0, 0.5)},
         {DelayCostFn::linear(0.0, 1.0), DelayCostFn::linear(0.0, 0.5)}});
    const auto bound = step_size_bound(game, 2000, 0);
    REQUIRE(bound.condition_holds);
    const auto report = sird(game, uniform_profile(game), {});
    CHECK(report.converged());
    CHECK(report.gamma <= bound.a);
    CHECK(kkt_verify(game, report.final_profile, sird_kkt_tolerance(game, {}, report)).is_ne);
}
