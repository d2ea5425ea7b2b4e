#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ssvf/optim.hpp"
#include "ssvf/verify.hpp"

namespace ssvf {
namespace {

EvSpec ev(std::size_t slots, double demand, double r = 6.6, double gamma = 0.01) {
    return {Vec(slots, r), demand, gamma};
}

TEST(Gradients, PrimalGradient) {
    EXPECT_EQ(primal_gradient(Vec{0, 0}, Vec{0, 0}, 0.0, 0.25), (Vec{0, 0}));
    EXPECT_EQ(primal_gradient(Vec{7, 9}, Vec{0, 0}, 0.0, 0.25), (Vec{7, 9}));
    EXPECT_EQ(primal_gradient(Vec{1, 1}, Vec{2, 3}, 2.0, 0.25), (Vec{3.5, 4.5}));
    EXPECT_THROW(primal_gradient(Vec{1}, Vec{1, 2}, 0.0, 0.25), InvalidInput);
}

TEST(Gradients, DualGradient) {
    const EvSpec spec = ev(2, 1.5);
    EXPECT_EQ(dual_gradient(Vec{0, 0}, spec, 0.25), -1.5);
    EXPECT_EQ(dual_gradient(Vec{3, 3}, spec, 0.25), 0.0);
    EXPECT_EQ(dual_gradient(Vec{4, 4}, spec, 0.25), 0.5);
}

TEST(Gradients, FiniteDifferencesAgree) {
    const auto c = check_gradients(25, 42);
    EXPECT_TRUE(c.passed) << c.detail;
}

TEST(Projection, ClampsToBox) {
    const EvSpec spec = ev(2, 0.0);
    EXPECT_EQ(project_box(Vec{1.0, 2.5}, spec), (Vec{1.0, 2.5}));
    EXPECT_EQ(project_box(Vec{-1.0, 7.0}, spec), (Vec{0.0, 6.6}));
    EXPECT_THROW(project_box(Vec{1.0}, spec), InvalidInput);
}

TEST(Steps, PrimalStep) {
    const EvSpec spec = ev(1, 0.0);
    const AgentState s{Vec{1.0}, 0.0};
    EXPECT_DOUBLE_EQ(primal_step(s, spec, Vec{0.0}, Vec{1.0}, 0.25)[0], 0.99);

    const EvSpec frozen = ev(1, 0.0, 6.6, 0.0);
    EXPECT_EQ(primal_step(s, frozen, Vec{5.0}, Vec{1.0}, 0.25)[0], 1.0);
    // Zero gradient: baseline cancels the aggregate.
    EXPECT_EQ(primal_step(s, spec, Vec{-1.0}, Vec{1.0}, 0.25)[0], 1.0);
}

TEST(Steps, DualStep) {
    EXPECT_EQ(dual_step({Vec{0.0, 0.0}, 0.0}, ev(2, 10.0), 1.0, 0.25), -10.0);
    EXPECT_EQ(dual_step({Vec{4.0, 4.0}, 1.0}, ev(2, 1.5), 1.0, 0.25), 1.5);
    EXPECT_EQ(dual_step({Vec{3.0, 3.0}, 2.0}, ev(2, 1.5), 1.0, 0.25), 2.0);
}

TEST(Steps, ConvergenceError) {
    const AgentState a{Vec{1.0, 1.0}, 1.0};
    EXPECT_EQ(convergence_error(a, a), 0.0);
    EXPECT_EQ(convergence_error(a, {Vec{4.0, 5.0}, 1.0}), 25.0);
    EXPECT_EQ(convergence_error(a, {Vec{2.0, 2.0}, 3.0}), 6.0);
}

TEST(Steps, LocalUpdateReadsPreStepState) {
    AgentState s{Vec{4.0, 4.0}, 1.0};
    const EvSpec spec = ev(2, 1.5);
    const double eps = local_update(s, spec, Vec{0.0, 0.0}, Vec{0.0, 0.0}, 0.25, 1.0);
    // Primal uses lambda = 1 (not 1.5): 4 - 0.01 * 0.25 = 3.9975.
    EXPECT_DOUBLE_EQ(s.x[0], 3.9975);
    EXPECT_DOUBLE_EQ(s.lambda, 1.5);
    EXPECT_DOUBLE_EQ(eps, 2 * 0.0025 * 0.0025 + 0.25);
}

TEST(Validation, RejectsInfeasibleSpecs) {
    const Horizon h{4, 0.25};
    EXPECT_THROW(ev(4, 6.7).validate(h), ConfigError);  // capacity 6.6 kWh
    EXPECT_THROW(ev(3, 1.0).validate(h), ConfigError);
    EXPECT_THROW(ev(4, 1.0, 6.6, 0.0).validate(h), ConfigError);
    EXPECT_NO_THROW(ev(4, 6.6).validate(h));
    EXPECT_THROW(Horizon({0, 0.25}).validate(), ConfigError);
}

Scenario single_ev(Vec baseline, double demand) {
    Scenario sc;
    sc.horizon = {baseline.size(), 0.25};
    sc.baseline = std::move(baseline);
    sc.fleet = {ev(sc.horizon.slots, demand)};
    sc.eps0 = 1e-20;
    sc.max_iter = 20000;
    return sc;
}

TEST(SolvePlaintext, ZeroDemandFleetStopsAfterOneIteration) {
    Scenario sc;
    sc.horizon = {6, 0.25};
    sc.baseline = Vec(6, 50.0);
    sc.fleet = {ev(6, 0.0), ev(6, 0.0), ev(6, 0.0)};
    const auto r = solve_plaintext(sc, AggregationMode::exact);
    EXPECT_EQ(r.iterations, 1U);
    for (const auto& a : r.agents) {
        EXPECT_EQ(a.x, Vec(6, 0.0));
        EXPECT_EQ(a.lambda, 0.0);
    }
    EXPECT_TRUE(r.stopped[0] && r.stopped[1] && r.stopped[2]);
}

TEST(SolvePlaintext, SingleEvFillsFlatBaselineEvenly) {
    const auto r = solve_plaintext(single_ev(Vec{30.0, 30.0}, 1.0), AggregationMode::exact);
    EXPECT_NEAR(r.agents[0].x[0], 2.0, 1e-9);
    EXPECT_NEAR(r.agents[0].x[1], 2.0, 1e-9);
}

TEST(SolvePlaintext, SingleEvChargesOnlyInTheTrough) {
    // Water level never reaches the higher slot: x = (0, d/dt).
    const auto r = solve_plaintext(single_ev(Vec{30.0, 20.0}, 1.0), AggregationMode::exact);
    EXPECT_NEAR(r.agents[0].x[0], 0.0, 1e-9);
    EXPECT_NEAR(r.agents[0].x[1], 4.0, 1e-9);
}

TEST(SolvePlaintext, QuantizedModeNeedsCodec) {
    EXPECT_THROW(solve_plaintext(single_ev(Vec{1.0}, 0.1), AggregationMode::quantized), ConfigError);
}

TEST(SolvePlaintext, HistoryAndTraceShapes) {
    auto sc = single_ev(Vec{30.0, 20.0, 25.0}, 1.0);
    sc.max_iter = 7;
    const auto r = solve_plaintext(sc, AggregationMode::exact);
    EXPECT_EQ(r.iterations, 7U);
    EXPECT_EQ(r.history.size(), 8U);
    EXPECT_EQ(r.aggregates.size(), 7U);
    EXPECT_EQ(r.trace.size(), 7U);
    EXPECT_EQ(r.objective.front(), valley_objective(sc.baseline, Vec(3, 0.0)));
}

TEST(QuantizedSum, FloorsEveryAddend) {
    const FixedPointCodec codec(3, FieldPrime(2147483647), 20, 6.6);
    const std::vector<AgentState> s{{Vec{0.0019}, 0}, {Vec{0.0019}, 0}};
    EXPECT_EQ(quantized_sum(s, 1, codec)[0], 0.002);
    EXPECT_DOUBLE_EQ(sum_profiles(s, 1)[0], 0.0038);
}

}  // namespace
}  // namespace ssvf
