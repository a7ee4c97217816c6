#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "iabsde/grid.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/philox.hpp"
#include "iabsde/terminal.hpp"

using namespace iabsde;

namespace {

TimeGrid unit_grid(std::size_t n = 100, std::size_t n_tail = 400) {
    return make_grid(1.0, 5.0, n, n_tail);
}

}  // namespace

TEST(TimeGrid, LayoutAndExactNodes) {
    const TimeGrid g = unit_grid();
    EXPECT_DOUBLE_EQ(g.dt(), 0.01);
    EXPECT_DOUBLE_EQ(g.dt_tail(), 0.01);
    EXPECT_EQ(g.n_nodes(), 501u);
    EXPECT_EQ(g.horizon_node(), 100u);
    EXPECT_EQ(g.last_node(), 500u);
    // Nodes on [0, T] are k * dt exactly, never an accumulated sum.
    for (std::size_t k = 0; k <= g.n_steps(); ++k)
        EXPECT_EQ(g.node_time(k), static_cast<double>(k) * g.dt());
    EXPECT_DOUBLE_EQ(g.node_time(g.horizon_node()), 1.0);
    EXPECT_DOUBLE_EQ(g.node_time(g.last_node()), 5.0);
}

TEST(TimeGrid, RejectsDegenerateWindows) {
    try {
        make_grid(0.0, 5.0, 10, 10);
        FAIL() << "expected NonPositiveHorizon";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonPositiveHorizon);
    }
    try {
        make_grid(1.0, 1.0, 10, 10);
        FAIL() << "expected TailBeforeHorizon";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TailBeforeHorizon);
    }
    try {
        make_grid(1.0, 5.0, 0, 10);
        FAIL() << "expected ZeroSteps";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroSteps);
    }
    EXPECT_THROW(unit_grid().node_time(501), Error);
}

TEST(ProcessPaths, DeterministicBroadcastSharesOneRow) {
    ProcessPaths p = ProcessPaths::constant(3.5, 64, 1, 0, 10);
    EXPECT_TRUE(p.deterministic_flag());
    p.set(0, 4, 0, -1.25);
    // Every logical path reads the single stored row.
    for (std::size_t path = 0; path < p.n_paths(); ++path) {
        EXPECT_EQ(p.at(path, 4), -1.25);
        EXPECT_EQ(p.at(path, 10), 3.5);
    }
}

TEST(ProcessPaths, RejectsDegenerateShapes) {
    try {
        ProcessPaths::zeros(0, 1, 0, 5);
        FAIL() << "expected DegenerateDimensions";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateDimensions);
    }
    EXPECT_THROW(ProcessPaths::zeros(1, 0, 0, 5), Error);
    ProcessPaths p = ProcessPaths::zeros(2, 1, 3, 8);
    EXPECT_THROW(p.at_checked(0, 2), Error);
    EXPECT_THROW(p.at_checked(0, 9), Error);
    EXPECT_THROW(p.at_checked(2, 5), Error);
}

TEST(Norms, WeightedL2ConstantMatchesClosedForm) {
    const TimeGrid g = unit_grid();
    const ProcessPaths ones = ProcessPaths::constant(1.0, 3, 1, 0, g.last_node());

    // beta = 0: integral of 1 over [0, 1] is exactly representable by the
    // trapezoid rule.
    auto v0 = weighted_l2(ones, g, 0.0, 0, g.horizon_node());
    for (double v : v0) EXPECT_NEAR(v, 1.0, 1e-12);

    // beta = 2: integral of e^{2s} over [0, 1] = (e^2 - 1) / 2, trapezoid
    // error O(dt^2).
    const double expected = std::expm1(2.0) / 2.0;
    auto v2 = weighted_l2(ones, g, 2.0, 0, g.horizon_node());
    for (double v : v2) EXPECT_NEAR(v, expected, 1e-3);
}

TEST(Norms, WeightedL2AdditiveAndMonotone) {
    const TimeGrid g = unit_grid();
    ProcessPaths p = ProcessPaths::zeros(5, 1, 0, g.last_node());
    for (std::size_t path = 0; path < p.n_paths(); ++path)
        for (std::size_t k = 0; k <= g.last_node(); ++k)
            p.set(path, k, 0, counter_uniform(11, path, k, 0) - 0.5);

    const std::size_t mid = 137;
    auto left = weighted_l2(p, g, 1.5, 0, mid);
    auto right = weighted_l2(p, g, 1.5, mid, g.last_node());
    auto whole = weighted_l2(p, g, 1.5, 0, g.last_node());
    for (std::size_t path = 0; path < p.n_paths(); ++path) {
        EXPECT_NEAR(left[path] + right[path], whole[path], 1e-13 * std::max(1.0, whole[path]));
        EXPECT_GE(whole[path], left[path]);  // nonnegativity of the remainder
    }
}

TEST(Norms, SupNormPicksLeftEndOfDecreasingPath) {
    const TimeGrid g = unit_grid();
    const ProcessPaths p = ProcessPaths::from_time_function(
        [](double t) { return std::exp(-t); }, g, 1, 1, 0, g.horizon_node());

    // From t = 0.5 with tail bound e^{-1}: the max sits at the left end and
    // equals e^{-0.5} with zero discretization error (0.5 is a node).
    auto v = discrete_sup_norm(p, 50, std::exp(-1.0));
    EXPECT_EQ(v[0], std::exp(-0.5));

    // Monotone nonincreasing in from_node.
    double prev = discrete_sup_norm(p, 0, 0.0)[0];
    for (std::size_t k = 10; k <= 100; k += 10) {
        const double cur = discrete_sup_norm(p, k, 0.0)[0];
        EXPECT_LE(cur, prev + 1e-15);
        prev = cur;
    }
}

TEST(Norms, ErrorsOnBadRanges) {
    const TimeGrid g = unit_grid();
    const ProcessPaths p = ProcessPaths::constant(1.0, 2, 1, 100, 500);
    try {
        weighted_l2(p, g, 0.0, 0, 200);  // start not covered
        FAIL() << "expected NodeOutOfRange";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NodeOutOfRange);
    }
    try {
        weighted_l2(p, g, 0.0, 300, 200);
        FAIL() << "expected RangeMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RangeMismatch);
    }
    EXPECT_THROW(discrete_sup_norm(p, 50, 0.0), Error);
}

TEST(TerminalData, ComputesTailSummaries) {
    const TimeGrid g = unit_grid();
    const std::size_t h = g.horizon_node(), e = g.last_node();
    const ProcessPaths xi = ProcessPaths::from_time_function(
        [](double t) { return std::exp(-t); }, g, 4, 1, h, e);
    const ProcessPaths eta = ProcessPaths::constant(0.5, 4, 1, h, e);

    const TerminalData td(xi, eta, g, 0.0);
    EXPECT_TRUE(td.deterministic_flag());
    // sup over [1, 5] of e^{-t} is at the left end.
    EXPECT_DOUBLE_EQ(td.tail_sup_xi()[0], std::exp(-1.0));
    // integral of 0.25 over [1, 5] = 1, exact for the trapezoid rule.
    EXPECT_NEAR(td.tail_weighted_eta()[0], 1.0, 1e-12);
}

TEST(TerminalData, FlagsJumpDiscontinuity) {
    const TimeGrid g = unit_grid();
    const std::size_t h = g.horizon_node(), e = g.last_node();
    ProcessPaths xi = ProcessPaths::constant(1.0, 1, 1, h, e);
    xi.set(0, h + 200, 0, 25.0);  // an isolated spike two orders above the budget
    const ProcessPaths eta = ProcessPaths::constant(0.0, 1, 1, h, e);
    try {
        TerminalData td(xi, eta, g, 0.0);
        FAIL() << "expected DiscontinuousTerminal";
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::DiscontinuousTerminal);
    }
    // A generous explicit budget admits the same data.
    EXPECT_NO_THROW(TerminalData(xi, eta, g, 0.0, 100.0));
}

TEST(TerminalData, RejectsWrongCoverage) {
    const TimeGrid g = unit_grid();
    const ProcessPaths bad = ProcessPaths::constant(1.0, 1, 1, 0, g.last_node());
    const ProcessPaths eta = ProcessPaths::constant(0.0, 1, 1, g.horizon_node(), g.last_node());
    try {
        TerminalData td(bad, eta, g, 0.0);
        FAIL() << "expected RangeMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RangeMismatch);
    }
}
