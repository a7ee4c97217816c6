#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "iabsde/brownian.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/philox.hpp"

using namespace iabsde;

TEST(Philox, SameCellSameBits) {
    // Counter-based draws are pure functions of (seed, cell); access order or
    // repetition cannot change them.
    const double a = counter_normal(42, 7, 13, 0);
    const double b = counter_normal(42, 8, 13, 0);
    const double c = counter_normal(42, 7, 14, 0);
    const double d = counter_normal(42, 7, 13, 1);
    const double e = counter_normal(43, 7, 13, 0);
    EXPECT_EQ(a, counter_normal(42, 7, 13, 0));
    EXPECT_NE(a, b);
    EXPECT_NE(a, c);
    EXPECT_NE(a, d);
    EXPECT_NE(a, e);
    // Distinct streams over the same coordinates are distinct draws.
    EXPECT_NE(counter_normal(42, 7, 13, 0, 1), a);
}

TEST(Philox, NormalMomentsLookRight) {
    const std::size_t n = 200000;
    double sum = 0.0, sq = 0.0;
    std::size_t within_one = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = counter_normal(2024, i, 0, 0);
        sum += z;
        sq += z * z;
        if (std::abs(z) < 1.0) ++within_one;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(var, 1.0, 0.02);
    EXPECT_NEAR(static_cast<double>(within_one) / n, 0.6827, 0.01);
}

TEST(BrownianBundle, IncrementVarianceMatchesStepWidth) {
    const TimeGrid g = make_grid(1.0, 5.0, 100, 400);
    const BrownianBundle b = simulate_brownian(g, 100000, 1, 7);
    // Law-of-large-numbers check on a handful of steps: sample variance of
    // Normal(0, dt) increments within 5% of dt = 0.01, mean near zero.
    for (std::size_t step : {std::size_t{0}, std::size_t{41}, std::size_t{99}}) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < b.n_paths(); ++p) {
            const double dw = b.increment(p, step, 0);
            sum += dw;
            sq += dw * dw;
        }
        const double mean = sum / b.n_paths();
        const double var = sq / b.n_paths() - mean * mean;
        EXPECT_NEAR(var, 0.01, 0.0005) << "step " << step;
        EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(0.01 / b.n_paths())) << "step " << step;
    }
}

TEST(BrownianBundle, TailStepsUseTailWidth) {
    const TimeGrid g = make_grid(1.0, 3.0, 10, 5);  // dt = 0.1, dt_tail = 0.4
    const BrownianBundle b = simulate_brownian(g, 50000, 1, 99);
    double sq = 0.0;
    for (std::size_t p = 0; p < b.n_paths(); ++p) {
        const double dw = b.increment(p, 12, 0);  // step 12 lives on the tail
        sq += dw * dw;
    }
    EXPECT_NEAR(sq / b.n_paths(), 0.4, 0.02);
}

TEST(BrownianBundle, BitIdenticalAcrossInstances) {
    const TimeGrid g = make_grid(1.0, 5.0, 20, 20);
    const BrownianBundle b1 = simulate_brownian(g, 16, 2, 12345);
    const BrownianBundle b2 = simulate_brownian(g, 16, 2, 12345);
    for (std::size_t p = 0; p < 16; ++p)
        for (std::size_t s = 0; s < b1.n_steps_total(); ++s)
            for (std::size_t c = 0; c < 2; ++c)
                EXPECT_EQ(b1.increment(p, s, c), b2.increment(p, s, c));
    EXPECT_TRUE(b1.id() == b2.id());
    EXPECT_FALSE(b1.id() == simulate_brownian(g, 16, 2, 54321).id());
}

TEST(BrownianBundle, DenseRoundTripAndMaterialize) {
    const TimeGrid g = make_grid(1.0, 2.0, 4, 2);
    const BrownianBundle lazy = simulate_brownian(g, 3, 1, 5);
    auto inc = lazy.materialize(lazy.n_steps_total());
    const BrownianBundle dense = BrownianBundle::dense(g, 3, 1, 5, inc);
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t s = 0; s < lazy.n_steps_total(); ++s)
            EXPECT_EQ(dense.increment(p, s, 0), lazy.increment(p, s, 0));
    // Dense bundles are a different identity even with the same label seed.
    EXPECT_FALSE(dense.id() == lazy.id());

    try {
        BrownianBundle::dense(g, 3, 1, 5, std::vector<double>(7, 0.0));
        FAIL() << "expected RangeMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::RangeMismatch);
    }
}

TEST(BrownianBundle, RejectsOutOfRangeCells) {
    const TimeGrid g = make_grid(1.0, 2.0, 4, 2);
    const BrownianBundle b = simulate_brownian(g, 3, 1, 5);
    EXPECT_THROW(b.increment(3, 0, 0), Error);
    EXPECT_THROW(b.increment(0, 6, 0), Error);
    EXPECT_THROW(b.increment(0, 0, 1), Error);
    EXPECT_THROW(BrownianBundle::lazy(g, 0, 1, 1), Error);
}
