#include "iabsde/generator.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "iabsde/brownian.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/kernels.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/projection.hpp"

namespace {

using namespace iabsde;

TimeGrid test_grid() { return make_grid(1.0, 5.0, 100, 400); }

struct EvalHarness {
    TimeGrid grid = test_grid();
    BrownianBundle bundle = BrownianBundle::lazy(grid, 4, 1, 99);
    CondExpEngine engine{bundle, {CondExpMode::deterministic_passthrough, 0}};

    ProcessPaths det_from(const std::function<double(double)>& fn, std::size_t dim = 1) const {
        return ProcessPaths::from_time_function(fn, grid, 4, dim, 0, grid.last_node());
    }
    ProcessPaths det_random(std::uint64_t salt, std::size_t dim = 1) const {
        ProcessPaths p = ProcessPaths::deterministic(4, dim, 0, grid.last_node());
        for (std::size_t k = 0; k <= grid.last_node(); ++k)
            for (std::size_t c = 0; c < dim; ++c)
                p.set(0, k, c, 2.0 * counter_uniform(salt, 0, k, c) - 1.0);
        return p;
    }
};

GeneratorSpec exp_linear(const TimeGrid& grid) {
    LinearModel m;
    m.mu = TimeKernel::exponential(1.0, 1.0);
    m.C_mu = 1.0;
    return GeneratorSpec::linear(std::move(m), grid);
}

TEST(Generators, ZeroInputsGiveExactZero) {
    EvalHarness h;
    const auto spec = exp_linear(h.grid);
    const auto y = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    const auto out = eval_generator(spec, 10, y, z, h.grid, h.engine);
    for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(Generators, ExponentialKernelAgainstClosedForm) {
    EvalHarness h;
    const auto spec = exp_linear(h.grid);
    EXPECT_EQ(spec.L(), 1.0);
    EXPECT_EQ(spec.beta(), 76.0);
    EXPECT_EQ(spec.z_dependence(), ZDependence::none);
    EXPECT_TRUE(spec.depends_on_solution());

    const auto y = ProcessPaths::constant(1.0, 4, 1, 0, h.grid.last_node());
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    for (double s : {0.0, 0.25, 1.0}) {
        const std::size_t node = static_cast<std::size_t>(std::llround(s / h.grid.dt()));
        const auto out = eval_generator(spec, std::min(node, h.grid.horizon_node()), y, z, h.grid,
                                        h.engine);
        // integral of e^{-r} over [s, 5] = e^{-s} - e^{-5}; trapezoid error
        // is second order in the step.
        EXPECT_NEAR(out[0], std::exp(-s) - std::exp(-5.0), 1e-4) << "at s=" << s;
        for (double v : out) EXPECT_EQ(v, out[0]);
    }
}

TEST(Generators, ConstantKernelQuadratureIsExact) {
    EvalHarness h;
    LinearModel m;
    m.mu = TimeKernel::constant(1.0);
    m.C_mu = 5.0;
    const auto spec = GeneratorSpec::linear(std::move(m), h.grid);
    const auto y = ProcessPaths::constant(1.0, 4, 1, 0, h.grid.last_node());
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    const auto out = eval_generator(spec, 0, y, z, h.grid, h.engine);
    // Trapezoid of a constant is exact up to summation rounding across 500 steps.
    EXPECT_NEAR(out[0], 5.0, 1e-12);
}

TEST(Generators, AffineInArgumentsWithDriverOffset) {
    EvalHarness h;
    LinearModel m;
    m.mu = TimeKernel::exponential(0.8, 1.5);
    m.nu = {TimeKernel::exponential(0.5, 2.0)};
    m.C_mu = 0.8 / 1.5;
    m.C_nu = 0.0626;  // analytic mass 0.0625 plus trapezoid-overshoot headroom
    m.driver = TimeKernel::constant(0.3);
    const auto spec = GeneratorSpec::linear(std::move(m), h.grid);
    EXPECT_EQ(spec.z_dependence(), ZDependence::future_path);

    const auto y1 = h.det_random(1), y2 = h.det_random(2);
    const auto z1 = h.det_random(3), z2 = h.det_random(4);
    const double a = 0.7, b = -1.3;
    ProcessPaths yc = ProcessPaths::deterministic(4, 1, 0, h.grid.last_node());
    ProcessPaths zc = ProcessPaths::deterministic(4, 1, 0, h.grid.last_node());
    for (std::size_t k = 0; k <= h.grid.last_node(); ++k) {
        yc.set(0, k, a * y1.at(0, k) + b * y2.at(0, k));
        zc.set(0, k, a * z1.at(0, k) + b * z2.at(0, k));
    }

    const std::size_t node = 13;
    const double l = 0.3;
    const auto f1 = eval_generator(spec, node, y1, z1, h.grid, h.engine);
    const auto f2 = eval_generator(spec, node, y2, z2, h.grid, h.engine);
    const auto fc = eval_generator(spec, node, yc, zc, h.grid, h.engine);
    EXPECT_NEAR(fc[0] - l, a * (f1[0] - l) + b * (f2[0] - l), 1e-12);
}

TEST(Generators, KernelMassAuditRejectsUnderdeclaredBounds) {
    const auto grid = test_grid();
    LinearModel m;
    m.mu = TimeKernel::exponential(1.0, 1.0);
    m.C_mu = 0.9;  // true mass over [0,5] is 1 - e^{-5} > 0.99
    EXPECT_THROW(
        {
            try {
                GeneratorSpec::linear(std::move(m), grid);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::KernelBoundExceeded);
                throw;
            }
        },
        Error);

    LinearModel bad_nu;
    bad_nu.mu = TimeKernel::zero();
    bad_nu.nu = {TimeKernel::constant(1.0)};
    bad_nu.C_mu = 0.0;
    bad_nu.C_nu = 1.0;  // integral of 1 over [0,5] is 5
    EXPECT_THROW(GeneratorSpec::linear(std::move(bad_nu), grid), Error);

    // A kernel blowing up at a node surfaces as an evaluation failure.
    LinearModel sing;
    sing.mu = TimeKernel::custom([](double r) { return 1.0 / r; }, "1/r");
    sing.C_mu = 100.0;
    EXPECT_THROW(
        {
            try {
                GeneratorSpec::linear(std::move(sing), grid);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::KernelEvaluationFailure);
                throw;
            }
        },
        Error);
}

TEST(Generators, SupNormOfDecreasingPathIsLeftEndpoint) {
    EvalHarness h;
    SupNormModel m;
    m.phi = [](double v) { return v; };
    m.L_phi = 1.0;
    const auto spec = GeneratorSpec::sup_norm(std::move(m), h.grid);
    EXPECT_FALSE(spec.m());

    const auto y = h.det_from([](double t) { return std::exp(-t); });
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    for (std::size_t node : {0ul, 25ul, 100ul}) {
        const auto out = eval_generator(spec, node, y, z, h.grid, h.engine);
        EXPECT_DOUBLE_EQ(out[0], std::exp(-h.grid.node_time(node)));
    }
}

TEST(Generators, SupNormConstructionGuards) {
    const auto grid = test_grid();
    SupNormModel no_zero;
    no_zero.phi = [](double v) { return v + 1.0; };  // phi(0) != 0
    no_zero.L_phi = 1.0;
    EXPECT_THROW(GeneratorSpec::sup_norm(std::move(no_zero), grid), Error);

    SupNormModel bad_tau;
    bad_tau.indicator = true;
    bad_tau.scale = 1.0;
    bad_tau.tau = 1.5;  // past the horizon
    EXPECT_THROW(GeneratorSpec::sup_norm(std::move(bad_tau), grid), Error);
}

TEST(Generators, IndicatorReadsSnappedNodeAndVanishesAfter) {
    EvalHarness h;
    SupNormModel m;
    m.indicator = true;
    m.scale = 2.0;
    m.tau = 0.503;  // snaps to the 0.50 node
    const auto spec = GeneratorSpec::sup_norm(std::move(m), h.grid);
    EXPECT_NEAR(spec.sup_model().tau, 0.5, 1e-12);

    const auto y = h.det_from([](double t) { return std::exp(-t); });
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    const auto before = eval_generator(spec, 25, y, z, h.grid, h.engine);
    EXPECT_DOUBLE_EQ(before[0], 2.0 * std::exp(-0.5));
    const auto after = eval_generator(spec, 75, y, z, h.grid, h.engine);
    EXPECT_EQ(after[0], 0.0);
}

TEST(Generators, CustomIntegrandMatchesLinearBitwise) {
    // The same arithmetic through the custom escape hatch must reproduce the
    // structured family exactly: identical per-node products, identical
    // suffix accumulation order.
    EvalHarness h;
    const auto lin = exp_linear(h.grid);
    CustomModel cm;
    cm.integrand = [](double r, double y, std::span<const double>) { return std::exp(-r) * y; };
    const auto cus = GeneratorSpec::custom(std::move(cm), 1.0, ZDependence::none, 0);

    const auto y = h.det_random(7);
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    for (std::size_t node : {0ul, 42ul, 99ul}) {
        const auto a = eval_generator(lin, node, y, z, h.grid, h.engine);
        const auto b = eval_generator(cus, node, y, z, h.grid, h.engine);
        EXPECT_EQ(a[0], b[0]) << "node " << node;
    }
}

TEST(Generators, FixedControlSingletonGridAgreesBitwise) {
    // One candidate control: the esssup family must degrade to the fixed
    // family's arithmetic exactly, instantaneous part included.
    EvalHarness h;
    const auto mu = [](double s, double u) { return u * std::exp(-s); };
    const auto sg = [](double, double u) { return 0.1 * u; };
    const auto l = [](double, double u) { return 0.2 * u; };
    const auto env = [](double s) { return std::exp(-s); };

    ControlFixedModel fm;
    fm.mu = mu;
    fm.sigma = {sg};
    fm.l = l;
    fm.h_envelope = env;
    fm.u = std::make_shared<ProcessPaths>(
        ProcessPaths::constant(0.7, 4, 1, 0, h.grid.last_node()));
    fm.C = 1.0;
    const auto fixed = GeneratorSpec::control_fixed(std::move(fm), 2.0);
    EXPECT_EQ(fixed.z_dependence(), ZDependence::current);

    ControlEsssupModel em;
    em.mu = mu;
    em.sigma = {sg};
    em.l = l;
    em.h_envelope = env;
    em.u_grid = {0.7};
    em.C = 1.0;
    const auto ess = GeneratorSpec::control_esssup(std::move(em), 2.0);

    const auto y = h.det_random(11);
    const auto z = h.det_random(12);
    for (std::size_t node : {0ul, 31ul, 100ul}) {
        const auto a = eval_generator(fixed, node, y, z, h.grid, h.engine);
        const auto b = eval_generator(ess, node, y, z, h.grid, h.engine);
        EXPECT_EQ(a[0], b[0]) << "node " << node;
    }
}

TEST(Generators, EsssupPicksTheLargerInstantaneousBranch) {
    EvalHarness h;
    ControlEsssupModel em;
    em.mu = [](double, double) { return 0.0; };
    em.sigma = {[](double, double u) { return u > 0.5 ? 0.1 : -0.1; }};
    em.l = [](double, double) { return 0.0; };
    em.h_envelope = [](double) { return 0.0; };
    em.u_grid = {0.0, 1.0};
    em.C = 1.0;
    const auto spec = GeneratorSpec::control_esssup(std::move(em), 1.0);

    const auto y = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());
    const auto z = ProcessPaths::constant(1.0, 4, 1, 0, h.grid.last_node());
    const auto out = eval_generator(spec, 40, y, z, h.grid, h.engine);
    EXPECT_DOUBLE_EQ(out[0], 0.1);

    EXPECT_THROW(GeneratorSpec::control_esssup(ControlEsssupModel{}, 1.0), Error);
}

TEST(Generators, SweepReproducesOneShotEvaluationBitwise) {
    // The backward sweep and eval_generator share their accumulation order,
    // so against identical frozen inputs every node agrees bit for bit.
    EvalHarness h;
    LinearModel m;
    m.mu = TimeKernel::exponential(1.0, 2.0);
    m.nu = {TimeKernel::exponential(1.0, 2.0)};
    m.C_mu = 0.5;
    m.C_nu = 0.2501;  // headroom over the convex-kernel quadrature overshoot
    m.driver = TimeKernel::constant(0.1);
    const auto spec = GeneratorSpec::linear(std::move(m), h.grid);

    const auto y = h.det_random(21);
    const auto z = h.det_random(22);
    const auto tail = make_generator_tail(spec, h.grid, y, &z);
    GeneratorSweep sweep(spec, h.grid, y, &z, tail);
    ASSERT_EQ(sweep.rows(), 1u);

    std::vector<double> a(1), meas(1);
    for (std::size_t k = h.grid.horizon_node(); k-- > 0;) {
        sweep.anticipating(k, a);
        sweep.measurable(k, &z, meas);
        const auto ref = eval_generator(spec, k, y, z, h.grid, h.engine);
        EXPECT_EQ(a[0] + meas[0], ref[0]) << "node " << k;
    }
}

TEST(Generators, SweepRefusesToSkipNodes) {
    EvalHarness h;
    const auto spec = exp_linear(h.grid);
    const auto y = h.det_random(31);
    const auto tail = make_generator_tail(spec, h.grid, y, nullptr);
    GeneratorSweep sweep(spec, h.grid, y, nullptr, tail);
    std::vector<double> a(1);
    sweep.anticipating(h.grid.horizon_node() - 1, a);
    EXPECT_THROW(sweep.anticipating(h.grid.horizon_node() - 3, a), Error);
}

TEST(Generators, SegmentAndDimensionValidation) {
    EvalHarness h;
    const auto spec = exp_linear(h.grid);
    const auto z = ProcessPaths::constant(0.0, 4, 1, 0, h.grid.last_node());

    // Future segment starting past the evaluation node.
    const auto y_late = ProcessPaths::constant(1.0, 4, 1, 50, h.grid.last_node());
    EXPECT_THROW(
        {
            try {
                eval_generator(spec, 10, y_late, z, h.grid, h.engine);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::SegmentTooShort);
                throw;
            }
        },
        Error);

    // Segment stopping before the tail end.
    const auto y_short = ProcessPaths::constant(1.0, 4, 1, 0, h.grid.horizon_node());
    EXPECT_THROW(eval_generator(spec, 10, y_short, z, h.grid, h.engine), Error);

    // Z with fewer columns than the generator reads.
    LinearModel nm;
    nm.mu = TimeKernel::zero();
    nm.nu = {TimeKernel::exponential(1.0, 2.0), TimeKernel::exponential(1.0, 2.0)};
    nm.C_nu = 0.5002;
    const auto two_col = GeneratorSpec::linear(std::move(nm), h.grid);
    const auto y = ProcessPaths::constant(1.0, 4, 1, 0, h.grid.last_node());
    EXPECT_THROW(
        {
            try {
                eval_generator(two_col, 10, y, z, h.grid, h.engine);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::DegenerateDimensions);
                throw;
            }
        },
        Error);
}

TEST(Generators, TailMassBoundMatchesNeglectedKernelMass) {
    const auto grid = test_grid();
    const auto spec = exp_linear(grid);
    const auto b = tail_mass_bound(spec, grid);
    EXPECT_NEAR(b.mu_gap, std::exp(-5.0), 1e-4);
    EXPECT_EQ(b.nu_gap, 0.0);
    EXPECT_EQ(b.total(), b.mu_gap);

    LinearModel zm;
    zm.C_mu = 0.0;
    const auto zero_spec = GeneratorSpec::linear(std::move(zm), grid);
    const auto zb = tail_mass_bound(zero_spec, grid);
    EXPECT_EQ(zb.total(), 0.0);
    EXPECT_FALSE(zero_spec.depends_on_solution());

    SupNormModel sm;
    sm.phi = [](double v) { return v; };
    sm.L_phi = 1.0;
    const auto sup_spec = GeneratorSpec::sup_norm(std::move(sm), grid);
    EXPECT_THROW(
        {
            try {
                tail_mass_bound(sup_spec, grid);
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::UnboundedFamily);
                throw;
            }
        },
        Error);
}

TEST(Generators, LipschitzAuditWithinBoundForLinearFamilies) {
    const auto grid = test_grid();
    {
        const auto rep = check_h1_empirically(exp_linear(grid), grid, 200, 17);
        EXPECT_TRUE(rep.sup_metric_ok) << "max ratio " << rep.max_ratio;
        EXPECT_LE(rep.max_ratio_y, 1.0 + 1e-6);
        EXPECT_EQ(rep.max_ratio_z, 0.0);  // no Z dependence at all
    }
    {
        LinearModel m;
        m.mu = TimeKernel::exponential(1.0, 2.0);
        m.nu = {TimeKernel::exponential(1.0, 2.0)};
        m.C_mu = 0.5;
        m.C_nu = 0.2501;
        const auto rep = check_h1_empirically(GeneratorSpec::linear(std::move(m), grid), grid, 200, 18);
        EXPECT_TRUE(rep.sup_metric_ok) << "max ratio " << rep.max_ratio;
        EXPECT_GT(rep.max_ratio_z, 0.0);
        EXPECT_LE(rep.max_ratio_z, 1.0 + 1e-9);  // discrete Cauchy-Schwarz is sharp
    }
    {
        LinearModel zm;  // zero generator: every gap vanishes
        const auto rep = check_h1_empirically(GeneratorSpec::linear(std::move(zm), grid), grid, 50, 19);
        EXPECT_EQ(rep.max_ratio, 0.0);
        EXPECT_EQ(rep.max_pointwise_l2_ratio, 0.0);
    }
}

TEST(Generators, IndicatorAuditSeparatesSupFromPointwiseMetric) {
    // The single-time read satisfies the sup-norm Lipschitz bound with ratio
    // exactly 1, but a spike probe drives the unweighted pointwise-L2 ratio
    // to 1/sqrt(dt) — the discrete face of the two conditions differing.
    const auto grid = test_grid();
    SupNormModel m;
    m.indicator = true;
    m.scale = 2.0;
    m.tau = 0.5;
    const auto spec = GeneratorSpec::sup_norm(std::move(m), grid);
    const auto rep = check_h1_empirically(spec, grid, 100, 23);
    EXPECT_TRUE(rep.sup_metric_ok) << "max ratio " << rep.max_ratio;
    EXPECT_TRUE(rep.pointwise_l2_exceeds);
    EXPECT_NEAR(rep.max_pointwise_l2_ratio, 1.0 / std::sqrt(grid.dt()), 0.5);
}

}  // namespace
