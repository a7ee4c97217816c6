#ifndef IABSDE_DUALITY_HPP
#define IABSDE_DUALITY_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/generator.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/montecarlo.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/sdde.hpp"
#include "iabsde/solver.hpp"
#include "iabsde/terminal.hpp"

namespace iabsde {

/**
 * A fully linear problem instance: generator kernels with their declared mass
 * bounds, the running driver l(s), and terminal data (Q, P) on the tail nodes
 * [T, T_tail].
 *
 * For these instances the backward solution admits a forward representation
 * through the dual delay process X of sdde.hpp (started at the evaluation
 * time with unit value and zero pre-history):
 *
 *     Y_t = E[ X_T Q_T  +  int_t^T X_s l_s ds
 *              + ( int_T^{T_tail} ( mu_r Q_r + nu_r . P_r ) dr ) int_t^T X_s ds  | F_t ],
 *
 * which prices the terminal payoff and driver along X instead of iterating
 * backward.  The two routes share nothing numerically — one is a Picard
 * fixed point of conditional-expectation sweeps, the other a plain forward
 * Monte Carlo average — so their agreement is the cross-check duality_gap()
 * administers.
 *
 * Q is scalar; P carries one column per Brownian component of the model
 * (one column total when the model has no Z anticipation at all).  Both may
 * be deterministic blocks, which every instance in instances.hpp uses; the
 * evaluation then collapses to a single path with zero standard error.
 */
struct LinearInstance {
    std::string id = "linear";
    LinearModel model;  ///< kernels, declared mass bounds, and the driver l(s)
    ProcessPaths Q;     ///< terminal Y values on [T, T_tail], dim 1
    ProcessPaths P;     ///< terminal Z values on [T, T_tail], dim max(#nu, 1)
};

namespace detail {

inline std::size_t expected_p_dim(const LinearModel& model) noexcept {
    return model.nu.empty() ? 1 : model.nu.size();
}

inline void validate_instance(const LinearInstance& inst, const TimeGrid& grid) {
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();
    if (inst.Q.dim() != 1)
        throw Error(ErrorCode::DegenerateDimensions,
                    "instance '" + inst.id + "': Q must be scalar, got dim " +
                        std::to_string(inst.Q.dim()));
    if (inst.Q.first_node() != h || inst.Q.last_node() != e)
        throw Error(ErrorCode::RangeMismatch,
                    "instance '" + inst.id + "': Q must cover exactly the tail nodes [" +
                        std::to_string(h) + ", " + std::to_string(e) + "]");
    if (inst.P.first_node() != h || inst.P.last_node() != e)
        throw Error(ErrorCode::RangeMismatch,
                    "instance '" + inst.id + "': P must cover exactly the tail nodes [" +
                        std::to_string(h) + ", " + std::to_string(e) + "]");
    if (inst.P.dim() != expected_p_dim(inst.model))
        throw Error(ErrorCode::RangeMismatch,
                    "instance '" + inst.id + "': P has " + std::to_string(inst.P.dim()) +
                        " columns, model wants " + std::to_string(expected_p_dim(inst.model)));
    // Deterministic blocks broadcast to any width; only two genuinely
    // stochastic blocks have path counts that can disagree.
    if (!inst.Q.deterministic_flag() && !inst.P.deterministic_flag() &&
        inst.Q.n_paths() != inst.P.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "instance '" + inst.id + "': Q and P disagree on the path count");
}

/// Kernels driving the dual process, padded with zeros to the bundle width so
/// unused Brownian columns simply do not move X.
inline std::vector<TimeKernel> padded_nu(const LinearModel& model, std::size_t m) {
    if (model.nu.size() > m)
        throw Error(ErrorCode::RangeMismatch,
                    "model has " + std::to_string(model.nu.size()) +
                        " diffusion kernels for a bundle with m=" + std::to_string(m));
    std::vector<TimeKernel> out = model.nu;
    while (out.size() < m) out.push_back(TimeKernel::zero());
    return out;
}

/// Per-path values of the forward representation, evaluated from grid node
/// t_node.  Returns one value per stored evaluation path: a single entry when
/// the dual process and the terminal data are all deterministic.
inline std::vector<double> closed_form_paths(const LinearInstance& inst, const TimeGrid& grid,
                                             const ProcessPaths& x, std::size_t t_node) {
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();

    const bool q_det = inst.Q.deterministic_flag();
    const bool p_det = inst.P.deterministic_flag();
    const bool collapsed = x.deterministic_flag() && q_det && p_det;
    const std::size_t n_eval = collapsed ? 1 : x.n_paths();
    if (!q_det && inst.Q.n_paths() != x.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "stochastic terminal data must carry one row per simulated path");

    // Node samples of the coefficients are path-independent; take them once.
    std::vector<double> l_at(h - t_node + 1);
    for (std::size_t k = t_node; k <= h; ++k) l_at[k - t_node] = inst.model.driver(grid.node_time(k));
    std::vector<double> mu_at(e - h + 1);
    std::vector<std::vector<double>> nu_at(inst.model.nu.size(), std::vector<double>(e - h + 1));
    for (std::size_t k = h; k <= e; ++k) {
        const double r = grid.node_time(k);
        mu_at[k - h] = inst.model.mu(r);
        for (std::size_t c = 0; c < inst.model.nu.size(); ++c) nu_at[c][k - h] = inst.model.nu[c](r);
    }

    std::vector<double> tail_buf(e - h + 1), run_buf(h - t_node + 1), drv_buf(h - t_node + 1);
    std::vector<double> out(n_eval);
    for (std::size_t p = 0; p < n_eval; ++p) {
        const std::size_t xp = x.deterministic_flag() ? 0 : p;
        const std::size_t qp = q_det ? 0 : p;
        const std::size_t pp = p_det ? 0 : p;

        // Tail coefficient K = int_T^{T_tail} ( mu_r Q_r + nu_r . P_r ) dr.
        for (std::size_t k = h; k <= e; ++k) {
            double v = mu_at[k - h] * inst.Q.at(qp, k);
            for (std::size_t c = 0; c < inst.model.nu.size(); ++c)
                v += nu_at[c][k - h] * inst.P.at(pp, k, c);
            tail_buf[k - h] = v;
        }
        const double tail_coeff = trapezoid(grid, tail_buf, h, e);

        for (std::size_t k = t_node; k <= h; ++k) {
            const double xv = x.at(xp, k);
            run_buf[k - t_node] = xv;
            drv_buf[k - t_node] = xv * l_at[k - t_node];
        }
        const double x_mass = trapezoid(grid, run_buf, t_node, h);
        const double driver_part = trapezoid(grid, drv_buf, t_node, h);

        out[p] = x.at(xp, h) * inst.Q.at(qp, h) + driver_part + tail_coeff * x_mass;
        if (!std::isfinite(out[p]))
            throw Error(ErrorCode::NonFiniteValue,
                        "closed-form functional non-finite on path " + std::to_string(p));
    }
    return out;
}

}  // namespace detail

/// Audited generator for a linear instance (kernel masses re-verified by
/// quadrature; beta pinned from the induced Lipschitz constant).
inline GeneratorSpec linear_spec(const LinearInstance& inst, const TimeGrid& grid) {
    detail::validate_instance(inst, grid);
    return GeneratorSpec::linear(inst.model, grid);
}

/// Terminal data for the backward solve of a linear instance, broadcast to
/// the requested Monte Carlo path count.  Stochastic Q or P must already
/// carry exactly that many paths.
inline TerminalData linear_terminal(const LinearInstance& inst, const TimeGrid& grid,
                                    std::size_t n_paths) {
    const GeneratorSpec spec = linear_spec(inst, grid);
    return TerminalData(with_path_count(inst.Q, n_paths, "Q"), with_path_count(inst.P, n_paths, "P"),
                        grid, spec.beta());
}

/**
 * Forward evaluation of Y_0 through the dual delay process driven by the
 * given bundle.  The estimate is the sample mean of the per-path functional;
 * the standard error is sd / sqrt(n).  With every diffusion kernel zero and
 * deterministic (Q, P) the simulation stores a single path and the result is
 * exact and bitwise reproducible, with std_error identically zero.
 */
inline MonteCarloEstimate closed_form_y0(const LinearInstance& inst, const TimeGrid& grid,
                                         const BrownianBundle& bundle) {
    const GeneratorSpec spec = linear_spec(inst, grid);  // runs the kernel-mass audit
    (void)spec;
    const std::vector<TimeKernel> nu = detail::padded_nu(inst.model, bundle.m());
    const ProcessPaths x = simulate_isdde(inst.model.mu, nu, grid, 0, bundle);
    const std::vector<double> values = detail::closed_form_paths(inst, grid, x, 0);
    return summarize_samples(values, bundle.n_paths());
}

/// Convenience entry drawing a fresh counter-based bundle.  Reusing a solve's
/// seed here makes the two sides of a duality check ride identical increments.
inline MonteCarloEstimate closed_form_y0(const LinearInstance& inst, const TimeGrid& grid,
                                         std::size_t n_paths, std::uint64_t seed) {
    const std::size_t m = detail::expected_p_dim(inst.model);
    return closed_form_y0(inst, grid, BrownianBundle::lazy(grid, n_paths, m, seed));
}

/**
 * Conditional forward evaluation Y_t at an interior grid node, restricted to
 * instances whose dual process is deterministic: every diffusion kernel must
 * be identically zero and (Q, P) deterministic, otherwise the conditional
 * expectation would require fresh sub-simulations per scenario and the call
 * refuses with StochasticDataRejected.  The dual process restarts at t with
 * unit value; at the horizon node itself every integral is empty and the
 * value is Q_T exactly.
 */
inline double closed_form_yt_deterministic(const LinearInstance& inst, const TimeGrid& grid,
                                           std::size_t t_node) {
    const GeneratorSpec spec = linear_spec(inst, grid);
    (void)spec;
    for (const TimeKernel& k : inst.model.nu)
        if (!k.identically_zero())
            throw Error(ErrorCode::StochasticDataRejected,
                        "conditional evaluation needs every diffusion kernel identically zero; '" +
                            k.description() + "' is not");
    if (!inst.Q.deterministic_flag() || !inst.P.deterministic_flag())
        throw Error(ErrorCode::StochasticDataRejected,
                    "conditional evaluation needs deterministic terminal data");
    const std::size_t h = grid.horizon_node();
    if (t_node > h)
        throw Error(ErrorCode::NodeOutOfRange, "evaluation node " + std::to_string(t_node) +
                                                   " lies beyond the horizon node " +
                                                   std::to_string(h));
    if (t_node == h) return inst.Q.at(0, h);

    const std::vector<TimeKernel> nu = detail::padded_nu(inst.model, detail::expected_p_dim(inst.model));
    const BrownianBundle bundle = BrownianBundle::lazy(grid, 1, nu.size(), 0);
    const ProcessPaths x = simulate_isdde(inst.model.mu, nu, grid, t_node, bundle);
    return detail::closed_form_paths(inst, grid, x, t_node)[0];
}

/**
 * Outcome of playing the backward solve against the forward representation
 * on common random numbers.  The error budget charges three combined
 * standard errors, whatever discretization allowance the caller grants, and
 * the kernel mass the tail truncation discards, taken at face value.
 */
struct DualityReport {
    std::string instance_id;
    double picard_y0 = 0.0;
    double closed_y0 = 0.0;
    double picard_std_error = 0.0;
    double closed_std_error = 0.0;
    double gap = 0.0;        ///< |picard_y0 - closed_y0|
    double tail_mass = 0.0;  ///< truncated kernel mass charged into the budget
    double budget = 0.0;     ///< 3*(se_picard + se_closed) + discretization + tail_mass
    bool pass = false;
    std::size_t iterations = 0;  ///< Picard iterations the backward solve took
};

/**
 * Cross-validate one linear instance: backward Picard solve and forward dual
 * evaluation on the same bundle, so both sides see identical increments and
 * the Monte Carlo noise largely cancels out of the gap.
 *
 * discretization_budget is the caller's allowance for the scheme mismatch
 * (the backward sweep integrates the driver with left-endpoint rectangles,
 * the forward functional with trapezoids — an O(dt) difference); refinement
 * experiments derive it from solves at two step sizes.
 */
inline DualityReport duality_gap(const LinearInstance& inst, const TimeGrid& grid,
                                 const BrownianBundle& bundle, const CondExpConfig& ce,
                                 const PicardConfig& cfg, double discretization_budget = 0.0) {
    if (!(discretization_budget >= 0.0) || !std::isfinite(discretization_budget))
        throw Error(ErrorCode::ValidationError,
                    "discretization budget must be finite and non-negative");
    const GeneratorSpec spec = linear_spec(inst, grid);
    const TerminalData terminal = linear_terminal(inst, grid, bundle.n_paths());
    const SolutionPair sol = picard_solve(spec, terminal, grid, bundle, cfg, ce);
    const MonteCarloEstimate closed = closed_form_y0(inst, grid, bundle);
    const TailMassBound mass = tail_mass_bound(spec, grid);

    DualityReport r;
    r.instance_id = inst.id;
    r.picard_y0 = sol.y0();
    r.closed_y0 = closed.estimate;
    r.picard_std_error = sol.y0_std_error;
    r.closed_std_error = closed.std_error;
    r.gap = std::fabs(r.picard_y0 - r.closed_y0);
    r.tail_mass = mass.total();
    r.budget = 3.0 * (r.picard_std_error + r.closed_std_error) + discretization_budget + r.tail_mass;
    r.pass = r.gap <= r.budget;
    r.iterations = sol.iterations;
    return r;
}

}  // namespace iabsde

#endif  // IABSDE_DUALITY_HPP
