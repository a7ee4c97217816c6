#ifndef IABSDE_CONTROL_HPP
#define IABSDE_CONTROL_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/generator.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/montecarlo.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/parallel.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/solver.hpp"
#include "iabsde/terminal.hpp"

namespace iabsde {

/**
 * How the finite candidate grid relates to the underlying compact control
 * set.  exact means the grid IS the whole set, so maximizing over it loses
 * nothing.  Otherwise covering_radius bounds the distance from any
 * admissible value to its nearest grid point, and modulus is a shared
 * modulus of continuity of (mu, sigma, l) in the control argument; control
 * extraction prices the resolution slack from the two together.
 */
struct ControlGridCover {
    bool exact = true;
    double covering_radius = 0.0;
    std::function<double(double)> modulus;  ///< omega(delta), nondecreasing, omega(0) = 0
};

/**
 * The optimization problem: maximize, over admissible controls u,
 *
 *     J(u) = E[ X_T^u Q_T + int_0^T X_s^u l(s, u_s) ds
 *               + ( int_T^{T_tail} mu(s, u_s) Q_s ds ) int_0^T X_s^u ds ],
 *
 * where the controlled state follows
 *
 *     dX_s^u = mu(s, u_s) ( int_0^s X_r^u dr ) ds + sigma(s, u_s) X_s^u dW_s,
 *     X_0 = 1
 *
 * (the diffusion multiplies the current state, unlike the dual process of
 * sdde.hpp whose diffusion rides the memory integral).  The value function
 * solves the backward equation with the pointwise-supremum generator, and
 * near-optimal controls fall out of the solved (Y, Z) by per-node argmax.
 *
 * C is the uniform coefficient bound: |sigma|, |l|, the mass of mu(., u) and
 * of mu(., u)^2 all stay below it, and mu itself stays below the integrable
 * envelope h.  All of it is re-verified by quadrature over the working grid
 * at every candidate control value before any operation runs.
 */
struct ControlProblem {
    std::string id = "control";
    std::function<double(double, double)> mu;  ///< mu(s, u) >= 0
    std::vector<std::function<double(double, double)>> sigma;  ///< one entry per Brownian column
    std::function<double(double, double)> l;
    std::function<double(double)> h_envelope;  ///< |mu(s, .)| <= h(s), integrable
    ProcessPaths Q;                            ///< terminal values on [T, T_tail], dim 1
    std::vector<double> u_grid;                ///< finite candidate control values
    double C = 0.0;
    ControlGridCover cover;
};

namespace detail {

/// Activity flags recovered while auditing: whether any sampled coefficient
/// value was nonzero.  They feed the generator's depends_on_solution logic so
/// a genuinely driver-only problem still gets the one-iteration exact solve.
struct ControlAudit {
    bool mu_seen = false;
    bool sigma_seen = false;
};

/// Shape checks plus the quadrature audit of every declared bound, at every
/// candidate control value, with 1e-9 relative slack.  Throws on the first
/// violation; returns which coefficient groups are actually alive.
inline ControlAudit audit_control_problem(const ControlProblem& pb, const TimeGrid& grid) {
    if (!pb.mu || !pb.l || !pb.h_envelope)
        throw Error(ErrorCode::ValidationError,
                    "control problem needs mu, l and the mu envelope h");
    if (pb.u_grid.empty())
        throw Error(ErrorCode::EmptyControlGrid, "control grid has no candidate values");
    if (!(pb.C > 0.0) || !std::isfinite(pb.C))
        throw Error(ErrorCode::ValidationError, "uniform bound C must be finite and positive");
    if (!(pb.cover.covering_radius >= 0.0) || !std::isfinite(pb.cover.covering_radius))
        throw Error(ErrorCode::ValidationError, "covering radius must be finite and nonnegative");
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();
    if (pb.Q.dim() != 1)
        throw Error(ErrorCode::DegenerateDimensions,
                    "problem '" + pb.id + "': Q must be scalar, got dim " +
                        std::to_string(pb.Q.dim()));
    if (pb.Q.first_node() != h || pb.Q.last_node() != e)
        throw Error(ErrorCode::RangeMismatch,
                    "problem '" + pb.id + "': Q must cover exactly the tail nodes [" +
                        std::to_string(h) + ", " + std::to_string(e) + "]");

    const double slack = 1.0 + 1e-9;
    const double cap = pb.C * slack;
    ControlAudit audit;

    // Envelope first: nonnegative, finite, with mass below C.
    std::vector<double> buf(e + 1);
    for (std::size_t k = 0; k <= e; ++k) {
        const double s = grid.node_time(k);
        const double hv = finite_coeff(pb.h_envelope(s), s, "mu envelope");
        if (hv < 0.0)
            throw Error(ErrorCode::ValidationError,
                        "mu envelope negative at time " + std::to_string(s));
        buf[k] = hv;
    }
    const double h_mass = trapezoid(grid, buf, 0, e);
    if (h_mass > cap)
        throw Error(ErrorCode::KernelBoundExceeded,
                    "integral of the mu envelope is " + std::to_string(h_mass) +
                        ", declared bound " + std::to_string(pb.C));

    std::vector<double> sq(e + 1);
    for (const double u : pb.u_grid) {
        if (!std::isfinite(u))
            throw Error(ErrorCode::ValidationError, "control grid holds a non-finite value");
        for (std::size_t k = 0; k <= e; ++k) {
            const double s = grid.node_time(k);
            const double mv = finite_coeff(pb.mu(s, u), s, "mu");
            if (mv < 0.0)
                throw Error(ErrorCode::ValidationError,
                            "mu(" + std::to_string(s) + ", " + std::to_string(u) +
                                ") is negative; the controlled drift must be nonnegative");
            if (mv > finite_coeff(pb.h_envelope(s), s, "mu envelope") * slack)
                throw Error(ErrorCode::ValidationError,
                            "mu exceeds its declared envelope at time " + std::to_string(s) +
                                ", control " + std::to_string(u));
            if (mv != 0.0) audit.mu_seen = true;
            buf[k] = mv;
            sq[k] = mv * mv;

            const double lv = finite_coeff(pb.l(s, u), s, "control driver");
            if (std::fabs(lv) > cap)
                throw Error(ErrorCode::KernelBoundExceeded,
                            "|l| is " + std::to_string(std::fabs(lv)) + " at time " +
                                std::to_string(s) + ", declared bound " + std::to_string(pb.C));
            for (std::size_t c = 0; c < pb.sigma.size(); ++c) {
                const double sv = finite_coeff(pb.sigma[c](s, u), s, "sigma");
                if (std::fabs(sv) > cap)
                    throw Error(ErrorCode::KernelBoundExceeded,
                                "|sigma| is " + std::to_string(std::fabs(sv)) + " at time " +
                                    std::to_string(s) + ", declared bound " + std::to_string(pb.C));
                if (sv != 0.0) audit.sigma_seen = true;
            }
        }
        const double mass = trapezoid(grid, buf, 0, e);
        if (mass > cap)
            throw Error(ErrorCode::KernelBoundExceeded,
                        "integral of mu(., " + std::to_string(u) + ") is " + std::to_string(mass) +
                            ", declared bound " + std::to_string(pb.C));
        const double mass_sq = trapezoid(grid, sq, 0, e);
        if (mass_sq > cap)
            throw Error(ErrorCode::KernelBoundExceeded,
                        "integral of mu(., " + std::to_string(u) + ")^2 is " +
                            std::to_string(mass_sq) + ", declared bound " + std::to_string(pb.C));
    }
    return audit;
}

/// Whether a control value belongs to the declared set: on a grid point, or
/// within the covering radius of one when the grid only samples U.
inline bool admissible_value(const ControlProblem& pb, double v) {
    if (!std::isfinite(v)) return false;
    double dist = std::numeric_limits<double>::infinity();
    for (const double g : pb.u_grid) dist = std::min(dist, std::fabs(v - g));
    const double reach = pb.cover.exact ? 0.0 : pb.cover.covering_radius;
    return dist <= reach + 1e-12;
}

inline void require_admissible(const ControlProblem& pb, const ProcessPaths& u) {
    if (u.dim() != 1)
        throw Error(ErrorCode::DegenerateDimensions,
                    "control paths must be scalar, got dim " + std::to_string(u.dim()));
    const std::size_t stored = u.deterministic_flag() ? 1 : u.n_paths();
    for (std::size_t p = 0; p < stored; ++p)
        for (std::size_t k = u.first_node(); k <= u.last_node(); ++k)
            if (!admissible_value(pb, u.at(p, k)))
                throw Error(ErrorCode::ControlOutOfSet,
                            "control value " + std::to_string(u.at(p, k)) + " at node " +
                                std::to_string(k) + " is outside the declared control set");
}

/// The Lipschitz scale Theorem-style estimates hand the controlled families:
/// one factor C from the anticipation kernel mass, one from |sigma|.
inline double control_lipschitz(const ControlProblem& pb) noexcept { return 2.0 * pb.C; }

}  // namespace detail

/**
 * Generator of the backward equation along one fixed admissible control:
 * f^u(s, Y., z) = E^{F_s}[ int_s^{T_tail} mu(r, u_r) Y_r dr ] + sigma(s, u_s) . z + l(s, u_s).
 * The control must be defined on every grid node, tail included — the
 * anticipation integral reads u beyond the horizon.
 */
inline GeneratorSpec fixed_control_generator(const ControlProblem& pb, const TimeGrid& grid,
                                             std::shared_ptr<const ProcessPaths> u) {
    const detail::ControlAudit audit = detail::audit_control_problem(pb, grid);
    if (!u)
        throw Error(ErrorCode::ValidationError, "fixed-control generator needs a control path");
    if (u->first_node() != 0 || u->last_node() != grid.last_node())
        throw Error(ErrorCode::RangeMismatch,
                    "control must cover every node in [0, " + std::to_string(grid.last_node()) +
                        "]");
    detail::require_admissible(pb, *u);
    ControlFixedModel model;
    model.mu = pb.mu;
    model.sigma = pb.sigma;
    model.l = pb.l;
    model.h_envelope = pb.h_envelope;
    model.u = std::move(u);
    model.C = pb.C;
    model.mu_active = audit.mu_seen;
    model.sigma_active = audit.sigma_seen;
    return GeneratorSpec::control_fixed(std::move(model), detail::control_lipschitz(pb));
}

/// Fixed generator at a constant control value, broadcast over n_paths.
inline GeneratorSpec fixed_control_generator(const ControlProblem& pb, const TimeGrid& grid,
                                             double u_value, std::size_t n_paths) {
    auto u = std::make_shared<ProcessPaths>(
        ProcessPaths::constant(u_value, n_paths, 1, 0, grid.last_node()));
    return fixed_control_generator(pb, grid, std::move(u));
}

/**
 * The value equation's generator: the pointwise supremum of f^u over the
 * candidate grid.  The instantaneous part maximizes sigma(s,u) . z + l(s,u)
 * per path; the anticipation integrand maximizes mu(r,u) Y_r per (r, path)
 * through the sign split (mu >= 0 makes max_u mu the right coefficient on
 * Y+ and min_u mu on Y-).
 */
inline GeneratorSpec esssup_generator(const ControlProblem& pb, const TimeGrid& grid) {
    const detail::ControlAudit audit = detail::audit_control_problem(pb, grid);
    ControlEsssupModel model;
    model.mu = pb.mu;
    model.sigma = pb.sigma;
    model.l = pb.l;
    model.h_envelope = pb.h_envelope;
    model.u_grid = pb.u_grid;
    model.C = pb.C;
    model.mu_active = audit.mu_seen;
    model.sigma_active = audit.sigma_seen;
    return GeneratorSpec::control_esssup(std::move(model), detail::control_lipschitz(pb));
}

namespace detail {

/// Terminal data of the value equation: xi = Q, eta == 0 on the tail (the
/// backward equation carries no tail Z data; its Z-dependence is current-only).
inline TerminalData value_terminal(const ControlProblem& pb, const TimeGrid& grid,
                                   const BrownianBundle& bundle, double beta) {
    ProcessPaths xi = with_path_count(pb.Q, bundle.n_paths(), "Q");
    ProcessPaths eta = ProcessPaths::constant(0.0, bundle.n_paths(), bundle.m(),
                                              grid.horizon_node(), grid.last_node());
    return TerminalData(std::move(xi), std::move(eta), grid, beta);
}

}  // namespace detail

/// Backward solve of the value equation with the esssup generator.
inline SolutionPair solve_value_function(const ControlProblem& pb, const TimeGrid& grid,
                                         const BrownianBundle& bundle, const PicardConfig& cfg,
                                         const CondExpConfig& ce, RegressionLog* log = nullptr) {
    const GeneratorSpec spec = esssup_generator(pb, grid);
    const TerminalData terminal = detail::value_terminal(pb, grid, bundle, spec.beta());
    return picard_solve(spec, terminal, grid, bundle, cfg, ce, log);
}

/// Backward solve along one fixed control; Y_0 of the result is the
/// control's backward cost Y_0^u.
inline SolutionPair solve_fixed_control(const ControlProblem& pb, const TimeGrid& grid,
                                        std::shared_ptr<const ProcessPaths> u,
                                        const BrownianBundle& bundle, const PicardConfig& cfg,
                                        const CondExpConfig& ce, RegressionLog* log = nullptr) {
    if (u && !u->deterministic_flag() && u->n_paths() != bundle.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "stochastic control carries " + std::to_string(u->n_paths()) +
                        " paths, bundle has " + std::to_string(bundle.n_paths()));
    const GeneratorSpec spec = fixed_control_generator(pb, grid, std::move(u));
    const TerminalData terminal = detail::value_terminal(pb, grid, bundle, spec.beta());
    return picard_solve(spec, terminal, grid, bundle, cfg, ce, log);
}

/// Fixed-control solve at a constant control value.
inline SolutionPair solve_fixed_control(const ControlProblem& pb, const TimeGrid& grid,
                                        double u_value, const BrownianBundle& bundle,
                                        const PicardConfig& cfg, const CondExpConfig& ce,
                                        RegressionLog* log = nullptr) {
    auto u = std::make_shared<ProcessPaths>(
        ProcessPaths::constant(u_value, bundle.n_paths(), 1, 0, grid.last_node()));
    return solve_fixed_control(pb, grid, std::move(u), bundle, cfg, ce, log);
}

/**
 * Euler scheme for the controlled state
 *
 *     dX_s = mu(s, u_s) ( int_0^s X_r dr ) ds + sigma(s, u_s) X_s dW_s,
 *     X_0 = 1,
 *
 * on [0, T].  Left-point coefficients, trapezoidal memory update, exactly as
 * the dual simulation — except the diffusion multiplies the current state.
 * Collapses to one stored deterministic path when the control is
 * deterministic and every sampled sigma value along it vanishes.
 */
inline ProcessPaths simulate_controlled_sdde(const ControlProblem& pb, const ProcessPaths& u,
                                             const TimeGrid& grid, const BrownianBundle& bundle) {
    detail::audit_control_problem(pb, grid);
    if (!bundle.grid().same_layout(grid))
        throw Error(ErrorCode::RangeMismatch, "bundle was drawn on a different grid");
    const std::size_t h = grid.horizon_node();
    if (u.first_node() != 0 || u.last_node() < h)
        throw Error(ErrorCode::RangeMismatch,
                    "control must cover at least the nodes [0, " + std::to_string(h) + "]");
    detail::require_admissible(pb, u);
    const bool u_det = u.deterministic_flag();
    if (!u_det && u.n_paths() != bundle.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "stochastic control carries " + std::to_string(u.n_paths()) +
                        " paths, bundle has " + std::to_string(bundle.n_paths()));
    if (pb.sigma.size() > bundle.m())
        throw Error(ErrorCode::RangeMismatch,
                    "problem has " + std::to_string(pb.sigma.size()) +
                        " diffusion columns for a bundle with m=" + std::to_string(bundle.m()));

    // Along a deterministic control the coefficients are path-independent:
    // bake them per node, and drop to one stored path if no noise survives.
    std::vector<double> mu_fixed;
    std::vector<std::vector<double>> sigma_fixed;
    bool deterministic = false;
    if (u_det) {
        mu_fixed.resize(h);
        sigma_fixed.assign(pb.sigma.size(), std::vector<double>(h));
        deterministic = true;
        for (std::size_t k = 0; k < h; ++k) {
            const double s = grid.node_time(k);
            const double uv = u.at(0, k);
            mu_fixed[k] = detail::finite_coeff(pb.mu(s, uv), s, "mu");
            for (std::size_t c = 0; c < pb.sigma.size(); ++c) {
                sigma_fixed[c][k] = detail::finite_coeff(pb.sigma[c](s, uv), s, "sigma");
                if (sigma_fixed[c][k] != 0.0) deterministic = false;
            }
        }
    }

    ProcessPaths out = deterministic ? ProcessPaths::deterministic(bundle.n_paths(), 1, 0, h)
                                     : ProcessPaths::zeros(bundle.n_paths(), 1, 0, h);
    const std::size_t stored = deterministic ? 1 : bundle.n_paths();

    parallel_for(stored, [&](std::size_t pb_begin, std::size_t pb_end) {
        for (std::size_t p = pb_begin; p < pb_end; ++p) {
            double x = 1.0;
            double mem = 0.0;  // trapezoidal int_0^s X dr
            out.set(p, 0, 0, x);
            for (std::size_t k = 0; k < h; ++k) {
                const double dt = grid.step_width(k);
                const double s = grid.node_time(k);
                double mu_v, diff = 0.0;
                if (u_det) {
                    mu_v = mu_fixed[k];
                    if (!deterministic)
                        for (std::size_t c = 0; c < pb.sigma.size(); ++c)
                            diff += sigma_fixed[c][k] * x * bundle.increment(p, k, c);
                } else {
                    const double uv = u.at(p, k);
                    mu_v = detail::finite_coeff(pb.mu(s, uv), s, "mu");
                    for (std::size_t c = 0; c < pb.sigma.size(); ++c)
                        diff += detail::finite_coeff(pb.sigma[c](s, uv), s, "sigma") * x *
                                bundle.increment(p, k, c);
                }
                const double x_next = x + mu_v * mem * dt + diff;
                mem += 0.5 * dt * (x + x_next);
                x = x_next;
                out.set(p, k + 1, 0, x);
            }
        }
    });

    for (std::size_t k = 0; k <= h; ++k)
        for (std::size_t p = 0; p < stored; ++p)
            if (!std::isfinite(out.at(p, k)))
                throw Error(ErrorCode::NonFiniteValue, "controlled path " + std::to_string(p) +
                                                           " non-finite at node " +
                                                           std::to_string(k));
    return out;
}

/**
 * Monte Carlo estimate of the objective J(u): simulate the controlled state
 * on the bundle, then average the per-path functional (trapezoid quadrature
 * throughout, tail integral truncated at T_tail).  The control must extend
 * through the tail — the coefficient int_T^{T_tail} mu(s, u_s) Q_s ds reads
 * it there.
 */
inline MonteCarloEstimate forward_cost(const ControlProblem& pb, const ProcessPaths& u,
                                       const TimeGrid& grid, const BrownianBundle& bundle) {
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();
    if (u.first_node() != 0 || u.last_node() != e)
        throw Error(ErrorCode::RangeMismatch,
                    "objective evaluation needs the control on every node in [0, " +
                        std::to_string(e) + "]");
    const ProcessPaths x = simulate_controlled_sdde(pb, u, grid, bundle);

    const bool q_det = pb.Q.deterministic_flag();
    const bool u_det = u.deterministic_flag();
    if (!q_det && pb.Q.n_paths() != bundle.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "stochastic terminal data must carry one row per simulated path");
    const bool collapsed = x.deterministic_flag() && q_det && u_det;
    const std::size_t n_eval = collapsed ? 1 : bundle.n_paths();

    std::vector<double> tail_buf(e - h + 1), run_buf(h + 1), drv_buf(h + 1);
    std::vector<double> values(n_eval);
    for (std::size_t p = 0; p < n_eval; ++p) {
        const std::size_t xp = x.deterministic_flag() ? 0 : p;
        const std::size_t qp = q_det ? 0 : p;
        const std::size_t up = u_det ? 0 : p;

        for (std::size_t k = h; k <= e; ++k) {
            const double s = grid.node_time(k);
            tail_buf[k - h] =
                detail::finite_coeff(pb.mu(s, u.at(up, k)), s, "mu") * pb.Q.at(qp, k);
        }
        const double tail_coeff = trapezoid(grid, tail_buf, h, e);

        for (std::size_t k = 0; k <= h; ++k) {
            const double s = grid.node_time(k);
            const double xv = x.at(xp, k);
            run_buf[k] = xv;
            drv_buf[k] = xv * detail::finite_coeff(pb.l(s, u.at(up, k)), s, "control driver");
        }
        const double x_mass = trapezoid(grid, run_buf, 0, h);
        const double driver_part = trapezoid(grid, drv_buf, 0, h);

        values[p] = x.at(xp, h) * pb.Q.at(qp, h) + driver_part + tail_coeff * x_mass;
        if (!std::isfinite(values[p]))
            throw Error(ErrorCode::NonFiniteValue,
                        "objective functional non-finite on path " + std::to_string(p));
    }
    return summarize_samples(values, bundle.n_paths());
}

/**
 * A near-optimal control read off a solved value function, with the error
 * guarantee that makes it quotable: |Y_0 - Y_0^{u}| <= bound, where bound =
 * rho * (eps_grid + epsilon), rho = sqrt(T e^{CT + C^2 + 2}) is the Gronwall
 * constant of the verification argument, epsilon the caller's selection
 * slack, and eps_grid the price of only sampling U at finitely many points.
 */
struct ExtractedControl {
    ProcessPaths u;          ///< one control value per (path, node) on [0, T_tail]
    double rho = 0.0;        ///< sqrt(T * exp(C*T + C^2 + 2))
    double eps_grid = 0.0;   ///< control-grid resolution slack (0 when the grid is exact)
    double epsilon = 0.0;    ///< the caller's selection slack, echoed back
    double bound = 0.0;      ///< rho * (eps_grid + epsilon)
};

/**
 * Per (node, path) argmax over the candidate grid of the decomposed
 * objective mu(t,u) Y_t + sigma(t,u) . Z_t + l(t,u) — the integrand part in
 * its sign-split reading (mu >= 0 turns argmax of mu Y into max-mu on Y >= 0
 * and min-mu on Y < 0 automatically), the instantaneous part as evaluated by
 * the generator.  Ties go to the first grid index, which keeps the
 * extraction deterministic.  Beyond the horizon Z is the zero tail datum, so
 * only mu Q + l competes there.
 */
inline ExtractedControl extract_control(const ControlProblem& pb, const SolutionPair& sol,
                                        double epsilon) {
    const TimeGrid& grid = sol.grid;
    detail::audit_control_problem(pb, grid);
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
        throw Error(ErrorCode::ValidationError, "selection slack epsilon must be positive");
    if (!pb.cover.exact && !pb.cover.modulus)
        throw Error(ErrorCode::MissingModulus,
                    "the control grid only samples U; declare a modulus of continuity to price "
                    "the resolution slack");

    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();
    const std::size_t m = sol.z.dim();
    const bool det = sol.y.deterministic_flag() && sol.z.deterministic_flag() &&
                     sol.terminal.deterministic_flag();
    const std::size_t stored = det ? 1 : sol.y.n_paths();

    ProcessPaths u = det ? ProcessPaths::deterministic(sol.y.n_paths(), 1, 0, e)
                         : ProcessPaths::zeros(sol.y.n_paths(), 1, 0, e);
    double max_y = 0.0, max_z = 0.0;
    for (std::size_t k = 0; k <= e; ++k) {
        const double s = grid.node_time(k);
        for (std::size_t p = 0; p < stored; ++p) {
            const double y = sol.y_at(p, k);
            max_y = std::max(max_y, std::fabs(y));
            double best = -std::numeric_limits<double>::infinity();
            double best_u = pb.u_grid.front();
            for (const double cand : pb.u_grid) {
                double score = detail::finite_coeff(pb.mu(s, cand), s, "mu") * y +
                               detail::finite_coeff(pb.l(s, cand), s, "control driver");
                for (std::size_t c = 0; c < pb.sigma.size() && c < m; ++c)
                    score += detail::finite_coeff(pb.sigma[c](s, cand), s, "sigma") *
                             sol.z_at(p, k, c);
                if (score > best) {
                    best = score;
                    best_u = cand;
                }
            }
            u.set(p, k, 0, best_u);
        }
        if (k <= h)
            for (std::size_t p = 0; p < stored; ++p)
                for (std::size_t c = 0; c < m; ++c)
                    max_z = std::max(max_z, std::fabs(sol.z_at(p, k, c)));
    }

    ExtractedControl out{std::move(u), 0.0, 0.0, epsilon, 0.0};
    out.rho = std::sqrt(grid.T() * std::exp(pb.C * grid.T() + pb.C * pb.C + 2.0));
    if (!pb.cover.exact) {
        // A delta-perturbation of the control moves the generator by at most
        // omega(delta) * (|Y| mass + |z| + 1); price the whole solve at its
        // worst node.
        const double omega = pb.cover.modulus(pb.cover.covering_radius);
        if (!(omega >= 0.0) || !std::isfinite(omega))
            throw Error(ErrorCode::ValidationError, "modulus returned a bad value");
        out.eps_grid = omega * (max_y * grid.T_tail() + max_z + 1.0);
    }
    out.bound = out.rho * (out.eps_grid + epsilon);
    return out;
}

}  // namespace iabsde

#endif  // IABSDE_CONTROL_HPP
