#ifndef IABSDE_SOLVER_HPP
#define IABSDE_SOLVER_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/generator.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/projection.hpp"
#include "iabsde/terminal.hpp"

namespace iabsde {

/**
 * Which frozen processes feed the generator during one Picard pass.
 *
 * freeze_both evaluates f entirely on iterate n-1, so the inner pass is a
 * plain backward Euler sweep.  freeze_y_only substitutes the Z value just
 * computed at the current node into the instantaneous part instead; the two
 * variants converge to the same discrete fixed point whenever the generator
 * reads Z only at the current time, and freeze_y_only is refused for
 * generators that read the future Z path (the substitution is undefined
 * there — future Z values of the current iterate do not exist yet).
 */
enum class FreezeMode {
    freeze_both,
    freeze_y_only,
};

inline const char* to_string(FreezeMode f) noexcept {
    return f == FreezeMode::freeze_both ? "freeze_both" : "freeze_y_only";
}

struct PicardConfig {
    double tol_y = 1e-10;  ///< weighted sup-metric tolerance on successive Y iterates
    double tol_z = 1e-10;  ///< weighted L2 tolerance on successive Z iterates
    std::size_t max_iter = 60;
    FreezeMode freeze_mode = FreezeMode::freeze_both;
    /// Exponential weight for the residual metrics; unset means the
    /// generator's own weight (2L + 74 unless overridden at construction).
    std::optional<double> beta;
};

struct IterationStats {
    std::size_t iteration = 0;
    double y_residual = 0.0;
    double z_residual = 0.0;
};

struct ResidualPair {
    double y = 0.0;
    double z = 0.0;
};

/**
 * Distance between two solver iterates on their shared node range:
 *
 *   y: path-average of  max_k  e^{beta t_k} |Y'_k - Y_k|^2
 *   z: path-average of  trapezoid of e^{beta s} |Z'_s - Z_s|^2 ds
 *
 * The weight sits inside the sup, matching the Cauchy metrics the
 * contraction argument runs on.  Zero differences contribute exactly zero
 * even where the weight overflows.
 */
inline ResidualPair residuals(const ProcessPaths& y_prev, const ProcessPaths& z_prev,
                              const ProcessPaths& y_next, const ProcessPaths& z_next,
                              const TimeGrid& grid, double beta) {
    const auto same_block = [](const ProcessPaths& a, const ProcessPaths& b, const char* what) {
        if (a.n_paths() != b.n_paths() || a.dim() != b.dim() || a.first_node() != b.first_node() ||
            a.last_node() != b.last_node())
            throw Error(ErrorCode::RangeMismatch, std::string(what) + " iterate layouts differ");
    };
    same_block(y_prev, y_next, "Y");
    same_block(z_prev, z_next, "Z");
    if (y_prev.n_paths() != z_prev.n_paths() || y_prev.first_node() != z_prev.first_node() ||
        y_prev.last_node() != z_prev.last_node())
        throw Error(ErrorCode::RangeMismatch, "Y and Z iterates cover different ranges");
    if (!std::isfinite(beta))
        throw Error(ErrorCode::ValidationError, "residual weight must be finite");

    const std::size_t from = y_prev.first_node();
    const std::size_t to = y_prev.last_node();
    if (to > grid.last_node())
        throw Error(ErrorCode::NodeOutOfRange, "iterates extend past the grid");

    std::vector<double> w(to - from + 1);
    for (std::size_t k = from; k <= to; ++k) w[k - from] = std::exp(beta * grid.node_time(k));

    const std::size_t n_paths = y_prev.n_paths();
    const auto sq_diff = [](const ProcessPaths& a, const ProcessPaths& b, std::size_t p, std::size_t k) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.dim(); ++c) {
            const double d = b.at(p, k, c) - a.at(p, k, c);
            s += d * d;
        }
        return s;
    };

    ResidualPair out;
    const std::size_t ys = y_prev.deterministic_flag() && y_next.deterministic_flag() ? 1 : n_paths;
    double acc = 0.0;
    for (std::size_t p = 0; p < ys; ++p) {
        double peak = 0.0;
        for (std::size_t k = from; k <= to; ++k) {
            const double sq = sq_diff(y_prev, y_next, p, k);
            if (sq != 0.0) peak = std::max(peak, w[k - from] * sq);
        }
        acc += peak;
    }
    out.y = ys == 1 ? acc : acc / static_cast<double>(n_paths);

    const std::size_t zs = z_prev.deterministic_flag() && z_next.deterministic_flag() ? 1 : n_paths;
    acc = 0.0;
    for (std::size_t p = 0; p < zs; ++p) {
        double integral = 0.0;
        double sq = sq_diff(z_prev, z_next, p, from);
        double prev_term = sq == 0.0 ? 0.0 : w[0] * sq;
        for (std::size_t k = from; k < to; ++k) {
            sq = sq_diff(z_prev, z_next, p, k + 1);
            const double term = sq == 0.0 ? 0.0 : w[k + 1 - from] * sq;
            integral += 0.5 * grid.step_width(k) * (prev_term + term);
            prev_term = term;
        }
        acc += integral;
    }
    out.z = zs == 1 ? acc : acc / static_cast<double>(n_paths);
    return out;
}

/**
 * A converged (or partial) backward solution.
 *
 * Interior Y (scalar) and Z (one column per Brownian component) live on the
 * solve window nodes [0, horizon]; beyond the horizon the solution IS the
 * terminal data, kept here in its compressed form rather than expanded to a
 * full path block.  y_at / z_at present the stitched view on [0, last].
 */
struct SolutionPair {
    ProcessPaths y;
    ProcessPaths z;
    TerminalData terminal;
    TimeGrid grid;
    BundleId bundle;
    double beta = 0.0;
    /// Monte Carlo standard error of y0(): the node-0 conditional expectation
    /// is a cross-path mean, so its sampling error is the usual sd / sqrt(n).
    /// Exactly zero for deterministic solves.
    double y0_std_error = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t regression_reductions = 0;  ///< degree-lowering rescues during the solve
    std::vector<IterationStats> residual_history;
    std::string note;

    double y_at(std::size_t path, std::size_t node) const {
        return node <= grid.horizon_node() ? y.at(path, node) : terminal.xi().at(path, node);
    }
    double z_at(std::size_t path, std::size_t node, std::size_t comp = 0) const {
        return node <= grid.horizon_node() ? z.at(path, node, comp)
                                           : terminal.eta().at(path, node, comp);
    }
    /// Time-zero value; identical across paths by construction (the node-0
    /// conditional expectation is a cross-path constant).
    double y0() const { return y.at(0, 0); }
};

/// max_iter won the race against the tolerances; the partial solution and
/// its full residual history ride along for diagnosis.
class MaxIterExceededError : public Error {
public:
    MaxIterExceededError(SolutionPair partial_solution, const std::string& msg)
        : Error(ErrorCode::MaxIterExceeded, msg), partial(std::move(partial_solution)) {}

    SolutionPair partial;
};

/**
 * Picard iteration for the backward equation
 *
 *   Y_t = xi_T + int_t^T f(s, {Y_r}_{r>=s}, {Z_r}_{r>=s}) ds - int_t^T Z_s dW_s,
 *
 * with (Y, Z) = (xi, eta) prescribed beyond the horizon.  Iterate 0 is zero
 * on the solve window; each pass freezes the future processes at the
 * previous iterate and solves the resulting inner equation by backward
 * Euler:
 *
 *   Z_k = E[Y_{k+1} dW_k | F_k] / dt
 *   Y_k = E[Y_{k+1} + dt * (anticipating part of f) | F_k] + dt * (instantaneous part)
 *
 * The two conditional expectations above are the only statistical operations;
 * folding the anticipating part into the Y_{k+1} projection target keeps one
 * recorded fit per (node, component) and exploits linearity of least squares
 * — separately projecting the two terms would give the same values up to
 * rounding.  The instantaneous part (driver plus current-Z terms) is already
 * measurable at node k and is added outside the projection, where the
 * regression basis would reproduce it exactly anyway.
 *
 * Stopping: both residual metrics at or below tolerance, or — when the
 * generator reads neither Y nor Z — structurally after the first pass, which
 * is then exact.  max_iter wins every tie and raises MaxIterExceededError
 * carrying the partial solution.
 *
 * A RegressionLog in record mode captures every projection for later replay;
 * in replay mode the solve runs exactly the recorded number of iterations
 * and applies the recorded fits instead of refitting, reproducing the
 * original computation graph on whatever noise the engine's bundle carries.
 */
inline SolutionPair picard_solve(const GeneratorSpec& spec, const TerminalData& terminal,
                                 const PicardConfig& cfg, CondExpEngine& engine,
                                 RegressionLog* log = nullptr) {
    const BrownianBundle& bundle = engine.bundle();
    const TimeGrid& grid = bundle.grid();
    const std::size_t h = grid.horizon_node();
    const std::size_t last = grid.last_node();
    const std::size_t n_paths = bundle.n_paths();
    const std::size_t m = bundle.m();

    if (!(cfg.tol_y > 0.0) || !(cfg.tol_z > 0.0))
        throw Error(ErrorCode::ValidationError, "residual tolerances must be positive");
    if (cfg.max_iter == 0)
        throw Error(ErrorCode::ValidationError, "max_iter must be at least 1");
    const double beta = cfg.beta.value_or(spec.beta());
    if (!std::isfinite(beta) || beta < 0.0)
        throw Error(ErrorCode::ValidationError, "weight beta must be finite and nonnegative");
    if (terminal.d() != 1)
        throw Error(ErrorCode::DegenerateDimensions,
                    "backward equations are scalar; terminal data has dimension " +
                        std::to_string(terminal.d()));
    if (terminal.xi().first_node() != h || terminal.xi().last_node() != last)
        throw Error(ErrorCode::GridMismatch,
                    "terminal data covers nodes [" + std::to_string(terminal.xi().first_node()) +
                        ", " + std::to_string(terminal.xi().last_node()) + "], grid expects [" +
                        std::to_string(h) + ", " + std::to_string(last) + "]");
    if (terminal.xi().n_paths() != n_paths)
        throw Error(ErrorCode::RangeMismatch,
                    "terminal data has " + std::to_string(terminal.xi().n_paths()) +
                        " paths, bundle has " + std::to_string(n_paths));
    if (terminal.eta().dim() != m)
        throw Error(ErrorCode::RangeMismatch,
                    "terminal eta has " + std::to_string(terminal.eta().dim()) +
                        " columns for an m=" + std::to_string(m) + " Brownian bundle");
    if (spec.m() > m)
        throw Error(ErrorCode::DegenerateDimensions,
                    "generator reads " + std::to_string(spec.m()) +
                        " Brownian components, bundle provides " + std::to_string(m));
    if (cfg.freeze_mode == FreezeMode::freeze_y_only &&
        spec.z_dependence() == ZDependence::future_path)
        throw Error(ErrorCode::UnsupportedFreezeMode,
                    "freeze_y_only substitutes the current-node Z into the generator; this "
                    "generator reads the future Z path — use freeze_both");

    const bool det_mode = engine.config().mode == CondExpMode::deterministic_passthrough;
    if (det_mode && !terminal.deterministic_flag())
        throw Error(ErrorCode::StochasticDataRejected,
                    "passthrough projections cannot represent stochastic terminal data; "
                    "use polynomial_regression");

    std::size_t forced_iters = 0;
    if (log && log->mode == RegressionLog::Mode::replay) {
        if (det_mode)
            throw Error(ErrorCode::ReplayMismatch,
                        "replaying a regression log requires polynomial_regression mode");
        if (log->n_iterations == 0)
            throw Error(ErrorCode::ReplayMismatch, "regression log records no iterations");
        forced_iters = log->n_iterations;
        log->reset_replay();
    }

    const auto make_y = [&] {
        return det_mode ? ProcessPaths::deterministic(n_paths, 1, 0, h)
                        : ProcessPaths::zeros(n_paths, 1, 0, h);
    };
    const auto make_z = [&] {
        return det_mode ? ProcessPaths::deterministic(n_paths, m, 0, h)
                        : ProcessPaths::zeros(n_paths, m, 0, h);
    };
    // Every iterate carries the terminal values at the horizon node itself;
    // only nodes strictly before it are unknowns.
    const std::size_t stored = det_mode ? 1 : n_paths;
    const auto pin_horizon = [&](ProcessPaths& yb, ProcessPaths& zb) {
        for (std::size_t p = 0; p < stored; ++p) {
            yb.set(p, h, 0, terminal.xi().at(p, h));
            for (std::size_t c = 0; c < m; ++c) zb.set(p, h, c, terminal.eta().at(p, h, c));
        }
    };

    ProcessPaths y_prev = make_y();
    ProcessPaths z_prev = make_z();
    pin_horizon(y_prev, z_prev);

    if (det_mode && detail::generator_rows(spec, y_prev, &z_prev) != 1)
        throw Error(ErrorCode::StochasticDataRejected,
                    "generator carries stochastic path data (control); passthrough projections "
                    "cannot represent it — use polynomial_regression");

    // The tail contribution of every generator evaluation is fixed by the
    // terminal data; build it once, stitch it into each iteration's sweep.
    const GeneratorTail tail = make_generator_tail(spec, grid, terminal.xi(), &terminal.eta());

    const bool structural = !spec.depends_on_solution();
    const std::size_t reductions_before = engine.reduction_events();

    std::vector<IterationStats> history;
    std::vector<double> a, meas, values(n_paths), proj;
    bool converged = false;
    double y0_se = 0.0;
    std::size_t n = 0;

    while (true) {
        ++n;
        ProcessPaths y_next = make_y();
        ProcessPaths z_next = make_z();
        pin_horizon(y_next, z_next);

        GeneratorSweep sweep(spec, grid, y_prev, &z_prev, tail);
        const std::size_t rows = sweep.rows();
        a.assign(rows, 0.0);
        meas.assign(rows, 0.0);

        for (std::size_t k = h; k-- > 0;) {
            const double dt = grid.step_width(k);
            sweep.anticipating(k, a);

            // Z from the discrete martingale-increment representation.  With
            // deterministic data Y_{k+1} is path-constant, E[Y_{k+1} dW | F_k]
            // vanishes exactly, and the initialized zeros already hold.
            if (!det_mode) {
                for (std::size_t c = 0; c < m; ++c) {
                    for (std::size_t p = 0; p < n_paths; ++p)
                        values[p] = y_next.at(p, k + 1) * bundle.increment(p, k, c) / dt;
                    proj = engine.project(values, k, log);
                    for (std::size_t p = 0; p < n_paths; ++p) {
                        if (!std::isfinite(proj[p]))
                            throw Error(ErrorCode::NonFiniteValue,
                                        "Z update non-finite at node " + std::to_string(k));
                        z_next.set(p, k, c, proj[p]);
                    }
                }
            }

            // One fused projection serves E[Y_{k+1}|F_k] and the anticipating
            // part of f; the instantaneous part joins after, evaluated on the
            // frozen Z (or, under freeze_y_only, the Z just computed).
            for (std::size_t p = 0; p < n_paths; ++p)
                values[p] = y_next.at(p, k + 1) + dt * a[rows == 1 ? 0 : p];

            // At the root node the projection degenerates to a cross-path
            // mean, so its Monte Carlo standard error is available for free.
            // (The instantaneous part added below is F_0-measurable for any
            // adapted control and contributes no sampling variance.)
            if (k == 0 && !det_mode && n_paths > 1) {
                double mean = 0.0;
                for (const double v : values) mean += v;
                mean /= static_cast<double>(n_paths);
                double ss = 0.0;
                for (const double v : values) {
                    const double d = v - mean;
                    ss += d * d;
                }
                y0_se = std::sqrt(ss / static_cast<double>(n_paths - 1) /
                                  static_cast<double>(n_paths));
            }

            proj = engine.project(values, k, log);

            const ProcessPaths* z_meas =
                cfg.freeze_mode == FreezeMode::freeze_both ? &z_prev : &z_next;
            sweep.measurable(k, z_meas, meas);
            for (std::size_t p = 0; p < stored; ++p) {
                const double v = proj[p] + dt * meas[rows == 1 ? 0 : p];
                if (!std::isfinite(v))
                    throw Error(ErrorCode::NonFiniteValue,
                                "Y update non-finite at node " + std::to_string(k));
                y_next.set(p, k, 0, v);
            }
        }

        const ResidualPair res = residuals(y_prev, z_prev, y_next, z_next, grid, beta);
        history.push_back({n, res.y, res.z});
        y_prev = std::move(y_next);
        z_prev = std::move(z_next);

        if (forced_iters > 0) {
            // Replay: reproduce the recorded iteration count, no early exit.
            if (n == forced_iters) {
                converged = true;
                break;
            }
            continue;
        }
        if (structural && n == 1) {
            converged = true;
            break;
        }
        if (res.y <= cfg.tol_y && res.z <= cfg.tol_z) {
            converged = true;
            break;
        }
        if (n >= cfg.max_iter) break;
    }

    if (log && log->mode == RegressionLog::Mode::record) log->n_iterations = n;

    std::string note =
        cfg.freeze_mode == FreezeMode::freeze_both
            ? "Picard variant: future Y and Z frozen at the previous iterate; each pass is a "
              "plain backward Euler sweep."
            : "Picard variant: future Y frozen at the previous iterate, instantaneous Z read "
              "from the current iterate (same fixed point for current-Z generators).";
    if (structural)
        note += " Generator reads no unknowns: the first pass is exact and the solve stops "
                "after one iteration.";
    if (det_mode)
        note += " Deterministic data: conditional expectations are identities and Z vanishes.";

    SolutionPair out{std::move(y_prev),
                     std::move(z_prev),
                     terminal,
                     grid,
                     bundle.id(),
                     beta,
                     y0_se,
                     n,
                     converged,
                     engine.reduction_events() - reductions_before,
                     std::move(history),
                     std::move(note)};
    if (!converged) {
        const IterationStats& tailres = out.residual_history.back();
        const std::string msg = "no convergence after " + std::to_string(n) +
                                " iterations: y residual " + std::to_string(tailres.y_residual) +
                                " (tol " + std::to_string(cfg.tol_y) + "), z residual " +
                                std::to_string(tailres.z_residual) + " (tol " +
                                std::to_string(cfg.tol_z) + ")";
        throw MaxIterExceededError(std::move(out), msg);
    }
    return out;
}

/// Convenience entry that builds the projection engine for one solve.
inline SolutionPair picard_solve(const GeneratorSpec& spec, const TerminalData& terminal,
                                 const TimeGrid& grid, const BrownianBundle& bundle,
                                 const PicardConfig& cfg, const CondExpConfig& ce,
                                 RegressionLog* log = nullptr) {
    if (!grid.same_layout(bundle.grid()))
        throw Error(ErrorCode::GridMismatch, "solver grid and Brownian bundle grid differ");
    CondExpEngine engine(bundle, ce);
    return picard_solve(spec, terminal, cfg, engine, log);
}

}  // namespace iabsde

#endif  // IABSDE_SOLVER_HPP
