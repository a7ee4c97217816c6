#ifndef IABSDE_ANALYSIS_HPP
#define IABSDE_ANALYSIS_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/duality.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/generator.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/solver.hpp"
#include "iabsde/terminal.hpp"

// Verification harnesses over solved equations: ordering checks between
// solution pairs, the zero-data energy diagnostic, and the shape of the
// Picard residual decay.  Everything here is a pure report generator — no
// solver state is touched, so the functions are safe from any thread.

namespace iabsde {

/**
 * Outcome of an ordering check between two solutions expected to satisfy
 * Y^(1) >= Y^(2) at every node.  max_violation is the worst pathwise excess
 * (Y^(2) - Y^(1))+ seen anywhere; mean_violation aggregates per node across
 * paths first (the "almost every path" reading) and reports the worst node.
 * The verdict compares the pathwise figure — the stricter one — against the
 * tolerance.
 */
struct ComparisonReport {
    std::size_t n_nodes_checked = 0;
    double max_violation = 0.0;   ///< max over (node, path) of (Y2 - Y1)+
    double mean_violation = 0.0;  ///< max over nodes of the path-mean of (Y2 - Y1)+
    double tolerance = 0.0;
    bool pass = false;
};

/**
 * Node-by-node, path-by-path ordering check of two solutions produced on the
 * same grid and the same noise (common random numbers are what make the
 * pathwise comparison meaningful for stochastic solves).  Tail nodes are
 * included through the stitched view, since the solutions extend past the
 * horizon by their terminal data.
 */
inline ComparisonReport check_comparison(const SolutionPair& dominant,
                                         const SolutionPair& dominated, double tol) {
    if (!dominant.grid.same_layout(dominated.grid))
        throw Error(ErrorCode::GridMismatch, "solutions live on different grids");
    if (!(dominant.bundle == dominated.bundle))
        throw Error(ErrorCode::BundleMismatch,
                    "ordering checks need common random numbers: bundle ids differ");
    if (!(tol >= 0.0) || !std::isfinite(tol))
        throw Error(ErrorCode::ValidationError, "comparison tolerance must be finite and >= 0");

    const std::size_t last = dominant.grid.last_node();
    const bool both_det = dominant.y.deterministic_flag() && dominant.terminal.deterministic_flag() &&
                          dominated.y.deterministic_flag() && dominated.terminal.deterministic_flag();
    const std::size_t stored = both_det ? 1 : dominant.y.n_paths();

    ComparisonReport report;
    report.n_nodes_checked = last + 1;
    report.tolerance = tol;
    for (std::size_t k = 0; k <= last; ++k) {
        double node_sum = 0.0;
        for (std::size_t p = 0; p < stored; ++p) {
            const double excess = dominated.y_at(p, k) - dominant.y_at(p, k);
            if (excess > report.max_violation) report.max_violation = excess;
            if (excess > 0.0) node_sum += excess;
        }
        const double node_mean = node_sum / static_cast<double>(stored);
        if (node_mean > report.mean_violation) report.mean_violation = node_mean;
    }
    report.pass = report.max_violation <= tol;
    return report;
}

/// Strict-ordering verdict between two linear instances sharing kernels and
/// noise; see check_strict_comparison.
struct StrictComparisonReport {
    double y0_first = 0.0;
    double y0_second = 0.0;
    double gap = 0.0;  ///< y0_first - y0_second
    double terminal_gap_min = 0.0;
    double driver_gap_min = 0.0;
    double margin = 0.0;  ///< provable lower bound on the gap for gapped pairs
    double tolerance = 0.0;
    bool identical = false;  ///< sampled data of the two instances coincide
    bool pass = false;
    std::size_t iterations_first = 0;
    std::size_t iterations_second = 0;
};

namespace detail {

/// Sampled minimum/maximum of a pointwise data gap.
struct GapRange {
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    void absorb(double v) {
        if (v < min) min = v;
        if (v > max) max = v;
    }
};

}  // namespace detail

/**
 * The two-sided strict ordering check on a pair of linear instances solved
 * with common random numbers.  Equal data must produce an (up to statistical
 * noise, exactly reproducible) equal Y_0; a pair gapped in the terminal data
 * or the driver must separate Y_0 by at least the data gap itself:
 *
 *     Y_0^(1) - Y_0^(2) >= min(xi1 - xi2) + T * min(l1 - l2),
 *
 * because the difference of the two solutions solves the linear equation with
 * the gap data, and the shared nonnegative memory kernel only adds to it.
 * That accounting needs a genuinely common (mu, nu, P) across the pair —
 * kernel values are sampled on every grid node and must agree exactly — and,
 * for gapped pairs, a drift-only memory (all nu sampled zero), since a live
 * Z-coupling would feed signed terms into the difference.
 *
 * The verdict: |gap| <= tolerance for identical pairs, gap >= margin -
 * tolerance (and strictly positive) for gapped ones, with tolerance = 3 *
 * (combined Y_0 standard errors) + budget.
 */
inline StrictComparisonReport check_strict_comparison(const LinearInstance& first,
                                                      const LinearInstance& second,
                                                      const TimeGrid& grid,
                                                      const BrownianBundle& bundle,
                                                      const PicardConfig& cfg,
                                                      const CondExpConfig& ce,
                                                      double budget = 0.0) {
    if (!(budget >= 0.0) || !std::isfinite(budget))
        throw Error(ErrorCode::ValidationError, "discretization budget must be finite and >= 0");
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();

    // Kernels must agree on every node; the margin argument below has no
    // reading for a pair that differs in its memory structure.
    const auto& m1 = first.model;
    const auto& m2 = second.model;
    if (m1.nu.size() != m2.nu.size())
        throw Error(ErrorCode::ValidationError,
                    "strict comparison needs a common noise-memory dimension");
    bool any_nu = false;
    for (std::size_t k = 0; k <= e; ++k) {
        const double t = grid.node_time(k);
        if (m1.mu(t) != m2.mu(t))
            throw Error(ErrorCode::ValidationError,
                        "strict comparison needs a common mu kernel; values differ at t=" +
                            std::to_string(t));
        for (std::size_t c = 0; c < m1.nu.size(); ++c) {
            const double v1 = m1.nu[c](t);
            if (v1 != m2.nu[c](t))
                throw Error(ErrorCode::ValidationError,
                            "strict comparison needs common nu kernels; values differ at t=" +
                                std::to_string(t));
            if (v1 != 0.0) any_nu = true;
        }
    }

    detail::GapRange terminal_gap, driver_gap;
    for (std::size_t k = 0; k <= h; ++k) {
        const double t = grid.node_time(k);
        driver_gap.absorb(m1.driver(t) - m2.driver(t));
    }
    const std::size_t q_stored =
        std::max(first.Q.deterministic_flag() ? 1 : first.Q.n_paths(),
                 second.Q.deterministic_flag() ? 1 : second.Q.n_paths());
    for (std::size_t p = 0; p < q_stored; ++p)
        for (std::size_t k = h; k <= e; ++k) terminal_gap.absorb(first.Q.at(p, k) - second.Q.at(p, k));
    const std::size_t p_stored = std::max(first.P.deterministic_flag() ? 1 : first.P.n_paths(),
                                          second.P.deterministic_flag() ? 1 : second.P.n_paths());
    const std::size_t p_dim = std::min(first.P.dim(), second.P.dim());
    for (std::size_t p = 0; p < p_stored; ++p)
        for (std::size_t k = h; k <= e; ++k)
            for (std::size_t c = 0; c < p_dim; ++c)
                if (first.P.at(p, k, c) != second.P.at(p, k, c))
                    throw Error(ErrorCode::ValidationError,
                                "strict comparison needs common tail Z data");

    StrictComparisonReport report;
    report.terminal_gap_min = terminal_gap.min;
    report.driver_gap_min = driver_gap.min;
    report.identical = terminal_gap.min == 0.0 && terminal_gap.max == 0.0 &&
                       driver_gap.min == 0.0 && driver_gap.max == 0.0;
    if (!report.identical) {
        if (terminal_gap.min < 0.0 || driver_gap.min < 0.0)
            throw Error(ErrorCode::ValidationError,
                        "instance pair is not ordered: data gaps change sign");
        if (any_nu)
            throw Error(ErrorCode::ValidationError,
                        "margin accounting for gapped pairs covers drift-only memory; "
                        "nu must vanish");
    }

    const auto solve = [&](const LinearInstance& inst) {
        const GeneratorSpec spec = linear_spec(inst, grid);
        const TerminalData terminal = linear_terminal(inst, grid, bundle.n_paths());
        return picard_solve(spec, terminal, grid, bundle, cfg, ce);
    };
    const SolutionPair s1 = solve(first);
    const SolutionPair s2 = solve(second);

    report.y0_first = s1.y0();
    report.y0_second = s2.y0();
    report.gap = s1.y0() - s2.y0();
    report.iterations_first = s1.iterations;
    report.iterations_second = s2.iterations;
    report.margin = std::max(0.0, terminal_gap.min) + grid.T() * std::max(0.0, driver_gap.min);
    report.tolerance = 3.0 * (s1.y0_std_error + s2.y0_std_error) + budget;
    report.pass = report.identical
                      ? std::fabs(report.gap) <= report.tolerance
                      : report.gap > 0.0 && report.gap >= report.margin - report.tolerance;
    return report;
}

/**
 * Both sides of the zero-data energy bound, evaluated on a solved equation:
 *
 *     E[ sup_s |Y_s|^2 + int_0^inf e^{beta s} |Z_s|^2 ds ]
 *         vs   E[sup |xi|^2] + E[int e^{beta s} |eta|^2] + E[int_0^T |f(s,0,0)|^2 ds],
 *
 * all ranges truncated at the working tail end.  The ratio of the two sides
 * is a diagnostic, not a certified constant: the estimate's multiplier is not
 * pinned anywhere, so the useful signals are finiteness, stability under grid
 * refinement, and exact quadratic homogeneity in the data.
 */
struct AprioriReport {
    double lhs = 0.0;
    double rhs_terminal = 0.0;  ///< E[sup over the tail of |xi|^2]
    double rhs_eta = 0.0;       ///< E[int_T^{T_tail} e^{beta s} |eta|^2 ds]
    double rhs_driver = 0.0;    ///< E[int_0^T |f(s,0,0)|^2 ds]
    double rhs_total = 0.0;
    double ratio = 0.0;  ///< lhs / rhs_total; 0 for the all-zero fixed point
    double beta = 0.0;
    bool trivial = false;  ///< both sides vanish
};

inline AprioriReport apriori_diagnostic(const SolutionPair& sol, const TerminalData& terminal,
                                        const GeneratorSpec& spec, const TimeGrid& grid) {
    if (!sol.grid.same_layout(grid))
        throw Error(ErrorCode::GridMismatch, "solution was produced on a different grid");
    const std::size_t h = grid.horizon_node();
    const std::size_t e = grid.last_node();
    const double beta = spec.beta();

    AprioriReport report;
    report.beta = beta;

    // Weighted squares skip exact zeros so that an overflowing weight times a
    // vanishing integrand stays 0 instead of poisoning the sum with inf * 0.
    const auto weighted_sq = [&](double value, double s) {
        if (value == 0.0) return 0.0;
        return std::exp(beta * s) * value * value;
    };

    const bool det = sol.y.deterministic_flag() && sol.z.deterministic_flag() &&
                     terminal.deterministic_flag();
    const std::size_t stored = det ? 1 : sol.y.n_paths();
    const std::size_t m_z = sol.z.dim();
    const std::size_t m_eta = terminal.eta().dim();

    std::vector<double> interior(h + 1), tail(e - h + 1);
    double lhs_acc = 0.0, term_acc = 0.0, eta_acc = 0.0;
    for (std::size_t p = 0; p < stored; ++p) {
        double sup_y = 0.0, sup_xi = 0.0;
        for (std::size_t k = 0; k <= e; ++k) {
            const double y = std::fabs(sol.y_at(p, k));
            if (y > sup_y) sup_y = y;
            if (k >= h) {
                const double xi = std::fabs(terminal.xi().at(p, k));
                if (xi > sup_xi) sup_xi = xi;
            }
        }
        for (std::size_t k = 0; k <= h; ++k) {
            double sq = 0.0;
            for (std::size_t c = 0; c < m_z; ++c) {
                const double z = sol.z.at(p, k, c);
                sq += z * z;
            }
            interior[k] = sq == 0.0 ? 0.0 : std::exp(beta * grid.node_time(k)) * sq;
        }
        for (std::size_t k = h; k <= e; ++k) {
            double sq = 0.0;
            for (std::size_t c = 0; c < m_eta; ++c) {
                const double eta = terminal.eta().at(p, k, c);
                sq += eta * eta;
            }
            tail[k - h] = sq == 0.0 ? 0.0 : std::exp(beta * grid.node_time(k)) * sq;
        }
        const double z_interior = trapezoid(grid, interior, 0, h);
        const double eta_tail = trapezoid(grid, tail, h, e);
        lhs_acc += sup_y * sup_y + z_interior + eta_tail;
        term_acc += sup_xi * sup_xi;
        eta_acc += eta_tail;
    }
    const double n = static_cast<double>(stored);
    report.lhs = lhs_acc / n;
    report.rhs_terminal = term_acc / n;
    report.rhs_eta = eta_acc / n;

    // f(s, 0, 0): drive the generator over identically-zero candidate paths.
    // The anticipating part of zero data is a per-path constant, so no
    // conditional-expectation machinery is needed — the sweep's raw values
    // are already exact.
    {
        const std::size_t n_rows_src = sol.y.n_paths();
        const ProcessPaths zy = ProcessPaths::deterministic(n_rows_src, 1, 0, e);
        const ProcessPaths zz =
            ProcessPaths::deterministic(n_rows_src, std::max<std::size_t>(spec.m(), 1), 0, e);
        const GeneratorTail gtail = make_generator_tail(spec, grid, zy, &zz);
        GeneratorSweep sweep(spec, grid, zy, &zz, gtail);
        const std::size_t rows = sweep.rows();

        std::vector<std::vector<double>> f_sq(rows, std::vector<double>(h + 1));
        std::vector<double> a(rows, 0.0), meas(rows, 0.0);
        sweep.measurable(h, &zz, meas);
        for (std::size_t r = 0; r < rows; ++r) {
            const double fh = (spec.family() == GeneratorFamily::sup_norm
                                   ? (spec.sup_model().indicator
                                          ? 0.0
                                          : spec.sup_model().phi(gtail.suffix[r]))
                                   : gtail.suffix[r]) +
                              meas[r];
            f_sq[r][h] = fh * fh;
        }
        for (std::size_t k = h; k-- > 0;) {
            sweep.anticipating(k, a);
            sweep.measurable(k, &zz, meas);
            for (std::size_t r = 0; r < rows; ++r) {
                const double f = a[r] + meas[r];
                f_sq[r][k] = f * f;
            }
        }
        double drv_acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) drv_acc += trapezoid(grid, f_sq[r], 0, h);
        report.rhs_driver = drv_acc / static_cast<double>(rows);
    }

    report.rhs_total = report.rhs_terminal + report.rhs_eta + report.rhs_driver;
    if (!std::isfinite(report.lhs) || !std::isfinite(report.rhs_total))
        throw Error(ErrorCode::NonFiniteValue, "energy diagnostic overflowed; check the weight");
    if (report.rhs_total == 0.0) {
        if (report.lhs > 1e-18)
            throw Error(ErrorCode::ZeroRhsWithNonzeroLhs,
                        "zero data admits only the zero solution, but the solved pair carries "
                        "energy " +
                            std::to_string(report.lhs));
        report.trivial = true;
        return report;
    }
    report.ratio = report.lhs / report.rhs_total;
    return report;
}

/**
 * Shape analysis of a Picard residual history: the contraction argument
 * promises super-geometric decay r_n ~ K^n / n!, visible as per-step ratios
 * r_{n+1}/r_n that shrink like K/n instead of holding constant.  Fitting
 * happens against the unweighted (beta = 0) history — reweighting changes
 * bookkeeping, not iterates — so pass a history recorded that way.
 */
struct ConvergenceReport {
    std::vector<double> residuals;  ///< the fitted series, one entry per iteration
    std::vector<double> ratios;     ///< successive residual ratios
    double fitted_K = 0.0;          ///< least-squares K in log r_n = c + n log K - log n!
    double theoretical_K = 0.0;     ///< T times the declared kernel mass
    double fit_rms = 0.0;           ///< RMS misfit of the factorial model in log space
    bool eventually_decreasing = false;
    bool factorial_shape = false;
    std::string note;
};

inline ConvergenceReport convergence_report(const std::vector<IterationStats>& history,
                                            const TimeGrid& grid, double L_mass) {
    if (!(L_mass >= 0.0) || !std::isfinite(L_mass))
        throw Error(ErrorCode::ValidationError, "kernel mass must be finite and >= 0");

    ConvergenceReport report;
    report.theoretical_K = grid.T() * L_mass;

    // Usable prefix: strictly positive, finite residuals.  A residual hitting
    // exact zero means structural convergence — nothing to fit beyond it.
    std::vector<double> n_idx;
    for (const IterationStats& it : history) {
        if (!(it.y_residual > 0.0) || !std::isfinite(it.y_residual)) break;
        report.residuals.push_back(it.y_residual);
        n_idx.push_back(static_cast<double>(it.iteration));
    }
    if (report.residuals.size() < 3)
        throw Error(ErrorCode::TooFewIterations,
                    "residual-shape analysis needs at least 3 recorded iterations, got " +
                        std::to_string(report.residuals.size()));

    for (std::size_t i = 0; i + 1 < report.residuals.size(); ++i)
        report.ratios.push_back(report.residuals[i + 1] / report.residuals[i]);

    // Least squares of log r_n + log n!  =  c + n log K.
    const std::size_t cnt = report.residuals.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::vector<double> ylog(cnt);
    for (std::size_t i = 0; i < cnt; ++i) {
        const double x = n_idx[i];
        ylog[i] = std::log(report.residuals[i]) + std::lgamma(x + 1.0);
        sx += x;
        sy += ylog[i];
        sxx += x * x;
        sxy += x * ylog[i];
    }
    const double denom = static_cast<double>(cnt) * sxx - sx * sx;
    const double slope = (static_cast<double>(cnt) * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / static_cast<double>(cnt);
    report.fitted_K = std::exp(slope);
    double ss = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) {
        const double d = ylog[i] - (intercept + slope * n_idx[i]);
        ss += d * d;
    }
    report.fit_rms = std::sqrt(ss / static_cast<double>(cnt));

    // Maximal strictly-decreasing suffix of the ratio sequence.
    std::size_t run = 0;
    for (std::size_t i = report.ratios.size(); i-- > 1;) {
        if (report.ratios[i] < report.ratios[i - 1] * (1.0 - 1e-6)) ++run;
        else break;
    }
    report.eventually_decreasing =
        run >= std::max<std::size_t>(1, (report.ratios.size() - 1) / 2);

    double rmin = report.ratios.front(), rmax = report.ratios.front();
    for (const double r : report.ratios) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    const bool flat = rmax <= rmin * (1.0 + 1e-3);
    if (flat) {
        report.note = "geometric, not factorial";
    } else if (report.eventually_decreasing) {
        report.factorial_shape = true;
        report.note = "factorial-type decay: per-step ratios shrink";
    } else {
        report.note = "irregular ratio pattern";
    }
    return report;
}

}  // namespace iabsde

#endif  // IABSDE_ANALYSIS_HPP
