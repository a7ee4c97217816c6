#ifndef IABSDE_PROJECTION_HPP
#define IABSDE_PROJECTION_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/parallel.hpp"

namespace iabsde {

/// How conditional expectations are realized.
enum class CondExpMode {
    /// Identity on deterministic data; cross-path mean at node 0; error for
    /// genuinely random data anywhere else.
    deterministic_passthrough,
    /// Least-squares projection onto polynomials in the time-k state.
    polynomial_regression,
};

struct CondExpConfig {
    CondExpMode mode = CondExpMode::polynomial_regression;
    /// Polynomial degree per state component (regression mode).
    std::size_t basis_degree = 2;
};

/**
 * One fitted projection: polynomial coefficients over the standardized state,
 * plus the standardization itself.  Outputs are always produced by apply(),
 * also in the run that fitted the coefficients, so that a replay against the
 * same states reproduces every downstream value bit for bit.
 *
 * Basis layout: [1, z_0, z_0^2, .., z_0^deg, z_1, ..] with z_c the c-th
 * standardized state component.  degree == 0 collapses to the plain mean.
 */
struct PolynomialFit {
    std::size_t node = 0;
    std::size_t degree = 0;
    bool reduced = false;  ///< degree was lowered to rescue a singular fit
    std::vector<double> state_mean;
    std::vector<double> state_scale;
    std::vector<double> coeffs;

    std::size_t n_components() const noexcept { return state_mean.size(); }

    double apply_one(std::span<const double> state) const {
        double v = coeffs[0];
        std::size_t idx = 1;
        for (std::size_t c = 0; c < n_components(); ++c) {
            const double z = (state[c] - state_mean[c]) / state_scale[c];
            double pw = 1.0;
            for (std::size_t j = 1; j <= degree; ++j) {
                pw *= z;
                v += coeffs[idx++] * pw;
            }
        }
        return v;
    }
};

/**
 * Recorded projection sequence of one solve.  In record mode every fit is
 * appended in consumption order; in replay mode fits are consumed in the same
 * order and applied to the (possibly different) inputs without refitting —
 * the mechanism behind the adaptedness check and behind policy re-evaluation
 * on fresh noise.
 */
struct RegressionLog {
    enum class Mode { record, replay };
    Mode mode = Mode::record;
    std::vector<PolynomialFit> fits;
    std::size_t n_iterations = 0;  ///< iterations of the recorded solve
    std::size_t cursor = 0;        ///< replay position

    void reset_replay() { cursor = 0; }
};

namespace detail {

/// Solve the symmetric positive definite system G x = b in place via an
/// unpivoted LDL^T factorization.  Returns false when a pivot falls under
/// rel_tol times the largest diagonal — the caller's cue to drop the degree.
inline bool ldlt_solve(std::vector<double>& G, std::vector<double>& b, std::size_t n,
                       double rel_tol = 1e-12) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(G[i * n + i]));
    if (max_diag == 0.0) return false;
    std::vector<double> L(n * n, 0.0), D(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = G[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= L[j * n + k] * L[j * n + k] * D[k];
        if (!(d > rel_tol * max_diag)) return false;
        D[j] = d;
        L[j * n + j] = 1.0;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = G[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= L[i * n + k] * L[j * n + k] * D[k];
            L[i * n + j] = v / d;
        }
    }
    // Forward, diagonal, backward substitutions.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < i; ++k) b[i] -= L[i * n + k] * b[k];
    for (std::size_t i = 0; i < n; ++i) b[i] /= D[i];
    for (std::size_t ii = n; ii-- > 0;)
        for (std::size_t k = ii + 1; k < n; ++k) b[ii] -= L[k * n + ii] * b[k];
    return true;
}

}  // namespace detail

/**
 * Least-squares fit of values onto polynomials in the state, with automatic
 * degree reduction: a rank-deficient (or numerically singular) design drops
 * the degree one step at a time until the normal equations factor, bottoming
 * out at the plain mean.  The fit records whether reduction happened so
 * reports can surface it.
 *
 * states is [path][comp] flattened, values one per path.  Throws
 * InsufficientPaths unless n_paths exceeds the requested basis size, and
 * RankDeficiency in the (defensive) case where even the mean fit fails.
 */
inline PolynomialFit fit_polynomial(std::span<const double> states, std::size_t m,
                                    std::span<const double> values, std::size_t degree,
                                    std::size_t node = 0) {
    const std::size_t n = values.size();
    if (m == 0 || n == 0 || states.size() != n * m)
        throw Error(ErrorCode::RangeMismatch, "state/value shapes disagree");
    const std::size_t basis = 1 + m * degree;
    if (n <= basis)
        throw Error(ErrorCode::InsufficientPaths,
                    "regression needs more than " + std::to_string(basis) + " paths, got " +
                        std::to_string(n));

    PolynomialFit fit;
    fit.node = node;
    fit.state_mean.assign(m, 0.0);
    fit.state_scale.assign(m, 1.0);

    // Standardize each state component (fixed-order sums).
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) s += states[p * m + c];
        const double mean = s / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double d = states[p * m + c] - mean;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / static_cast<double>(n));
        fit.state_mean[c] = mean;
        fit.state_scale[c] = sd > 0.0 ? sd : 1.0;
    }

    std::vector<double> phi;  // one path's basis row
    for (std::size_t deg = degree;; --deg) {
        const std::size_t B = 1 + m * deg;
        std::vector<double> G(B * B, 0.0), rhs(B, 0.0);
        phi.assign(B, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            phi[0] = 1.0;
            std::size_t idx = 1;
            for (std::size_t c = 0; c < m; ++c) {
                const double z = (states[p * m + c] - fit.state_mean[c]) / fit.state_scale[c];
                double pw = 1.0;
                for (std::size_t j = 1; j <= deg; ++j) {
                    pw *= z;
                    phi[idx++] = pw;
                }
            }
            for (std::size_t i = 0; i < B; ++i) {
                for (std::size_t j = i; j < B; ++j) G[i * B + j] += phi[i] * phi[j];
                rhs[i] += phi[i] * values[p];
            }
        }
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < i; ++j) G[i * B + j] = G[j * B + i];

        std::vector<double> sol = rhs;
        if (detail::ldlt_solve(G, sol, B)) {
            fit.degree = deg;
            fit.reduced = deg != degree;
            fit.coeffs = std::move(sol);
            return fit;
        }
        if (deg == 0)
            throw Error(ErrorCode::RankDeficiency, "mean fit failed — degenerate path count or weights");
    }
}

/// Brownian state (cumulative increments) of every path at one node:
/// [path][comp] flattened.  Nodes on [0, T] only — the backward solver never
/// conditions on tail nodes.
inline std::vector<double> brownian_state(const BrownianBundle& bundle, std::size_t node) {
    if (node > bundle.grid().horizon_node())
        throw Error(ErrorCode::NodeOutOfRange, "conditioning node must lie on [0, T]");
    const std::size_t m = bundle.m();
    std::vector<double> st(bundle.n_paths() * m, 0.0);
    for (std::size_t p = 0; p < bundle.n_paths(); ++p)
        for (std::size_t s = 0; s < node; ++s)
            for (std::size_t c = 0; c < m; ++c) st[p * m + c] += bundle.increment(p, s, c);
    return st;
}

/**
 * Conditional-expectation engine bound to one bundle.  Caches the Brownian
 * states of every interior node once (regression mode) and serves
 * projections for the backward solver; the free function condexp() below is
 * the one-shot variant of the same operation.
 */
class CondExpEngine {
public:
    CondExpEngine(const BrownianBundle& bundle, const CondExpConfig& cfg)
        : bundle_(&bundle), cfg_(cfg), m_(bundle.m()), n_paths_(bundle.n_paths()) {
        if (cfg.mode == CondExpMode::polynomial_regression) {
            const std::size_t h = bundle.grid().horizon_node();
            states_.assign(n_paths_ * (h + 1) * m_, 0.0);
            parallel_for(n_paths_, [&](std::size_t pb, std::size_t pe) {
                for (std::size_t p = pb; p < pe; ++p) {
                    for (std::size_t c = 0; c < m_; ++c) {
                        double acc = 0.0;
                        states_[(p * (h + 1)) * m_ + c] = 0.0;
                        for (std::size_t k = 0; k < h; ++k) {
                            acc += bundle.increment(p, k, c);
                            states_[(p * (h + 1) + k + 1) * m_ + c] = acc;
                        }
                    }
                }
            });
        }
    }

    const CondExpConfig& config() const noexcept { return cfg_; }
    const BrownianBundle& bundle() const noexcept { return *bundle_; }
    std::size_t reduction_events() const noexcept { return reductions_; }

    /// State row of one path at a node (regression mode only).
    std::span<const double> state(std::size_t path, std::size_t node) const {
        const std::size_t h = bundle_->grid().horizon_node();
        return {states_.data() + (path * (h + 1) + node) * m_, m_};
    }

    /**
     * E[values | time-node information] as per-path outputs.
     *
     * Regression mode fits (or, in replay, reuses) a polynomial over the
     * node's Brownian state; node 0 is the plain mean.  Passthrough mode
     * hands identical values back unchanged, averages at node 0, and refuses
     * anything else.
     */
    std::vector<double> project(std::span<const double> values, std::size_t node,
                                RegressionLog* log = nullptr) {
        if (values.size() != n_paths_)
            throw Error(ErrorCode::RangeMismatch, "value count differs from path count");
        for (std::size_t p = 0; p < n_paths_; ++p)
            if (!std::isfinite(values[p]))
                throw Error(ErrorCode::NonFiniteValue,
                            "projection input non-finite at node " + std::to_string(node));

        if (cfg_.mode == CondExpMode::deterministic_passthrough)
            return passthrough(values, node);

        PolynomialFit fit;
        if (log && log->mode == RegressionLog::Mode::replay) {
            if (log->cursor >= log->fits.size())
                throw Error(ErrorCode::ReplayMismatch, "regression log exhausted");
            fit = log->fits[log->cursor++];
            if (fit.node != node)
                throw Error(ErrorCode::ReplayMismatch,
                            "log expects node " + std::to_string(fit.node) + ", solver is at node " +
                                std::to_string(node));
        } else {
            fit = fit_at(values, node);
            if (fit.reduced) ++reductions_;
            if (log) log->fits.push_back(fit);
        }

        std::vector<double> out(n_paths_);
        for (std::size_t p = 0; p < n_paths_; ++p) out[p] = fit.apply_one(state(p, node));
        return out;
    }

private:
    PolynomialFit fit_at(std::span<const double> values, std::size_t node) const {
        if (node == 0) {
            // Trivial information at time 0: the projection is the mean,
            // encoded as a degree-0 fit so record/replay treats every node
            // uniformly.
            PolynomialFit fit;
            fit.node = 0;
            fit.degree = 0;
            fit.state_mean.assign(m_, 0.0);
            fit.state_scale.assign(m_, 1.0);
            double s = 0.0;
            for (std::size_t p = 0; p < n_paths_; ++p) s += values[p];
            fit.coeffs = {s / static_cast<double>(n_paths_)};
            return fit;
        }
        const std::size_t h = bundle_->grid().horizon_node();
        // Gather this node's states contiguously for the fitter.
        std::vector<double> st(n_paths_ * m_);
        for (std::size_t p = 0; p < n_paths_; ++p)
            for (std::size_t c = 0; c < m_; ++c) st[p * m_ + c] = states_[(p * (h + 1) + node) * m_ + c];
        return fit_polynomial(st, m_, values, cfg_.basis_degree, node);
    }

    std::vector<double> passthrough(std::span<const double> values, std::size_t node) const {
        bool all_equal = true;
        for (std::size_t p = 1; p < n_paths_; ++p)
            if (values[p] != values[0]) {
                all_equal = false;
                break;
            }
        if (all_equal) return std::vector<double>(values.begin(), values.end());
        if (node == 0) {
            double s = 0.0;
            for (std::size_t p = 0; p < n_paths_; ++p) s += values[p];
            return std::vector<double>(n_paths_, s / static_cast<double>(n_paths_));
        }
        throw Error(ErrorCode::ProjectionFailure,
                    "passthrough mode saw genuinely random values at node " + std::to_string(node) +
                        "; switch to polynomial_regression");
    }

    const BrownianBundle* bundle_;
    CondExpConfig cfg_;
    std::size_t m_;
    std::size_t n_paths_;
    std::vector<double> states_;
    std::size_t reductions_ = 0;
};

/// One-shot conditional expectation of per-path values at a node.
inline std::vector<double> condexp(std::span<const double> values, std::size_t node,
                                   const BrownianBundle& bundle, const CondExpConfig& ce) {
    if (ce.mode == CondExpMode::deterministic_passthrough) {
        CondExpEngine eng(bundle, ce);
        return eng.project(values, node);
    }
    // Regression without the full state cache: build states for this node only.
    for (double v : values)
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "condexp input non-finite");
    if (values.size() != bundle.n_paths())
        throw Error(ErrorCode::RangeMismatch, "value count differs from path count");
    if (node == 0) {
        double s = 0.0;
        for (double v : values) s += v;
        return std::vector<double>(values.size(), s / static_cast<double>(values.size()));
    }
    const auto st = brownian_state(bundle, node);
    const PolynomialFit fit = fit_polynomial(st, bundle.m(), values, ce.basis_degree, node);
    std::vector<double> out(values.size());
    for (std::size_t p = 0; p < values.size(); ++p)
        out[p] = fit.apply_one({st.data() + p * bundle.m(), bundle.m()});
    return out;
}

}  // namespace iabsde

#endif  // IABSDE_PROJECTION_HPP
