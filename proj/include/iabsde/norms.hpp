#ifndef IABSDE_NORMS_HPP
#define IABSDE_NORMS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/paths.hpp"

namespace iabsde {

namespace detail {
inline void require_covered(const ProcessPaths& p, std::size_t node, const char* what) {
    if (!p.covers(node))
        throw Error(ErrorCode::NodeOutOfRange,
                    std::string(what) + " node " + std::to_string(node) + " outside covered range [" +
                        std::to_string(p.first_node()) + ", " + std::to_string(p.last_node()) + "]");
}

/// Squared euclidean norm across components at one node.
inline double sq_norm_at(const ProcessPaths& p, std::size_t path, std::size_t node) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.dim(); ++c) {
        const double v = p.at(path, node, c);
        s += v * v;
    }
    return s;
}
}  // namespace detail

/**
 * Per-path discrete sup norm: max of the euclidean value norm over nodes
 * >= from_node, then max with tail_sup — the caller's bound for everything
 * beyond the grid (zero allowed).  Monotone nonincreasing in from_node.
 */
inline std::vector<double> discrete_sup_norm(const ProcessPaths& p, std::size_t from_node,
                                             std::span<const double> tail_sup) {
    detail::require_covered(p, from_node, "sup norm start");
    if (!tail_sup.empty() && tail_sup.size() != p.n_paths())
        throw Error(ErrorCode::RangeMismatch,
                    "tail_sup has " + std::to_string(tail_sup.size()) + " entries for " +
                        std::to_string(p.n_paths()) + " paths");
    std::vector<double> out(p.n_paths(), 0.0);
    for (std::size_t path = 0; path < p.n_paths(); ++path) {
        double m = tail_sup.empty() ? 0.0 : tail_sup[path];
        for (std::size_t k = from_node; k <= p.last_node(); ++k)
            m = std::max(m, std::sqrt(detail::sq_norm_at(p, path, k)));
        out[path] = m;
    }
    return out;
}

/// Convenience overload with one shared tail bound.
inline std::vector<double> discrete_sup_norm(const ProcessPaths& p, std::size_t from_node,
                                             double tail_sup = 0.0) {
    std::vector<double> ts(p.n_paths(), tail_sup);
    return discrete_sup_norm(p, from_node, std::span<const double>(ts));
}

/**
 * Per-path trapezoidal quadrature of exp(beta * s) * |p_s|^2 ds over
 * [node_time(from_node), node_time(to_node)].
 *
 * Additive across a shared interior node to machine precision, nonnegative,
 * and exact up to the trapezoid error O(dt^2) for smooth integrands.
 */
inline std::vector<double> weighted_l2(const ProcessPaths& p, const TimeGrid& grid, double beta,
                                       std::size_t from_node, std::size_t to_node) {
    detail::require_covered(p, from_node, "weighted L2 start");
    detail::require_covered(p, to_node, "weighted L2 end");
    if (to_node < from_node)
        throw Error(ErrorCode::RangeMismatch, "weighted L2 range is reversed");
    if (to_node > grid.last_node())
        throw Error(ErrorCode::NodeOutOfRange, "weighted L2 end past grid");

    std::vector<double> out(p.n_paths(), 0.0);
    if (from_node == to_node) return out;

    // Node weights e^{beta t_k} are shared by all paths; precompute once.
    std::vector<double> w(to_node - from_node + 1);
    for (std::size_t k = from_node; k <= to_node; ++k)
        w[k - from_node] = std::exp(beta * grid.node_time(k));

    // A vanishing integrand contributes exactly 0 even where the weight
    // overflows to inf (large beta * t), so the guard keeps zero tails clean.
    const auto term = [&](std::size_t path, std::size_t k) {
        const double sq = detail::sq_norm_at(p, path, k);
        return sq == 0.0 ? 0.0 : w[k - from_node] * sq;
    };
    const std::size_t stored = p.deterministic_flag() ? 1 : p.n_paths();
    for (std::size_t path = 0; path < stored; ++path) {
        double acc = 0.0;
        double prev = term(path, from_node);
        for (std::size_t k = from_node; k < to_node; ++k) {
            const double next = term(path, k + 1);
            acc += 0.5 * grid.step_width(k) * (prev + next);
            prev = next;
        }
        out[path] = acc;
    }
    if (p.deterministic_flag())
        for (std::size_t path = 1; path < p.n_paths(); ++path) out[path] = out[0];
    return out;
}

/// Plain trapezoid of scalar node samples g over grid nodes [from, to].
inline double trapezoid(const TimeGrid& grid, std::span<const double> g,
                        std::size_t from_node, std::size_t to_node) {
    if (to_node < from_node) throw Error(ErrorCode::RangeMismatch, "trapezoid range reversed");
    if (g.size() != to_node - from_node + 1)
        throw Error(ErrorCode::RangeMismatch, "trapezoid sample count mismatch");
    double acc = 0.0;
    for (std::size_t k = from_node; k < to_node; ++k)
        acc += 0.5 * grid.step_width(k) * (g[k - from_node] + g[k + 1 - from_node]);
    return acc;
}

}  // namespace iabsde

#endif  // IABSDE_NORMS_HPP
