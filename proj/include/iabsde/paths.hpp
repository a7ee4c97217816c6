#ifndef IABSDE_PATHS_HPP
#define IABSDE_PATHS_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"

namespace iabsde {

/**
 * A block of process values indexed (path, grid node, component), covering a
 * contiguous node range [first_node, last_node] of an owning TimeGrid.
 *
 * Deterministic processes (same values on every path) are stored once and
 * broadcast: deterministic_flag() == true guarantees path p reads identical
 * to path 0 by construction, and keeps terminal data and deterministic
 * instances cheap no matter how many Monte Carlo paths are in play.
 *
 * Storage is path-major: all nodes of path 0, then path 1, ...  Per-path
 * sweeps (norms, quadrature, suffix integrals) walk contiguous memory.
 */
class ProcessPaths {
public:
    /// All-zero stochastic block (one stored row per path).
    static ProcessPaths zeros(std::size_t n_paths, std::size_t dim,
                              std::size_t first_node, std::size_t last_node) {
        return ProcessPaths(n_paths, dim, first_node, last_node, /*deterministic=*/false);
    }

    /// Deterministic block, one stored row broadcast to n_paths logical paths.
    static ProcessPaths deterministic(std::size_t n_paths, std::size_t dim,
                                      std::size_t first_node, std::size_t last_node) {
        return ProcessPaths(n_paths, dim, first_node, last_node, /*deterministic=*/true);
    }

    /// Deterministic block filled with a constant.
    static ProcessPaths constant(double value, std::size_t n_paths, std::size_t dim,
                                 std::size_t first_node, std::size_t last_node) {
        ProcessPaths p = deterministic(n_paths, dim, first_node, last_node);
        for (double& v : p.data_) v = value;
        return p;
    }

    /// Deterministic block sampled from a function of node time (all
    /// components equal).  fn must return finite values.
    static ProcessPaths from_time_function(const std::function<double(double)>& fn,
                                           const TimeGrid& grid, std::size_t n_paths, std::size_t dim,
                                           std::size_t first_node, std::size_t last_node) {
        ProcessPaths p = deterministic(n_paths, dim, first_node, last_node);
        for (std::size_t k = first_node; k <= last_node; ++k) {
            const double v = fn(grid.node_time(k));
            if (!std::isfinite(v))
                throw Error(ErrorCode::NonFiniteValue,
                            "time function produced " + std::to_string(v) + " at node " + std::to_string(k));
            for (std::size_t c = 0; c < dim; ++c) p.set(0, k, c, v);
        }
        return p;
    }

    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t first_node() const noexcept { return first_node_; }
    std::size_t last_node() const noexcept { return last_node_; }
    std::size_t n_nodes() const noexcept { return last_node_ - first_node_ + 1; }
    bool deterministic_flag() const noexcept { return deterministic_; }
    bool covers(std::size_t node) const noexcept { return node >= first_node_ && node <= last_node_; }

    double at(std::size_t path, std::size_t node, std::size_t comp = 0) const {
        return data_[offset(path, node, comp)];
    }

    void set(std::size_t path, std::size_t node, std::size_t comp, double v) {
        data_[offset(path, node, comp)] = v;
    }
    void set(std::size_t path, std::size_t node, double v) { set(path, node, 0, v); }

    /// Pointer to the contiguous (node, comp) row of one stored path.
    /// With deterministic storage every logical path aliases row 0.
    const double* row(std::size_t path) const noexcept {
        const std::size_t sp = deterministic_ ? 0 : path;
        return data_.data() + sp * n_nodes() * dim_;
    }

    /// Bounds-checked read that names the offending node, for callers
    /// validating externally supplied indices.
    double at_checked(std::size_t path, std::size_t node, std::size_t comp = 0) const {
        if (path >= n_paths_)
            throw Error(ErrorCode::NodeOutOfRange, "path " + std::to_string(path) + " out of range");
        if (!covers(node))
            throw Error(ErrorCode::NodeOutOfRange,
                        "node " + std::to_string(node) + " outside covered range [" +
                            std::to_string(first_node_) + ", " + std::to_string(last_node_) + "]");
        if (comp >= dim_)
            throw Error(ErrorCode::NodeOutOfRange, "component " + std::to_string(comp) + " out of range");
        return at(path, node, comp);
    }

    /// True if every stored value is finite.
    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    ProcessPaths(std::size_t n_paths, std::size_t dim,
                 std::size_t first_node, std::size_t last_node, bool deterministic)
        : n_paths_(n_paths), dim_(dim), first_node_(first_node), last_node_(last_node),
          deterministic_(deterministic) {
        if (n_paths == 0 || dim == 0)
            throw Error(ErrorCode::DegenerateDimensions,
                        "n_paths and dim must be positive, got n_paths=" + std::to_string(n_paths) +
                            " dim=" + std::to_string(dim));
        if (last_node < first_node)
            throw Error(ErrorCode::RangeMismatch,
                        "node range [" + std::to_string(first_node) + ", " + std::to_string(last_node) +
                            "] is empty");
        const std::size_t stored = deterministic ? 1 : n_paths;
        data_.assign(stored * n_nodes() * dim_, 0.0);
    }

    std::size_t offset(std::size_t path, std::size_t node, std::size_t comp) const noexcept {
        const std::size_t sp = deterministic_ ? 0 : path;
        return (sp * n_nodes() + (node - first_node_)) * dim_ + comp;
    }

    std::size_t n_paths_;
    std::size_t dim_;
    std::size_t first_node_;
    std::size_t last_node_;
    bool deterministic_;
    std::vector<double> data_;
};

/// The same values under a different logical path count: deterministic
/// blocks are re-broadcast, stochastic blocks must already match exactly.
inline ProcessPaths with_path_count(const ProcessPaths& src, std::size_t n_paths,
                                    const char* what = "process block") {
    if (!src.deterministic_flag()) {
        if (src.n_paths() != n_paths)
            throw Error(ErrorCode::RangeMismatch,
                        std::string(what) + " carries " + std::to_string(src.n_paths()) +
                            " paths, caller wants " + std::to_string(n_paths));
        return src;
    }
    if (src.n_paths() == n_paths) return src;
    ProcessPaths out =
        ProcessPaths::deterministic(n_paths, src.dim(), src.first_node(), src.last_node());
    for (std::size_t k = src.first_node(); k <= src.last_node(); ++k)
        for (std::size_t c = 0; c < src.dim(); ++c) out.set(0, k, c, src.at(0, k, c));
    return out;
}

}  // namespace iabsde

#endif  // IABSDE_PATHS_HPP
