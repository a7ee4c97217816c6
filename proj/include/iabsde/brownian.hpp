#ifndef IABSDE_BROWNIAN_HPP
#define IABSDE_BROWNIAN_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/philox.hpp"

namespace iabsde {

/// Identity of a bundle for common-random-number checks: two solves may only
/// be compared pathwise if these match exactly.
struct BundleId {
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    std::size_t m = 0;
    bool dense = false;

    bool operator==(const BundleId&) const = default;
};

/**
 * Brownian increments for every (path, step on [0, T_tail), component).
 *
 * Each increment is Normal(0, step width), drawn by the counter-based
 * generator keyed on (seed, path, step, component) — no sequential state, so
 * the same cell always reproduces the same bits and increments need not be
 * materialized.  The default mode therefore stores nothing; hot loops that
 * walk the interior [0, T) repeatedly can ask for a cached copy.
 *
 * A dense bundle wraps caller-supplied increments (tests splice bundles this
 * way to probe adaptedness).  Dense bundles carry dense=true in their id and
 * never compare equal to lazy ones.
 */
class BrownianBundle {
public:
    /// Counter-based bundle over the full grid [0, T_tail).
    static BrownianBundle lazy(const TimeGrid& grid, std::size_t n_paths, std::size_t m,
                               std::uint64_t seed) {
        if (n_paths == 0 || m == 0)
            throw Error(ErrorCode::DegenerateDimensions, "bundle needs n_paths >= 1 and m >= 1");
        return BrownianBundle(grid, n_paths, m, seed, nullptr);
    }

    /// Bundle with explicit increments, indexed [path][step][comp] flattened.
    /// The label seed only feeds the id.
    static BrownianBundle dense(const TimeGrid& grid, std::size_t n_paths, std::size_t m,
                                std::uint64_t label_seed, std::vector<double> increments) {
        if (n_paths == 0 || m == 0)
            throw Error(ErrorCode::DegenerateDimensions, "bundle needs n_paths >= 1 and m >= 1");
        const std::size_t want = n_paths * grid.last_node() * m;
        if (increments.size() != want)
            throw Error(ErrorCode::RangeMismatch,
                        "dense bundle expects " + std::to_string(want) + " increments, got " +
                            std::to_string(increments.size()));
        auto data = std::make_shared<std::vector<double>>(std::move(increments));
        return BrownianBundle(grid, n_paths, m, label_seed, std::move(data));
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t m() const noexcept { return m_; }
    std::uint64_t seed() const noexcept { return seed_; }

    BundleId id() const noexcept { return BundleId{seed_, n_paths_, m_, data_ != nullptr}; }

    /// Total number of steps (increments per path per component).
    std::size_t n_steps_total() const noexcept { return grid_.last_node(); }

    /// Increment of component c over [t_step, t_{step+1}] on path p.
    double increment(std::size_t path, std::size_t step, std::size_t comp) const {
        if (path >= n_paths_ || step >= n_steps_total() || comp >= m_)
            throw Error(ErrorCode::NodeOutOfRange,
                        "bundle cell (" + std::to_string(path) + ", " + std::to_string(step) + ", " +
                            std::to_string(comp) + ") out of range");
        if (data_) return (*data_)[(path * n_steps_total() + step) * m_ + comp];
        const double z = counter_normal(seed_, path, step, static_cast<std::uint32_t>(comp));
        return z * std::sqrt(grid_.step_width(step));
    }

    /**
     * Materialize increments for steps [0, n_steps_interior) of every path
     * into a flat [path][step][comp] buffer.  One pass of counter draws; the
     * solver builds this once per solve and frees it with the solve.
     */
    std::vector<double> materialize(std::size_t n_steps_interior) const {
        if (n_steps_interior > n_steps_total())
            throw Error(ErrorCode::NodeOutOfRange, "materialize range past bundle end");
        std::vector<double> out(n_paths_ * n_steps_interior * m_);
        for (std::size_t p = 0; p < n_paths_; ++p)
            for (std::size_t s = 0; s < n_steps_interior; ++s)
                for (std::size_t c = 0; c < m_; ++c)
                    out[(p * n_steps_interior + s) * m_ + c] = increment(p, s, c);
        return out;
    }

private:
    BrownianBundle(const TimeGrid& grid, std::size_t n_paths, std::size_t m, std::uint64_t seed,
                   std::shared_ptr<std::vector<double>> data)
        : grid_(grid), n_paths_(n_paths), m_(m), seed_(seed), data_(std::move(data)) {}

    TimeGrid grid_;
    std::size_t n_paths_;
    std::size_t m_;
    std::uint64_t seed_;
    std::shared_ptr<std::vector<double>> data_;  // nullptr => counter-based
};

inline BrownianBundle simulate_brownian(const TimeGrid& grid, std::size_t n_paths, std::size_t m,
                                        std::uint64_t seed) {
    return BrownianBundle::lazy(grid, n_paths, m, seed);
}

}  // namespace iabsde

#endif  // IABSDE_BROWNIAN_HPP
