#ifndef IABSDE_GRID_HPP
#define IABSDE_GRID_HPP

#include <cmath>
#include <cstddef>
#include <string>

#include "iabsde/errors.hpp"

namespace iabsde {

/**
 * Uniform discretization of the solve window [0, T] together with a uniform
 * truncation [T, T_tail] of the unbounded time axis the data live on.
 *
 * Node layout (index k runs over 0 .. n_nodes()-1):
 *
 *     0, dt, 2*dt, ..., T,  T + dt_tail, ..., T_tail
 *     |------ n_steps ----|-------- n_tail_steps --------|
 *
 * Node times on [0, T] are always computed as k * dt (never accumulated), so
 * they are exactly reconstructible from (T, n_steps) and T itself is a node.
 * Everything downstream — simulation, quadrature, the backward solver —
 * shares one of these grids; indices are the common currency.
 */
class TimeGrid {
public:
    /// Validating factory.  Throws NonPositiveHorizon, TailBeforeHorizon or
    /// ZeroSteps on bad arguments.
    static TimeGrid make(double T, double T_tail, std::size_t n_steps, std::size_t n_tail_steps) {
        if (!(T > 0.0) || !std::isfinite(T))
            throw Error(ErrorCode::NonPositiveHorizon, "T must be finite and > 0, got " + std::to_string(T));
        if (!(T_tail > T) || !std::isfinite(T_tail))
            throw Error(ErrorCode::TailBeforeHorizon,
                        "T_tail (" + std::to_string(T_tail) + ") must exceed T (" + std::to_string(T) + ")");
        if (n_steps == 0 || n_tail_steps == 0)
            throw Error(ErrorCode::ZeroSteps, "n_steps and n_tail_steps must both be positive");
        return TimeGrid(T, T_tail, n_steps, n_tail_steps);
    }

    double T() const noexcept { return T_; }
    double T_tail() const noexcept { return T_tail_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_tail_steps() const noexcept { return n_tail_steps_; }

    /// Step width on [0, T].
    double dt() const noexcept { return T_ / static_cast<double>(n_steps_); }
    /// Step width on [T, T_tail]; may differ from dt().
    double dt_tail() const noexcept { return (T_tail_ - T_) / static_cast<double>(n_tail_steps_); }

    /// Total node count, both segments, endpoints included once each.
    std::size_t n_nodes() const noexcept { return n_steps_ + n_tail_steps_ + 1; }
    /// Index of the node sitting exactly at T.
    std::size_t horizon_node() const noexcept { return n_steps_; }
    /// Index of the last node (time T_tail).
    std::size_t last_node() const noexcept { return n_steps_ + n_tail_steps_; }

    /// Time of node k.  Throws NodeOutOfRange past the end.
    double node_time(std::size_t k) const {
        if (k > last_node())
            throw Error(ErrorCode::NodeOutOfRange,
                        "node " + std::to_string(k) + " outside grid with " + std::to_string(n_nodes()) + " nodes");
        if (k <= n_steps_) return static_cast<double>(k) * dt();
        return T_ + static_cast<double>(k - n_steps_) * dt_tail();
    }

    /// Width of the step from node k to node k+1.
    double step_width(std::size_t k) const {
        if (k >= last_node())
            throw Error(ErrorCode::NodeOutOfRange, "step " + std::to_string(k) + " has no right node");
        return k < n_steps_ ? dt() : dt_tail();
    }

    bool same_layout(const TimeGrid& o) const noexcept {
        return T_ == o.T_ && T_tail_ == o.T_tail_ && n_steps_ == o.n_steps_ && n_tail_steps_ == o.n_tail_steps_;
    }

private:
    TimeGrid(double T, double T_tail, std::size_t n_steps, std::size_t n_tail_steps)
        : T_(T), T_tail_(T_tail), n_steps_(n_steps), n_tail_steps_(n_tail_steps) {}

    double T_;
    double T_tail_;
    std::size_t n_steps_;
    std::size_t n_tail_steps_;
};

inline TimeGrid make_grid(double T, double T_tail, std::size_t n_steps, std::size_t n_tail_steps) {
    return TimeGrid::make(T, T_tail, n_steps, n_tail_steps);
}

}  // namespace iabsde

#endif  // IABSDE_GRID_HPP
