#ifndef IABSDE_SDDE_HPP
#define IABSDE_SDDE_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "iabsde/brownian.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/kernels.hpp"
#include "iabsde/parallel.hpp"
#include "iabsde/paths.hpp"

namespace iabsde {

/**
 * Euler scheme for the linear delay equation
 *
 *     dX_s = mu(s) * (int_t^s X_r dr) ds  +  nu(s) * (int_t^s X_r dr) dW_s,
 *     X_t = 1,   X == 0 before t,
 *
 * on grid nodes [start_node, horizon].  Both coefficients multiply the
 * running memory integral; the zero pre-history makes the lower limit t.
 *
 * Scheme: left-point Euler-Maruyama for X, trapezoidal update for the memory
 * integral I.  Each step uses I at the left node, then advances
 * I += dt/2 * (X_left + X_right).
 *
 * nu identically zero (every component) collapses the simulation to its
 * deterministic form: one stored path, deterministic_flag set.
 */
inline ProcessPaths simulate_isdde(const TimeKernel& mu, const std::vector<TimeKernel>& nu,
                                   const TimeGrid& grid, std::size_t start_node,
                                   const BrownianBundle& bundle) {
    if (!bundle.grid().same_layout(grid))
        throw Error(ErrorCode::RangeMismatch, "bundle was drawn on a different grid");
    if (start_node >= grid.horizon_node())
        throw Error(ErrorCode::NodeOutOfRange,
                    "start node " + std::to_string(start_node) + " must lie before the horizon node " +
                        std::to_string(grid.horizon_node()));
    if (nu.size() != bundle.m())
        throw Error(ErrorCode::RangeMismatch,
                    "nu has " + std::to_string(nu.size()) + " components for a bundle with m=" +
                        std::to_string(bundle.m()));

    bool deterministic = true;
    for (const TimeKernel& k : nu)
        if (!k.identically_zero()) deterministic = false;

    const std::size_t h = grid.horizon_node();
    const std::size_t n_paths = bundle.n_paths();

    // Coefficient values are shared across paths; evaluate once per node.
    std::vector<double> mu_at(h - start_node + 1);
    std::vector<std::vector<double>> nu_at(nu.size(), std::vector<double>(h - start_node + 1));
    for (std::size_t k = start_node; k <= h; ++k) {
        const double s = grid.node_time(k);
        mu_at[k - start_node] = mu(s);
        for (std::size_t c = 0; c < nu.size(); ++c) nu_at[c][k - start_node] = nu[c](s);
    }

    ProcessPaths out = deterministic ? ProcessPaths::deterministic(n_paths, 1, start_node, h)
                                     : ProcessPaths::zeros(n_paths, 1, start_node, h);
    const std::size_t stored = deterministic ? 1 : n_paths;

    parallel_for(stored, [&](std::size_t pb, std::size_t pe) {
        for (std::size_t p = pb; p < pe; ++p) {
            double x = 1.0;
            double mem = 0.0;  // trapezoidal int_t^s X dr
            out.set(p, start_node, 0, x);
            for (std::size_t k = start_node; k < h; ++k) {
                const double dt = grid.step_width(k);
                double drift = mu_at[k - start_node] * mem * dt;
                double diff = 0.0;
                if (!deterministic)
                    for (std::size_t c = 0; c < nu.size(); ++c)
                        diff += nu_at[c][k - start_node] * mem * bundle.increment(p, k, c);
                const double x_next = x + drift + diff;
                mem += 0.5 * dt * (x + x_next);
                x = x_next;
                out.set(p, k + 1, 0, x);
            }
        }
    });

    // A blown-up path is a hard error naming the first bad node.
    for (std::size_t k = start_node; k <= h; ++k)
        for (std::size_t p = 0; p < stored; ++p)
            if (!std::isfinite(out.at(p, k)))
                throw Error(ErrorCode::NonFiniteValue,
                            "simulated path " + std::to_string(p) + " non-finite at node " + std::to_string(k));
    return out;
}

}  // namespace iabsde

#endif  // IABSDE_SDDE_HPP
