#ifndef IABSDE_TERMINAL_HPP
#define IABSDE_TERMINAL_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "iabsde/errors.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/paths.hpp"

namespace iabsde {

/**
 * Prescribed solution data on the tail [T, T_tail]: the value process xi and
 * the martingale-density process eta the solution must match beyond the
 * horizon.  Construction precomputes the two per-path summaries every
 * consumer needs:
 *
 *   - tail_sup_xi:       sup of |xi| over the tail nodes (the anticipation
 *                        norm of the terminal condition), and
 *   - tail_weighted_eta: trapezoidal integral of e^{beta s} |eta_s|^2 over
 *                        [T, T_tail].
 *
 * xi is also screened for jumps: adjacent tail nodes may differ by at most
 * the continuity budget.  The default budget is 10 * dt_tail * (1 + max
 * |xi|), i.e. a slope allowance of ten value-scales per unit time; pass an
 * explicit budget to tighten or loosen it.
 */
class TerminalData {
public:
    TerminalData(ProcessPaths xi, ProcessPaths eta, const TimeGrid& grid, double beta,
                 double continuity_budget = -1.0)
        : xi_(std::move(xi)), eta_(std::move(eta)) {
        const std::size_t h = grid.horizon_node();
        const std::size_t e = grid.last_node();
        if (xi_.first_node() != h || xi_.last_node() != e)
            throw Error(ErrorCode::RangeMismatch, "xi must cover exactly the tail nodes [T, T_tail]");
        if (eta_.first_node() != h || eta_.last_node() != e)
            throw Error(ErrorCode::RangeMismatch, "eta must cover exactly the tail nodes [T, T_tail]");
        if (xi_.n_paths() != eta_.n_paths())
            throw Error(ErrorCode::RangeMismatch, "xi and eta disagree on the number of paths");
        if (!xi_.all_finite() || !eta_.all_finite())
            throw Error(ErrorCode::NonFiniteValue, "terminal data contains non-finite values");

        tail_sup_xi_ = discrete_sup_norm(xi_, h, 0.0);
        tail_weighted_eta_ = weighted_l2(eta_, grid, beta, h, e);

        check_continuity(grid, continuity_budget);
    }

    const ProcessPaths& xi() const noexcept { return xi_; }
    const ProcessPaths& eta() const noexcept { return eta_; }
    std::size_t n_paths() const noexcept { return xi_.n_paths(); }
    std::size_t d() const noexcept { return xi_.dim(); }

    bool deterministic_flag() const noexcept {
        return xi_.deterministic_flag() && eta_.deterministic_flag();
    }

    const std::vector<double>& tail_sup_xi() const noexcept { return tail_sup_xi_; }
    const std::vector<double>& tail_weighted_eta() const noexcept { return tail_weighted_eta_; }

private:
    void check_continuity(const TimeGrid& grid, double budget) const {
        if (budget < 0.0) {
            double peak = 0.0;
            for (double v : tail_sup_xi_) peak = std::max(peak, v);
            budget = 10.0 * grid.dt_tail() * (1.0 + peak);
        }
        const std::size_t stored = xi_.deterministic_flag() ? 1 : xi_.n_paths();
        for (std::size_t p = 0; p < stored; ++p)
            for (std::size_t k = grid.horizon_node(); k < grid.last_node(); ++k)
                for (std::size_t c = 0; c < xi_.dim(); ++c) {
                    const double jump = std::abs(xi_.at(p, k + 1, c) - xi_.at(p, k, c));
                    if (jump > budget)
                        throw Error(ErrorCode::DiscontinuousTerminal,
                                    "xi jumps by " + std::to_string(jump) + " between tail nodes " +
                                        std::to_string(k) + " and " + std::to_string(k + 1) +
                                        " (budget " + std::to_string(budget) + ")");
                }
    }

    ProcessPaths xi_;
    ProcessPaths eta_;
    std::vector<double> tail_sup_xi_;
    std::vector<double> tail_weighted_eta_;
};

}  // namespace iabsde

#endif  // IABSDE_TERMINAL_HPP
