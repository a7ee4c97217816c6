#ifndef IABSDE_MONTECARLO_HPP
#define IABSDE_MONTECARLO_HPP

#include <cmath>
#include <cstddef>
#include <span>

namespace iabsde {

/// A Monte Carlo point estimate with its standard error.  std_error is
/// exactly zero when the evaluation collapsed to a deterministic path.
struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/**
 * Sample mean and standard error (sd / sqrt(n)) of per-path functional
 * values.  A single sample reports its value with zero standard error — the
 * deterministic-collapse convention used throughout: one stored path, exact
 * result, no sampling noise to speak of.  n_paths records the logical path
 * count of the experiment, which may exceed values.size() under that
 * collapse.
 */
inline MonteCarloEstimate summarize_samples(std::span<const double> values, std::size_t n_paths) {
    MonteCarloEstimate mc;
    mc.n_paths = n_paths;
    if (values.empty()) return mc;
    if (values.size() == 1) {
        mc.estimate = values[0];
        return mc;
    }
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) {
        const double d = v - mean;
        ss += d * d;
    }
    mc.estimate = mean;
    mc.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1) /
                             static_cast<double>(values.size()));
    return mc;
}

}  // namespace iabsde

#endif  // IABSDE_MONTECARLO_HPP
