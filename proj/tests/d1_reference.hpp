#ifndef IABSDE_TESTS_D1_REFERENCE_HPP
#define IABSDE_TESTS_D1_REFERENCE_HPP

#include <gtest/gtest.h>

#include <cmath>
#include <cstddef>
#include <vector>

namespace iabsde_tests {

// ---------------------------------------------------------------------------
// Independent reference for the flagship deterministic instance
//
//   Y(t) = 1 + int_t^1 ( int_s^1 e^{-r} Y(r) dr + int_1^5 e^{-r} dr ) ds,
//
// solved on its own fine grid by a damped fixed-point sweep with trapezoid
// quadrature for both integrals.  Nothing here touches the library under
// test: this is a plain integral-equation iteration, converged to 1e-10 in
// the undamped residual, against which both the backward scheme and the
// forward dual representation must land within their O(dt) budgets.
// ---------------------------------------------------------------------------
inline std::vector<double> reference_solution(std::size_t n, double damping = 0.5) {
    const double dt = 1.0 / static_cast<double>(n);
    const double tail = std::exp(-1.0) - std::exp(-5.0);
    std::vector<double> y(n + 1, 1.0), g(n + 1), suffix(n + 1), rhs(n + 1);
    for (int iter = 0; iter < 500; ++iter) {
        for (std::size_t k = 0; k <= n; ++k)
            g[k] = std::exp(-static_cast<double>(k) * dt) * y[k];
        suffix[n] = 0.0;
        for (std::size_t k = n; k-- > 0;) suffix[k] = suffix[k + 1] + 0.5 * dt * (g[k] + g[k + 1]);

        rhs[n] = 1.0;
        for (std::size_t k = n; k-- > 0;)
            rhs[k] = rhs[k + 1] + 0.5 * dt * (suffix[k] + tail + suffix[k + 1] + tail);

        double defect = 0.0;
        for (std::size_t k = 0; k <= n; ++k) defect = std::max(defect, std::abs(rhs[k] - y[k]));
        for (std::size_t k = 0; k <= n; ++k) y[k] += damping * (rhs[k] - y[k]);
        if (defect <= 1e-10) return y;
    }
    ADD_FAILURE() << "reference iteration did not reach 1e-10";
    return y;
}

inline double reference_y0() {
    static const double v = reference_solution(10000)[0];
    return v;
}

}  // namespace iabsde_tests

#endif  // IABSDE_TESTS_D1_REFERENCE_HPP
