#ifndef IABSDE_KERNELS_HPP
#define IABSDE_KERNELS_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "iabsde/errors.hpp"

namespace iabsde {

/**
 * A deterministic function of time with a little metadata on top.
 *
 * The identically_zero flag is what lets simulations collapse to their
 * deterministic form when a diffusion coefficient vanishes — a plain
 * std::function cannot be introspected, so zero-ness is declared at
 * construction by using the zero() factory.  The description feeds instance
 * listings and manifests.
 */
class TimeKernel {
public:
    static TimeKernel zero() {
        return TimeKernel([](double) { return 0.0; }, true, "0");
    }

    static TimeKernel constant(double c) {
        if (c == 0.0) return zero();
        return TimeKernel([c](double) { return c; }, false, fmt_num(c));
    }

    /// c * exp(-a * r)
    static TimeKernel exponential(double c, double a) {
        if (c == 0.0) return zero();
        return TimeKernel([c, a](double r) { return c * std::exp(-a * r); }, false,
                          fmt_num(c) + "*exp(-" + fmt_num(a) + "*r)");
    }

    /// c * r^p * exp(-a * r), integer power p >= 0
    static TimeKernel polyexp(double c, int p, double a) {
        if (c == 0.0) return zero();
        return TimeKernel([c, p, a](double r) { return c * std::pow(r, p) * std::exp(-a * r); }, false,
                          fmt_num(c) + "*r^" + std::to_string(p) + "*exp(-" + fmt_num(a) + "*r)");
    }

    static TimeKernel custom(std::function<double(double)> fn, std::string description) {
        return TimeKernel(std::move(fn), false, std::move(description));
    }

    bool identically_zero() const noexcept { return zero_; }
    const std::string& description() const noexcept { return desc_; }

    /// Evaluate; a non-finite result is a hard error naming the time.
    double operator()(double r) const {
        if (zero_) return 0.0;
        const double v = fn_(r);
        if (!std::isfinite(v))
            throw Error(ErrorCode::KernelEvaluationFailure,
                        "kernel '" + desc_ + "' returned non-finite value at r=" + fmt_num(r));
        return v;
    }

private:
    TimeKernel(std::function<double(double)> fn, bool zero, std::string desc)
        : fn_(std::move(fn)), zero_(zero), desc_(std::move(desc)) {}

    static std::string fmt_num(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

    std::function<double(double)> fn_;
    bool zero_;
    std::string desc_;
};

/// Closed-form mass of |c| e^{-ar} (resp. c r^p e^{-ar}) over [0, inf), used
/// by instance builders to declare integrability bounds that construction
/// then audits by quadrature.
inline double exponential_abs_mass(double c, double a) {
    if (c == 0.0) return 0.0;
    if (!(a > 0.0)) throw Error(ErrorCode::UnboundedFamily, "exponential kernel needs a > 0 for finite mass");
    return std::abs(c) / a;
}

inline double exponential_sq_mass(double c, double a) {
    if (c == 0.0) return 0.0;
    if (!(a > 0.0)) throw Error(ErrorCode::UnboundedFamily, "exponential kernel needs a > 0 for finite mass");
    return c * c / (2.0 * a);
}

inline double polyexp_abs_mass(double c, int p, double a) {
    if (c == 0.0) return 0.0;
    if (!(a > 0.0) || p < 0)
        throw Error(ErrorCode::UnboundedFamily, "polyexp kernel needs a > 0 and p >= 0 for finite mass");
    double fact = 1.0;
    for (int i = 2; i <= p; ++i) fact *= i;
    return std::abs(c) * fact / std::pow(a, p + 1);
}

}  // namespace iabsde

#endif  // IABSDE_KERNELS_HPP
