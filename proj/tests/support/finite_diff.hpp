#pragma once

// Central-difference gradient checking used across the test suites. The
// checker is deliberately independent of the analytic backward paths it
// validates: it only needs a scalar-valued closure.

#include <cmath>
#include <cstddef>
#include <functional>

namespace testsupport {

// d/dx f evaluated by the three-point rule.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Perturbs *slot in place, evaluates loss(), restores. Suitable for checking
// the gradient of a loss with respect to one parameter entry.
inline double central_diff_at(double* slot, const std::function<double()>& loss,
                              double h = 1e-5) {
    const double saved = *slot;
    *slot = saved + h;
    const double up = loss();
    *slot = saved - h;
    const double down = loss();
    *slot = saved;
    return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testsupport
