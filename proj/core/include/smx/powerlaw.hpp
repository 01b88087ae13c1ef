#pragma once

#include <span>
#include <utility>

namespace smx {

// Fit of E = A * C^{-alpha} by ordinary least squares in log-log space.
// alpha is positive for decreasing trends; alpha_stderr is the OLS slope
// standard error.
struct PowerLawFit {
    double alpha = 0.0;
    double amplitude = 0.0;
    double alpha_stderr = 0.0;
    int n_points = 0;
};

PowerLawFit
fit_power_law(std::span<const std::pair<double, double>> points);

} // namespace smx
