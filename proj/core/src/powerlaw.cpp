#include "smx/powerlaw.hpp"

#include <cmath>

#include "smx/errors.hpp"

namespace smx {

PowerLawFit
fit_power_law(std::span<const std::pair<double, double>> points) {
    const int n = static_cast<int>(points.size());
    if (n < 3) {
        throw DomainError("fit_power_law: need at least 3 points, got " +
                          std::to_string(n));
    }
    for (const auto &[c, e] : points) {
        if (!(c > 0.0) || !(e > 0.0)) {
            throw DomainError("fit_power_law: compute and error values must "
                              "be positive");
        }
    }
    double sx = 0.0, sy = 0.0;
    for (const auto &[c, e] : points) {
        sx += std::log(c);
        sy += std::log(e);
    }
    const double xbar = sx / n, ybar = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto &[c, e] : points) {
        const double dx = std::log(c) - xbar;
        sxx += dx * dx;
        sxy += dx * (std::log(e) - ybar);
    }
    if (sxx == 0.0) {
        throw DomainError("fit_power_law: all compute values coincide");
    }
    const double slope = sxy / sxx;
    const double intercept = ybar - slope * xbar;
    double ssr = 0.0;
    for (const auto &[c, e] : points) {
        const double resid = std::log(e) - (intercept + slope * std::log(c));
        ssr += resid * resid;
    }
    const double sigma2 = ssr / static_cast<double>(n - 2);

    PowerLawFit fit;
    fit.alpha = -slope;
    fit.amplitude = std::exp(intercept);
    fit.alpha_stderr = std::sqrt(std::max(0.0, sigma2 / sxx));
    fit.n_points = n;
    return fit;
}

} // namespace smx
