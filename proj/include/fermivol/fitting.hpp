#ifndef FERMIVOL_FITTING_HPP
#define FERMIVOL_FITTING_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fermivol {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;          // coefficient of determination
    double rss = 0.0;         // residual sum of squares
    double slope_se = 0.0;    // standard error of the slope
    std::size_t n = 0;
};

// Ordinary or weighted least squares of y against x. Weights are 1/sigma^2;
// pass an empty sigma vector for OLS.
inline LinearFit fit_linear(const std::vector<double>& x,
                            const std::vector<double>& y,
                            const std::vector<double>& sigma = {}) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_linear: need >= 2 points");
    if (!sigma.empty() && sigma.size() != x.size())
        throw std::invalid_argument("fit_linear: sigma size mismatch");
    const std::size_t n = x.size();
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1.0;
        if (!sigma.empty()) {
            if (sigma[i] <= 0) throw std::invalid_argument("fit_linear: sigma <= 0");
            w = 1.0 / (sigma[i] * sigma[i]);
        }
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    double denom = sw * sxx - sx * sx;
    if (std::fabs(denom) < 1e-300)
        throw std::invalid_argument("fit_linear: degenerate abscissae");
    LinearFit f;
    f.n = n;
    f.slope = (sw * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / sw;
    double ybar = sy / sw, sstot = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double w = sigma.empty() ? 1.0 : 1.0 / (sigma[i] * sigma[i]);
        double r = y[i] - (f.intercept + f.slope * x[i]);
        f.rss += w * r * r;
        sstot += w * (y[i] - ybar) * (y[i] - ybar);
    }
    f.r2 = sstot > 0 ? 1.0 - f.rss / sstot : 1.0;
    if (n > 2) {
        double s2 = f.rss / static_cast<double>(n - 2);
        f.slope_se = std::sqrt(s2 * sw / denom);
    }
    return f;
}

}  // namespace fermivol

#endif
