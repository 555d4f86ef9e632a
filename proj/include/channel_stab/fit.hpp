#pragma once

// Least-squares power-law fits y = C x^p on log-log axes.

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "channel_stab/errors.hpp"

namespace channel_stab {

struct PowerFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();  // log C
    double residual = 0.0;                                        // rms of log residuals
    double slope_ci95 = std::numeric_limits<double>::infinity();  // half-width, needs >= 3 points
    double pairwise_min = std::numeric_limits<double>::quiet_NaN();
    double pairwise_max = std::numeric_limits<double>::quiet_NaN();
    int points = 0;
};

/// Fit log y = intercept + slope * log x. Needs >= 2 points with distinct positive x and positive y.
inline PowerFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw InvalidArgument("fit_power_law: size mismatch");
    const int n = static_cast<int>(x.size());
    if (n < 2) throw InvalidArgument("fit_power_law: need at least 2 points");
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("fit_power_law: values must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw InvalidArgument("fit_power_law: x values must be distinct");
    PowerFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = ly[i] - f.intercept - f.slope * lx[i];
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    if (n >= 3) {
        const double se = std::sqrt(ss / (n - 2) / sxx);
        const boost::math::students_t dist(n - 2);
        f.slope_ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (lx[i] == lx[j]) continue;
            const double s = (ly[j] - ly[i]) / (lx[j] - lx[i]);
            if (std::isnan(f.pairwise_min) || s < f.pairwise_min) f.pairwise_min = s;
            if (std::isnan(f.pairwise_max) || s > f.pairwise_max) f.pairwise_max = s;
        }
    return f;
}

}  // namespace channel_stab
