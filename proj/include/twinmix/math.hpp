#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace twinmix {

inline constexpr double kLog2Pi = 1.8378770664093453;

double norm_cdf(double x);

// Standard normal quantile. Throws twinmix::invalid_argument unless 0 < p < 1.
// Absolute error <= 1e-9 over (1e-12, 1 - 1e-12).
double norm_quantile(double p);

// Upper tail of the chi-squared distribution with one degree of freedom.
double chi2_1_sf(double x);

// Quantile of the chi-squared distribution with one degree of freedom.
double chi2_1_quantile(double p);

// Quantile of the mixture (1-w) * chi2_0 + w * chi2_1 (point mass at zero
// plus a chi-squared(1) tail with weight w).
double mixture_chi2_quantile(double q, double w);

// CDF of the same mixture, evaluated at x >= 0.
double mixture_chi2_cdf(double x, double w);

double mean(std::span<const double> xs);
double sample_sd(std::span<const double> xs);

// Order-statistic quantile with linear interpolation (R type 7).
// `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double q);

// Kolmogorov-Smirnov distance between the empirical law of `sorted`
// (ascending) and a reference CDF. `cdf_left` supplies the left limit
// F(x-) where the reference has atoms; for continuous references both
// arguments coincide.
template <class Cdf, class CdfLeft>
double ks_distance(std::span<const double> sorted, Cdf&& cdf, CdfLeft&& cdf_left) {
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        d = std::max(d, std::fabs(static_cast<double>(j + 1) / n - cdf(sorted[i])));
        d = std::max(d, std::fabs(static_cast<double>(i) / n - cdf_left(sorted[i])));
        i = j + 1;
    }
    return d;
}

template <class Cdf>
double ks_distance(std::span<const double> sorted, Cdf&& cdf) {
    return ks_distance(sorted, cdf, cdf);
}

}  // namespace twinmix
