#include "twinmix/math.hpp"

#include <algorithm>
#include <cmath>

#include "twinmix/errors.hpp"

namespace twinmix {

double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace {

// Acklam's rational approximation to the standard normal quantile,
// accurate to ~1.15e-9 relative before refinement.
double norm_quantile_approx(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace

namespace {

// Lower-half solver (p <= 0.5). Here x <= 0, so the erfc argument is
// nonnegative and Phi(x) keeps full relative precision, which lets the
// Halley step against the CDF land near machine accuracy.
double norm_quantile_lower(double p) {
    double x = norm_quantile_approx(p);
    for (int i = 0; i < 2; ++i) {
        const double e = 0.5 * std::erfc(-x * M_SQRT1_2) - p;
        const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

}  // namespace

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw invalid_argument("norm_quantile: p must lie strictly inside (0,1)");
    }
    // 1-p is exact for p >= 0.5, so the upper tail reduces to the lower one
    // without losing precision.
    if (p > 0.5) return -norm_quantile_lower(1.0 - p);
    return norm_quantile_lower(p);
}

double chi2_1_sf(double x) {
    if (x < 0.0) throw invalid_argument("chi2_1_sf: negative statistic");
    return std::erfc(std::sqrt(0.5 * x));
}

double chi2_1_quantile(double p) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw invalid_argument("chi2_1_quantile: p must lie in [0,1)");
    }
    if (p == 0.0) return 0.0;
    const double z = norm_quantile(0.5 * (1.0 + p));
    return z * z;
}

double mixture_chi2_quantile(double q, double w) {
    if (!(q >= 0.0 && q < 1.0)) {
        throw invalid_argument("mixture_chi2_quantile: q must lie in [0,1)");
    }
    if (!(w > 0.0 && w <= 1.0)) {
        throw invalid_argument("mixture_chi2_quantile: weight must lie in (0,1]");
    }
    if (q <= 1.0 - w) return 0.0;
    return chi2_1_quantile((q - (1.0 - w)) / w);
}

double mixture_chi2_cdf(double x, double w) {
    if (x < 0.0) return 0.0;
    return (1.0 - w) + w * (1.0 - chi2_1_sf(x));
}

double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw invalid_argument("quantile_sorted: empty sample");
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace twinmix
