#include <algorithm>
#include <cmath>
#include <vector>

#include "twinmix/dataio.hpp"
#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"

namespace twinmix {

namespace {

// Polynomial with coefficients in ascending order.
double poly(const double* c, int n, double x) {
    double v = 0.0;
    for (int i = n - 1; i >= 0; --i) v = v * x + c[i];
    return v;
}

constexpr double kC1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
constexpr double kC2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
constexpr double kC3[4] = {0.5440, -0.39978, 0.025054, -6.714e-4};
constexpr double kC4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
constexpr double kC5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
constexpr double kC6[3] = {-0.4803, -0.082676, 0.0030302};
constexpr double kG[2] = {-2.273, 0.459};

}  // namespace

SwResult shapiro_wilk(std::span<const double> xs) {
    const int n = static_cast<int>(xs.size());
    if (n < 3 || n > 5000) {
        throw invalid_argument("shapiro_wilk: sample size must lie in [3, 5000]");
    }
    std::vector<double> x(xs.begin(), xs.end());
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    if (!(range > 0.0) || !std::isfinite(range)) {
        throw degenerate_data_error("shapiro_wilk: sample has zero range");
    }

    const double an = static_cast<double>(n);
    const int n2 = n / 2;

    // Expected normal order statistics for the lower half (negative), then
    // Royston's polynomial corrections for the two extreme weights.
    std::vector<double> m(static_cast<std::size_t>(n2));
    double summ2 = 0.0;
    for (int i = 0; i < n2; ++i) {
        m[static_cast<std::size_t>(i)] =
            norm_quantile((static_cast<double>(i) + 1.0 - 0.375) / (an + 0.25));
        summ2 += m[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);

    std::vector<double> a(static_cast<std::size_t>(n2));
    if (n == 3) {
        a[0] = std::sqrt(0.5);
    } else {
        const double a1 = poly(kC1, 6, rsn) - m[0] / ssumm2;
        int i1;
        double fac;
        if (n > 5) {
            i1 = 2;
            const double a2 = poly(kC2, 6, rsn) - m[1] / ssumm2;
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                            (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
        } else {
            i1 = 1;
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
        }
        a[0] = a1;
        for (int i = i1; i < n2; ++i) a[static_cast<std::size_t>(i)] = -m[static_cast<std::size_t>(i)] / fac;
    }

    // W as the squared correlation between the sorted sample and the
    // antisymmetric weight vector; scaling by the range keeps the sums tame.
    auto weight = [&](int i) -> double {  // weight for the i-th order statistic
        const int j = n - 1 - i;
        if (i < j) return -a[static_cast<std::size_t>(i)];
        if (i > j) return a[static_cast<std::size_t>(j)];
        return 0.0;
    };
    double sa = 0.0, sx = 0.0;
    for (int i = 0; i < n; ++i) {
        sa += weight(i);
        sx += x[static_cast<std::size_t>(i)] / range;
    }
    sa /= an;
    sx /= an;
    double ssa = 0.0, ssx = 0.0, sax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = weight(i) - sa;
        const double dx = x[static_cast<std::size_t>(i)] / range - sx;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    const double ssassx = std::sqrt(ssa * ssx);
    const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    const double w = 1.0 - w1;

    SwResult out;
    out.w = w;
    if (n == 3) {
        const double pi6 = 1.90985931710274;    // 6/pi
        const double stqr = 1.04719755119660;   // asin(sqrt(3/4))
        out.p = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
        return out;
    }
    double y = std::log(w1);
    double mu, sigma;
    if (n <= 11) {
        const double gamma = poly(kG, 2, an);
        if (y >= gamma) {
            out.p = 1e-99;
            return out;
        }
        y = -std::log(gamma - y);
        mu = poly(kC3, 4, an);
        sigma = std::exp(poly(kC4, 4, an));
    } else {
        const double lnn = std::log(an);
        mu = poly(kC5, 4, lnn);
        sigma = std::exp(poly(kC6, 3, lnn));
    }
    out.p = 1.0 - norm_cdf((y - mu) / sigma);
    return out;
}

}  // namespace twinmix
