#include "twinmix/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"
#include "twinmix/parallel.hpp"
#include "twinmix/rng.hpp"

namespace twinmix {

namespace {

constexpr double kNegativeStatTol = 1e-6;

std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<PairObs> resample(std::span<const PairObs> pairs, Rng& rng) {
    std::vector<PairObs> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out.push_back(pairs[rng.below(pairs.size())]);
    }
    return out;
}

double extract(const ModelParams& p, Target t) {
    switch (t) {
        case Target::rho_m: return p.rho_m;
        case Target::rho_d: return p.rho_d;
        case Target::delta: return p.rho_m - p.rho_d;
    }
    throw invalid_argument("unknown bootstrap target");
}

}  // namespace

const char* target_name(Target t) {
    switch (t) {
        case Target::rho_m: return "rho_m";
        case Target::rho_d: return "rho_d";
        case Target::delta: return "delta";
    }
    return "?";
}

double a_n_empirical(int n_m) {
    if (n_m < 1) throw invalid_argument("a_n_empirical: n_m must be >= 1");
    return 0.5 + 6.828 / static_cast<double>(n_m);
}

LrtResult lrt_homogeneity(std::span<const PairObs> mz, std::span<const PairObs> dz,
                          const FitOptions& opts) {
    FitOptions o = opts;
    for (int attempt = 0; attempt < 3; ++attempt) {
        FitResult null_fit = fit_combined_null(mz, dz, o);
        // Anchoring one start at the null solution keeps the unrestricted
        // fit at least as good as the restricted one, so R >= 0 up to inner
        // tolerance.
        FitOptions ou = o;
        ou.warm_start = null_fit.params;
        FitResult full_fit = fit_combined(mz, dz, ou);

        double r = 2.0 * (full_fit.loglik - null_fit.loglik);
        if (r >= -kNegativeStatTol) {
            LrtResult out;
            // Magnitudes below the optimizer's resolution are exact zeros;
            // the null law puts an atom there and sub-tolerance positives
            // are fit noise, not evidence.
            out.statistic = std::fabs(r) <= kNegativeStatTol ? 0.0 : r;
            out.a_n = a_n_empirical(static_cast<int>(mz.size()));
            if (out.statistic > 0.0) {
                const double tail = chi2_1_sf(out.statistic);
                out.p_unadjusted = 0.5 * tail;
                out.p_adjusted = std::min(1.0, out.a_n * tail);
            } else {
                out.p_unadjusted = 1.0;
                out.p_adjusted = 1.0;
            }
            out.fit_unrestricted = std::move(full_fit);
            out.fit_null = std::move(null_fit);
            return out;
        }
        o.n_starts *= 2;
    }
    throw convergence_error(
        "lrt_homogeneity: statistic stayed below -1e-6 after doubling restarts");
}

CalibrationReport calibrate_an(const std::vector<std::pair<int, int>>& grid, int n_reps,
                               std::uint64_t seed, const FitOptions& opts, int threads) {
    if (grid.empty()) throw invalid_argument("calibrate_an: empty grid");
    if (n_reps < 100) throw invalid_argument("calibrate_an: n_reps must be >= 100");

    CalibrationReport report;
    report.fixed_intercept = 0.5;
    const BvnParams std_normal{0.0, 0.0, 0.0, 1.0};

    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        const auto [n_m, n_d] = grid[ci];
        if (n_m < 3 || n_d < 3) throw invalid_argument("calibrate_an: cell sizes must be >= 3");

        std::vector<double> stats(static_cast<std::size_t>(n_reps));
        std::vector<char> ok(static_cast<std::size_t>(n_reps), 0);
        parallel_for(n_reps, threads, [&](std::int64_t r) {
            Rng rng(derive_seed(seed, {0xCA11BULL, ci, static_cast<std::uint64_t>(r)}));
            std::vector<PairObs> mz(static_cast<std::size_t>(n_m));
            std::vector<PairObs> dz(static_cast<std::size_t>(n_d));
            for (auto& p : mz) p = sample_pair(rng, std_normal);
            for (auto& p : dz) p = sample_pair(rng, std_normal);
            FitOptions fo = opts;
            fo.seed = derive_seed(seed, {0xF177ULL, ci, static_cast<std::uint64_t>(r)});
            try {
                const LrtResult lrt = lrt_homogeneity(mz, dz, fo);
                if (!lrt.fit_unrestricted.converged || !lrt.fit_null.converged) return;
                stats[static_cast<std::size_t>(r)] = lrt.statistic;
                ok[static_cast<std::size_t>(r)] = 1;
            } catch (const error&) {
                // dropped; counted below
            }
        });

        double sum = 0.0;
        int n_ok = 0;
        for (int r = 0; r < n_reps; ++r) {
            if (ok[static_cast<std::size_t>(r)]) {
                sum += stats[static_cast<std::size_t>(r)];
                ++n_ok;
            }
        }
        const int n_failed = n_reps - n_ok;
        if (n_failed > n_reps / 100) {
            throw convergence_error("calibrate_an: cell (" + std::to_string(n_m) + "," +
                                    std::to_string(n_d) + ") had " + std::to_string(n_failed) +
                                    " failed replicates");
        }
        report.grid.push_back({n_m, n_d, sum / static_cast<double>(n_ok), n_failed});
    }

    // Least squares for a_hat = 0.5 + a/n_m with the intercept pinned.
    double sxy = 0.0, sxx = 0.0;
    for (const auto& cell : report.grid) {
        const double x = 1.0 / static_cast<double>(cell.n_m);
        sxy += x * (cell.a_hat - 0.5);
        sxx += x * x;
    }
    report.fitted_slope = sxy / sxx;
    double ssr = 0.0;
    for (const auto& cell : report.grid) {
        const double x = 1.0 / static_cast<double>(cell.n_m);
        const double res = cell.a_hat - 0.5 - report.fitted_slope * x;
        ssr += res * res;
    }
    report.residual_sd = report.grid.size() > 1
                             ? std::sqrt(ssr / static_cast<double>(report.grid.size() - 1))
                             : 0.0;
    return report;
}

std::string calibration_to_csv(const CalibrationReport& report) {
    std::string out = "n_M,n_D,a_hat\n";
    for (const auto& cell : report.grid) {
        out += std::to_string(cell.n_m) + "," + std::to_string(cell.n_d) + "," +
               format_double(cell.a_hat) + "\n";
    }
    return out;
}

BootstrapResult bootstrap_percentile(std::span<const PairObs> mz, std::span<const PairObs> dz,
                                     const PairStatistic& estimator, double point, int n_boot,
                                     double level, std::uint64_t seed, int threads) {
    if (n_boot < 100) throw invalid_argument("bootstrap: n_boot must be >= 100");
    if (!(level > 0.0 && level < 1.0)) {
        throw invalid_argument("bootstrap: level must lie strictly inside (0,1)");
    }
    if (mz.empty() || dz.empty()) throw invalid_argument("bootstrap: empty stratum");

    std::vector<double> values(static_cast<std::size_t>(n_boot));
    std::vector<char> ok(static_cast<std::size_t>(n_boot), 0);
    parallel_for(n_boot, threads, [&](std::int64_t r) {
        Rng rng(derive_seed(seed, {0xB007ULL, static_cast<std::uint64_t>(r)}));
        const std::vector<PairObs> bmz = resample(mz, rng);
        const std::vector<PairObs> bdz = resample(dz, rng);
        try {
            values[static_cast<std::size_t>(r)] = estimator(
                bmz, bdz, derive_seed(seed, {0xB007F17ULL, static_cast<std::uint64_t>(r)}));
            ok[static_cast<std::size_t>(r)] = 1;
        } catch (const error&) {
            // dropped; counted below
        }
    });

    BootstrapResult out;
    out.point = point;
    out.level = level;
    out.n_boot = n_boot;
    for (int r = 0; r < n_boot; ++r) {
        if (ok[static_cast<std::size_t>(r)]) {
            out.replicates.push_back(values[static_cast<std::size_t>(r)]);
        }
    }
    out.n_failed = n_boot - static_cast<int>(out.replicates.size());
    out.flagged = out.n_failed * 20 > n_boot;  // > 5%
    if (out.replicates.empty()) {
        throw convergence_error("bootstrap: every replicate failed to fit");
    }
    std::vector<double> sorted = out.replicates;
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 0.5 * (1.0 - level);
    out.ci_low = quantile_sorted(sorted, alpha);
    out.ci_high = quantile_sorted(sorted, 1.0 - alpha);
    return out;
}

BootstrapResult bootstrap_ci(std::span<const PairObs> mz, std::span<const PairObs> dz,
                             Target target, int n_boot, double level, std::uint64_t seed,
                             const FitOptions& opts, int threads) {
    const FitResult original = fit_combined(mz, dz, opts);
    if (!original.converged) {
        throw convergence_error("bootstrap_ci: fit on the original data did not converge");
    }
    FitOptions refit = opts;
    refit.warm_start = original.params;
    refit.n_starts = 1;  // warm start plus one fresh moment start

    const auto estimator = [&refit, target](std::span<const PairObs> bmz,
                                            std::span<const PairObs> bdz,
                                            std::uint64_t rep_seed) {
        FitOptions o = refit;
        o.seed = rep_seed;
        const FitResult f = fit_combined(bmz, bdz, o);
        if (!f.converged) throw convergence_error("bootstrap replicate did not converge");
        return extract(f.params, target);
    };
    return bootstrap_percentile(mz, dz, estimator, extract(original.params, target), n_boot,
                                level, seed, threads);
}

}  // namespace twinmix
