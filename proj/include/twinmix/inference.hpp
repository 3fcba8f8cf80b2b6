#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "twinmix/estimation.hpp"

namespace twinmix {

// Homogeneity likelihood-ratio result. The statistic is
//   R = 2 * (loglik of the unrestricted combined fit - loglik under mu_d1 == mu_d2),
// clamped to zero from tiny negative optimizer noise. The unadjusted null is
// the equal mixture of a point mass at zero and chi-squared(1); the adjusted
// null reweights the chi-squared part by a_n.
struct LrtResult {
    double statistic = 0.0;
    double p_unadjusted = 1.0;
    double p_adjusted = 1.0;
    double a_n = 0.5;
    FitResult fit_unrestricted;
    FitResult fit_null;
};

LrtResult lrt_homogeneity(std::span<const PairObs> mz, std::span<const PairObs> dz,
                          const FitOptions& opts);

// Empirical weight for the adjusted null: 0.5 + 6.828 / n_m.
double a_n_empirical(int n_m);

struct CalibrationCell {
    int n_m = 0;
    int n_d = 0;
    double a_hat = 0.0;
    int n_failed = 0;
};

struct CalibrationReport {
    std::vector<CalibrationCell> grid;
    double fitted_slope = 0.0;        // a in a_hat = 0.5 + a / n_m + eps
    double fixed_intercept = 0.5;
    double residual_sd = 0.0;
};

// Monte Carlo recalibration of a_n: every grid cell simulates `n_reps` null
// datasets (standard bivariate normal in both strata), averages the
// homogeneity statistics, then a fixed-intercept regression of the cell
// means on 1/n_m produces the slope. A cell aborts when more than 1% of its
// replicates fail to fit.
CalibrationReport calibrate_an(const std::vector<std::pair<int, int>>& grid, int n_reps,
                               std::uint64_t seed, const FitOptions& opts, int threads = 1);

// Long-format CSV with columns n_M,n_D,a_hat.
std::string calibration_to_csv(const CalibrationReport& report);

struct BootstrapResult {
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.95;
    int n_boot = 0;
    std::vector<double> replicates;  // successful replicate values, in replicate order
    int n_failed = 0;
    bool flagged = false;  // more than 5% of replicates failed
};

enum class Target { rho_m, rho_d, delta };

const char* target_name(Target t);

// Stratified nonparametric bootstrap percentile interval for a functional of
// the combined fit. Replicates resample pairs with replacement within each
// stratum; refits warm-start at the original fit plus one fresh moment
// start. Failed replicates are dropped and counted.
BootstrapResult bootstrap_ci(std::span<const PairObs> mz, std::span<const PairObs> dz,
                             Target target, int n_boot, double level, std::uint64_t seed,
                             const FitOptions& opts, int threads = 1);

// Same resampling engine for an arbitrary estimator; `estimator` receives
// the resampled strata and a replicate-specific seed and may throw to mark
// the replicate failed.
using PairStatistic =
    std::function<double(std::span<const PairObs>, std::span<const PairObs>, std::uint64_t)>;

BootstrapResult bootstrap_percentile(std::span<const PairObs> mz, std::span<const PairObs> dz,
                                     const PairStatistic& estimator, double point, int n_boot,
                                     double level, std::uint64_t seed, int threads = 1);

}  // namespace twinmix
