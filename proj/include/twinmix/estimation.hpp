#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "twinmix/model.hpp"

namespace twinmix {

struct FitOptions {
    int max_iter = 2000;
    double tol = 1e-10;  // relative log-likelihood change
    int n_starts = 8;
    std::uint64_t seed = 1;
    // Extra start tried before the standard ones (bootstrap refits pass the
    // original fit here; the homogeneity test passes the null solution).
    std::optional<ModelParams> warm_start;
    // When set, the winning start's per-iteration log-likelihoods are kept
    // in FitResult::trace.
    bool record_trace = false;

    void validate() const;
};

struct FitResult {
    ModelParams params;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    int start_index = 0;  // position in the executed start list (warm start is 0 when present)
    std::vector<double> trace;
};

// Closed-form MLE of the equal-means equal-variance bivariate normal.
struct MzFit {
    double mu = 0.0;
    double rho = 0.0;
    double sigma2 = 0.0;
    double loglik = 0.0;
};

MzFit fit_mz(std::span<const PairObs> pairs);

// Swap-mixture MLE over one stratum by EM with conditional maximization of
// (sigma2, rho); multi-start, canonicalized so mu_d1 <= mu_d2. MZ slots of
// the returned params are zero.
FitResult fit_dz_separate(std::span<const PairObs> pairs, const FitOptions& opts);

// Equal-means bivariate normal fit on DZ data alone (same closed form as
// fit_mz, reported in the DZ slots).
FitResult fit_dz_separate_equal_means(std::span<const PairObs> pairs, const FitOptions& opts);

// Joint MLE over both strata with a shared variance: the MZ stratum enters
// through its fixed sufficient statistics, the DZ stratum through EM
// responsibilities, and (sigma2, rho_m, rho_d) are updated by cycled
// conditional maximization.
FitResult fit_combined(std::span<const PairObs> mz, std::span<const PairObs> dz,
                       const FitOptions& opts);

// Same model restricted to mu_d1 == mu_d2; the DZ mixture collapses to a
// single bivariate normal, so the fit needs no responsibilities.
FitResult fit_combined_null(std::span<const PairObs> mz, std::span<const PairObs> dz,
                            const FitOptions& opts);

// Pearson's sample correlation with the first- and second-coordinate means
// computed separately, exactly as it would be (mis)applied to unordered
// pairs.
double pearson_r(std::span<const PairObs> pairs);

// Resolves the swap-label symmetry: mu_d1 <= mu_d2, everything else kept.
ModelParams canonicalize(const ModelParams& p);

// Direct per-pair evaluators. These deliberately avoid the aggregated
// sufficient-statistic algebra used inside the fitters so tests can check
// one route against the other.
double mz_loglik(std::span<const PairObs> pairs, double mu, double rho, double sigma2);
double dz_mixture_loglik(std::span<const PairObs> pairs, const BvnParams& p);
double combined_loglik(std::span<const PairObs> mz, std::span<const PairObs> dz,
                       const ModelParams& p);

}  // namespace twinmix
