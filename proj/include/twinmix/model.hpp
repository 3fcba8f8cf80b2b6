#pragma once

#include <array>

#include "twinmix/rng.hpp"

namespace twinmix {

// Admissible-region clamps. Correlations are kept strictly inside (-1,1)
// and variances strictly positive so log-densities stay finite and
// optimizers never step onto the boundary.
inline constexpr double RHO_EPS = 1e-6;
inline constexpr double SIGMA2_MIN = 1e-10;

// One recorded twin pair. The coordinate order carries no information for
// monozygotic pairs and is a coin flip of the latent order for dizygotic
// pairs.
struct PairObs {
    double y1 = 0.0;
    double y2 = 0.0;
};

// Equal-variance bivariate normal parameters.
struct BvnParams {
    double mu1 = 0.0;
    double mu2 = 0.0;
    double rho = 0.0;
    double sigma2 = 1.0;

    // Throws twinmix::invalid_argument when outside the admissible region.
    void validate() const;
};

// Full parameter vector of the combined two-stratum model: an equal-means
// bivariate normal for the MZ stratum and a swap mixture for the DZ
// stratum, sharing one variance.
struct ModelParams {
    double mu_m = 0.0;
    double rho_m = 0.0;
    double mu_d1 = 0.0;
    double mu_d2 = 0.0;
    double rho_d = 0.0;
    double sigma2 = 1.0;

    void validate() const;

    BvnParams mz() const { return {mu_m, mu_m, rho_m, sigma2}; }
    BvnParams dz() const { return {mu_d1, mu_d2, rho_d, sigma2}; }
};

// ModelParams mapped slot-by-slot onto the real line: means unchanged,
// correlations through atanh, the variance through log.
struct UnconstrainedParams {
    std::array<double, 6> v{};  // mu_m, atanh(rho_m), mu_d1, mu_d2, atanh(rho_d), log(sigma2)
};

double clamp_rho(double rho);
double clamp_sigma2(double sigma2);

// Log-density of the equal-variance bivariate normal at (y1, y2).
double bvn_logpdf(double y1, double y2, const BvnParams& p);

// Log-density of the equal-weight swap mixture
//   0.5 phi(y1,y2; mu1,mu2,rho,sigma2) + 0.5 phi(y1,y2; mu2,mu1,rho,sigma2),
// evaluated through a stable log-sum of the two component log-densities.
double mixture_logpdf(double y1, double y2, const BvnParams& p);

// Draws one pair from the swap mixture: two standard normals are mapped
// through the correlation structure, then the coordinates are swapped with
// probability one half. Consumes exactly the two normal draws followed by
// one Bernoulli draw, in that order.
PairObs sample_pair(Rng& rng, const BvnParams& p);

// Probability limit of Pearson's correlation coefficient applied to
// unordered pairs: (rho sigma2 - (mu1-mu2)^2/4) / (sigma2 + (mu1-mu2)^2/4).
// Below rho whenever mu1 != mu2.
double pearson_limit(double mu1, double mu2, double rho, double sigma2);

struct MixtureMoments {
    double mean;    // E(Y1) = E(Y2)
    double cross;   // E(Y1 Y2)
    double second;  // E(Y1^2) = E(Y2^2)
};

MixtureMoments mixture_moments(const BvnParams& p);

UnconstrainedParams to_unconstrained(const ModelParams& p);
ModelParams from_unconstrained(const UnconstrainedParams& u);

}  // namespace twinmix
