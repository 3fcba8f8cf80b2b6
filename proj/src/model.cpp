#include "twinmix/model.hpp"

#include <cmath>

#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"

namespace twinmix {

namespace {

void check_density_params(double rho, double sigma2) {
    if (!(sigma2 > 0.0)) throw invalid_argument("bivariate normal: sigma2 must be positive");
    if (!(std::fabs(rho) < 1.0)) throw invalid_argument("bivariate normal: |rho| must be < 1");
}

}  // namespace

void BvnParams::validate() const {
    check_density_params(rho, sigma2);
    if (!std::isfinite(mu1) || !std::isfinite(mu2)) {
        throw invalid_argument("bivariate normal: means must be finite");
    }
    if (sigma2 < SIGMA2_MIN) throw invalid_argument("bivariate normal: sigma2 below floor");
    if (std::fabs(rho) > 1.0 - RHO_EPS) {
        throw invalid_argument("bivariate normal: rho outside clamped region");
    }
}

void ModelParams::validate() const {
    mz().validate();
    dz().validate();
}

double clamp_rho(double rho) {
    const double lim = 1.0 - RHO_EPS;
    if (rho > lim) return lim;
    if (rho < -lim) return -lim;
    return rho;
}

double clamp_sigma2(double sigma2) { return sigma2 < SIGMA2_MIN ? SIGMA2_MIN : sigma2; }

double bvn_logpdf(double y1, double y2, const BvnParams& p) {
    check_density_params(p.rho, p.sigma2);
    const double d1 = y1 - p.mu1;
    const double d2 = y2 - p.mu2;
    const double omr2 = 1.0 - p.rho * p.rho;
    const double quad = d1 * d1 - 2.0 * p.rho * d1 * d2 + d2 * d2;
    return -kLog2Pi - std::log(p.sigma2) - 0.5 * std::log(omr2) -
           quad / (2.0 * p.sigma2 * omr2);
}

double mixture_logpdf(double y1, double y2, const BvnParams& p) {
    const double la = bvn_logpdf(y1, y2, p);
    const double lb = bvn_logpdf(y1, y2, {p.mu2, p.mu1, p.rho, p.sigma2});
    const double hi = la > lb ? la : lb;
    const double lo = la > lb ? lb : la;
    // log(0.5 e^la + 0.5 e^lb), log-sum-exp form.
    return hi + std::log1p(std::exp(lo - hi)) - M_LN2;
}

PairObs sample_pair(Rng& rng, const BvnParams& p) {
    p.validate();
    const auto [z1, z2] = rng.normal_pair();
    const double sigma = std::sqrt(p.sigma2);
    double y1 = p.mu1 + sigma * z1;
    double y2 = p.mu2 + sigma * (p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2);
    if (rng.bernoulli(0.5)) std::swap(y1, y2);
    return {y1, y2};
}

double pearson_limit(double mu1, double mu2, double rho, double sigma2) {
    if (!(sigma2 > 0.0)) throw invalid_argument("pearson_limit: sigma2 must be positive");
    const double gap2 = 0.25 * (mu1 - mu2) * (mu1 - mu2);
    return (rho * sigma2 - gap2) / (sigma2 + gap2);
}

MixtureMoments mixture_moments(const BvnParams& p) {
    return {0.5 * (p.mu1 + p.mu2), p.rho * p.sigma2 + p.mu1 * p.mu2,
            p.sigma2 + 0.5 * (p.mu1 * p.mu1 + p.mu2 * p.mu2)};
}

UnconstrainedParams to_unconstrained(const ModelParams& p) {
    p.validate();
    return {{p.mu_m, std::atanh(p.rho_m), p.mu_d1, p.mu_d2, std::atanh(p.rho_d),
             std::log(p.sigma2)}};
}

ModelParams from_unconstrained(const UnconstrainedParams& u) {
    ModelParams p;
    p.mu_m = u.v[0];
    p.rho_m = clamp_rho(std::tanh(u.v[1]));
    p.mu_d1 = u.v[2];
    p.mu_d2 = u.v[3];
    p.rho_d = clamp_rho(std::tanh(u.v[4]));
    p.sigma2 = clamp_sigma2(std::exp(u.v[5]));
    return p;
}

}  // namespace twinmix
