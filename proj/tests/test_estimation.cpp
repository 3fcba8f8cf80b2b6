#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "twinmix/errors.hpp"
#include "twinmix/estimation.hpp"
#include "twinmix/rng.hpp"
#include "twinmix/simulation.hpp"

using namespace twinmix;

namespace {

TwinDataset simulate(int n_m, int n_d, double mu_d2, double rho_d, std::uint64_t seed,
                     double rho_m = 0.9, double sigma2 = 1.0) {
    ScenarioConfig cfg;
    cfg.n_m = n_m;
    cfg.n_d = n_d;
    cfg.mu_d2 = mu_d2;
    cfg.rho_d = rho_d;
    cfg.rho_m = rho_m;
    cfg.sigma2 = sigma2;
    cfg.seed = seed;
    Rng rng(seed);
    return generate_dataset(cfg, rng);
}

}  // namespace

TEST_CASE("fit_mz hand-checked closed form") {
    const std::vector<PairObs> pairs{{0, 0}, {2, 1}};
    const MzFit f = fit_mz(pairs);
    CHECK(f.mu == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(f.sigma2 == doctest::Approx(0.6875).epsilon(1e-14));
    CHECK(f.rho == doctest::Approx(7.0 / 11.0).epsilon(1e-14));
    CHECK(f.loglik == doctest::Approx(mz_loglik(pairs, f.mu, f.rho, f.sigma2)).epsilon(1e-12));
}

TEST_CASE("fit_mz rejects degenerate data") {
    const std::vector<PairObs> pairs{{1.5, 1.5}, {1.5, 1.5}, {1.5, 1.5}};
    CHECK_THROWS_AS(fit_mz(pairs), degenerate_data_error);
}

TEST_CASE("fit_mz recovers generating parameters on a large sample") {
    const TwinDataset ds = simulate(10000, 4, 0.0, 0.3, 909);
    const MzFit f = fit_mz(ds.mz);
    const double n = 10000;
    // 3 standard errors: rho ~ (1-rho^2)/sqrt(n), mu ~ sigma/sqrt(2n)
    CHECK(std::fabs(f.mu - 0.0) < 3.0 / std::sqrt(2.0 * n));
    CHECK(std::fabs(f.rho - 0.9) < 3.0 * (1.0 - 0.81) / std::sqrt(n));
    CHECK(std::fabs(f.sigma2 - 1.0) < 3.0 * std::sqrt(2.0 / (2.0 * n)));
}

TEST_CASE("pearson_r basics") {
    const std::vector<PairObs> line{{0, 0}, {1, 1}, {2, 2}};
    CHECK(pearson_r(line) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(11);
    std::vector<PairObs> pairs;
    for (int i = 0; i < 40; ++i) pairs.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
    const double r0 = pearson_r(pairs);
    std::vector<PairObs> shifted = pairs;
    for (auto& p : shifted) {
        p.y1 += 17.25;
        p.y2 += 17.25;
    }
    CHECK(pearson_r(shifted) == doctest::Approx(r0).epsilon(1e-9));

    const std::vector<PairObs> flat{{1, 0}, {1, 1}, {1, 2}};
    CHECK_THROWS_AS(pearson_r(flat), degenerate_data_error);
}

TEST_CASE("canonicalize orders the DZ means and preserves the likelihood") {
    ModelParams p;
    p.mu_d1 = 1.0;
    p.mu_d2 = 0.0;
    p.rho_d = 0.4;
    const ModelParams c = canonicalize(p);
    CHECK(c.mu_d1 == 0.0);
    CHECK(c.mu_d2 == 1.0);
    CHECK(canonicalize(c).mu_d1 == c.mu_d1);

    const TwinDataset ds = simulate(20, 30, 0.8, 0.4, 321);
    ModelParams q;
    q.mu_m = 0.1;
    q.rho_m = 0.8;
    q.mu_d1 = 0.9;
    q.mu_d2 = -0.2;
    q.rho_d = 0.35;
    q.sigma2 = 1.1;
    CHECK(combined_loglik(ds.mz, ds.dz, canonicalize(q)) ==
          doctest::Approx(combined_loglik(ds.mz, ds.dz, q)).epsilon(1e-12));
}

TEST_CASE("fit_dz_separate_equal_means is fit_mz on the DZ stratum") {
    const TwinDataset ds = simulate(4, 200, 0.0, 0.3, 5150);
    const FitResult eq = fit_dz_separate_equal_means(ds.dz, {});
    const MzFit f = fit_mz(ds.dz);
    CHECK(eq.params.mu_d1 == doctest::Approx(f.mu).epsilon(1e-14));
    CHECK(eq.params.mu_d2 == doctest::Approx(f.mu).epsilon(1e-14));
    CHECK(eq.params.rho_d == doctest::Approx(f.rho).epsilon(1e-14));
    CHECK(eq.params.sigma2 == doctest::Approx(f.sigma2).epsilon(1e-14));
    // and it tracks Pearson's r up to O(1/n)
    CHECK(eq.params.rho_d == doctest::Approx(pearson_r(ds.dz)).epsilon(0.02));
}

TEST_CASE("fit_dz_separate reported loglik matches the per-pair evaluator") {
    const TwinDataset ds = simulate(4, 80, 1.0, 0.5, 22);
    FitOptions o;
    o.seed = 9;
    const FitResult f = fit_dz_separate(ds.dz, o);
    CHECK(f.converged);
    CHECK(f.loglik == doctest::Approx(dz_mixture_loglik(ds.dz, f.params.dz())).epsilon(1e-10));
}

TEST_CASE("duplicating every pair as its own swap leaves the DZ fit unchanged") {
    const TwinDataset ds = simulate(4, 60, 1.0, 0.4, 33);
    std::vector<PairObs> doubled;
    for (const auto& p : ds.dz) {
        doubled.push_back(p);
        doubled.push_back({p.y2, p.y1});
    }
    FitOptions o;
    o.seed = 4;
    const FitResult base = fit_dz_separate(ds.dz, o);
    const FitResult dup = fit_dz_separate(doubled, o);
    CHECK(dup.params.mu_d1 == doctest::Approx(base.params.mu_d1).epsilon(1e-5));
    CHECK(dup.params.mu_d2 == doctest::Approx(base.params.mu_d2).epsilon(1e-5));
    CHECK(dup.params.rho_d == doctest::Approx(base.params.rho_d).epsilon(1e-5));
    CHECK(dup.params.sigma2 == doctest::Approx(base.params.sigma2).epsilon(1e-5));
    CHECK(dup.loglik == doctest::Approx(2.0 * base.loglik).epsilon(1e-8));
}

TEST_CASE("EM trace never decreases") {
    FitOptions o;
    o.record_trace = true;
    o.seed = 77;
    for (std::uint64_t s = 1; s <= 6; ++s) {
        const TwinDataset ds = simulate(50, 60, s % 2 ? 0.8 : 0.0, 0.3, 4000 + s);
        const FitResult sep = fit_dz_separate(ds.dz, o);
        REQUIRE(sep.trace.size() > 1);
        for (std::size_t i = 1; i < sep.trace.size(); ++i) {
            CHECK(sep.trace[i] >= sep.trace[i - 1] - 1e-9);
        }
        const FitResult comb = fit_combined(ds.mz, ds.dz, o);
        REQUIRE(comb.trace.size() > 1);
        for (std::size_t i = 1; i < comb.trace.size(); ++i) {
            CHECK(comb.trace[i] >= comb.trace[i - 1] - 1e-9);
        }
    }
}

TEST_CASE("fits are location and scale equivariant") {
    const TwinDataset ds = simulate(60, 70, 0.6, 0.45, 808);
    FitOptions o;
    o.seed = 13;
    const FitResult base = fit_combined(ds.mz, ds.dz, o);

    SUBCASE("shift") {
        const double c = 3.75;
        TwinDataset moved = ds;
        for (auto& p : moved.mz) {
            p.y1 += c;
            p.y2 += c;
        }
        for (auto& p : moved.dz) {
            p.y1 += c;
            p.y2 += c;
        }
        const FitResult f = fit_combined(moved.mz, moved.dz, o);
        CHECK(f.params.mu_m == doctest::Approx(base.params.mu_m + c).epsilon(1e-8));
        CHECK(f.params.mu_d1 == doctest::Approx(base.params.mu_d1 + c).epsilon(1e-8));
        CHECK(f.params.mu_d2 == doctest::Approx(base.params.mu_d2 + c).epsilon(1e-8));
        CHECK(f.params.rho_m == doctest::Approx(base.params.rho_m).epsilon(1e-8));
        CHECK(f.params.rho_d == doctest::Approx(base.params.rho_d).epsilon(1e-8));
        CHECK(f.params.sigma2 == doctest::Approx(base.params.sigma2).epsilon(1e-8));
    }

    SUBCASE("scale") {
        const double s = 2.5;
        TwinDataset scaled = ds;
        for (auto& p : scaled.mz) {
            p.y1 *= s;
            p.y2 *= s;
        }
        for (auto& p : scaled.dz) {
            p.y1 *= s;
            p.y2 *= s;
        }
        const FitResult f = fit_combined(scaled.mz, scaled.dz, o);
        CHECK(f.params.mu_m == doctest::Approx(base.params.mu_m * s).epsilon(1e-7));
        CHECK(f.params.mu_d1 == doctest::Approx(base.params.mu_d1 * s).epsilon(1e-7));
        CHECK(f.params.mu_d2 == doctest::Approx(base.params.mu_d2 * s).epsilon(1e-7));
        CHECK(f.params.rho_m == doctest::Approx(base.params.rho_m).epsilon(1e-8));
        CHECK(f.params.rho_d == doctest::Approx(base.params.rho_d).epsilon(1e-8));
        CHECK(f.params.sigma2 == doctest::Approx(base.params.sigma2 * s * s).epsilon(1e-7));
    }
}

TEST_CASE("re-swapping pair coordinates leaves canonical fits unchanged") {
    const TwinDataset ds = simulate(50, 80, 1.0, 0.5, 2711);
    TwinDataset swapped = ds;
    Rng coin(99);
    for (auto& p : swapped.mz) {
        if (coin.bernoulli(0.5)) std::swap(p.y1, p.y2);
    }
    for (auto& p : swapped.dz) {
        if (coin.bernoulli(0.5)) std::swap(p.y1, p.y2);
    }
    FitOptions o;
    o.seed = 5;
    const FitResult a = fit_combined(ds.mz, ds.dz, o);
    const FitResult b = fit_combined(swapped.mz, swapped.dz, o);
    CHECK(a.params.mu_d1 == doctest::Approx(b.params.mu_d1).epsilon(1e-5));
    CHECK(a.params.mu_d2 == doctest::Approx(b.params.mu_d2).epsilon(1e-5));
    CHECK(a.params.rho_d == doctest::Approx(b.params.rho_d).epsilon(1e-5));
    CHECK(a.params.rho_m == doctest::Approx(b.params.rho_m).epsilon(1e-6));
    CHECK(a.params.sigma2 == doctest::Approx(b.params.sigma2).epsilon(1e-6));
    CHECK(a.loglik == doctest::Approx(b.loglik).epsilon(1e-9));
}

TEST_CASE("the combined fit beats the generating parameters") {
    for (std::uint64_t s = 1; s <= 10; ++s) {
        const double mu_d2 = s % 2 ? 1.0 : 0.0;
        const TwinDataset ds = simulate(40, 40, mu_d2, 0.3, 600 + s);
        FitOptions o;
        o.seed = s;
        const FitResult f = fit_combined(ds.mz, ds.dz, o);
        ModelParams truth;
        truth.mu_m = 0.0;
        truth.rho_m = 0.9;
        truth.mu_d1 = 0.0;
        truth.mu_d2 = mu_d2;
        truth.rho_d = 0.3;
        truth.sigma2 = 1.0;
        CHECK(f.loglik >= combined_loglik(ds.mz, ds.dz, truth) - 1e-9);
        CHECK(f.loglik == doctest::Approx(combined_loglik(ds.mz, ds.dz, f.params)).epsilon(1e-10));
        CHECK(f.params.mu_d1 <= f.params.mu_d2);
    }
}

TEST_CASE("the null fit never beats the unrestricted fit") {
    for (std::uint64_t s = 1; s <= 8; ++s) {
        const TwinDataset ds = simulate(30, 35, s % 2 ? 0.7 : 0.0, 0.4, 900 + s);
        FitOptions o;
        o.seed = s;
        const FitResult null_fit = fit_combined_null(ds.mz, ds.dz, o);
        FitOptions ou = o;
        ou.warm_start = null_fit.params;
        const FitResult full_fit = fit_combined(ds.mz, ds.dz, ou);
        CHECK(null_fit.loglik <= full_fit.loglik + 1e-8);
        CHECK(null_fit.params.mu_d1 == null_fit.params.mu_d2);
        CHECK(null_fit.loglik ==
              doctest::Approx(combined_loglik(ds.mz, ds.dz, null_fit.params)).epsilon(1e-10));
    }
}

TEST_CASE("warm starts win ties deterministically") {
    const TwinDataset ds = simulate(40, 40, 1.0, 0.5, 314);
    FitOptions o;
    o.seed = 8;
    const FitResult f = fit_combined(ds.mz, ds.dz, o);
    FitOptions warm = o;
    warm.warm_start = f.params;
    const FitResult g = fit_combined(ds.mz, ds.dz, warm);
    CHECK(g.start_index == 0);
    CHECK(g.loglik >= f.loglik - 1e-9);
}

TEST_CASE("option validation") {
    const TwinDataset ds = simulate(10, 10, 0.0, 0.3, 17);
    FitOptions bad;
    bad.n_starts = 0;
    CHECK_THROWS_AS(fit_combined(ds.mz, ds.dz, bad), invalid_argument);
    bad = {};
    bad.tol = 0.0;
    CHECK_THROWS_AS(fit_dz_separate(ds.dz, bad), invalid_argument);
    bad = {};
    bad.max_iter = 0;
    CHECK_THROWS_AS(fit_combined_null(ds.mz, ds.dz, bad), invalid_argument);

    const std::vector<PairObs> tiny{{0, 1}, {1, 0}};
    CHECK_THROWS_AS(fit_dz_separate(tiny, FitOptions{}), invalid_argument);
}
