#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "twinmix/errors.hpp"
#include "twinmix/inference.hpp"
#include "twinmix/math.hpp"
#include "twinmix/simulation.hpp"

using namespace twinmix;

namespace {

TwinDataset simulate(int n, double mu_d2, double rho_d, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.n_m = cfg.n_d = n;
    cfg.mu_d2 = mu_d2;
    cfg.rho_d = rho_d;
    cfg.seed = seed;
    Rng rng(seed);
    return generate_dataset(cfg, rng);
}

}  // namespace

TEST_CASE("a_n_empirical formula") {
    CHECK(a_n_empirical(100) == doctest::Approx(0.56828).epsilon(1e-12));
    CHECK(a_n_empirical(400) == doctest::Approx(0.51707).epsilon(1e-12));
    CHECK(a_n_empirical(100000000) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK_THROWS_AS(a_n_empirical(0), invalid_argument);
}

TEST_CASE("chi-squared helpers") {
    // 0.95 quantile of chi2(1), and the half-mixture tail at it
    CHECK(chi2_1_quantile(0.95) == doctest::Approx(3.8414588206941245).epsilon(1e-9));
    CHECK(chi2_1_sf(3.8414588206941245) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(mixture_chi2_quantile(0.5, 0.5) == 0.0);
    CHECK(mixture_chi2_quantile(0.975, 0.5) == doctest::Approx(3.8414588206941245).epsilon(1e-9));
    CHECK(mixture_chi2_cdf(0.0, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("homogeneity test p-value mapping") {
    const TwinDataset ds = simulate(400, 1.0, 0.5, 404);
    FitOptions o;
    o.seed = 2;
    const LrtResult l = lrt_homogeneity(ds.mz, ds.dz, o);
    CHECK(l.statistic >= 0.0);
    CHECK(l.a_n == doctest::Approx(0.5 + 6.828 / 400));
    if (l.statistic > 0.0) {
        CHECK(l.p_unadjusted == doctest::Approx(0.5 * chi2_1_sf(l.statistic)).epsilon(1e-12));
        CHECK(l.p_adjusted == doctest::Approx(l.a_n * chi2_1_sf(l.statistic)).epsilon(1e-12));
        // a_n >= 0.5 implies the adjusted p is never smaller
        CHECK(l.p_adjusted >= l.p_unadjusted);
    }
    // strong separation at n=200: decisive rejection
    CHECK(l.p_adjusted < 0.001);

    // R = chi2(1) 0.95 quantile maps to p = 0.025 under the half mixture
    CHECK(0.5 * chi2_1_sf(3.841458820694124) == doctest::Approx(0.025).epsilon(1e-9));
}

TEST_CASE("homogeneity statistic is nonnegative across datasets") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const TwinDataset ds = simulate(60, s % 2 ? 0.0 : 0.6, 0.3, 7100 + s);
        FitOptions o;
        o.seed = s + 1;
        const LrtResult l = lrt_homogeneity(ds.mz, ds.dz, o);
        CHECK(l.statistic >= 0.0);
        if (l.statistic == 0.0) {
            CHECK(l.p_unadjusted == 1.0);
            CHECK(l.p_adjusted == 1.0);
        }
    }
}

TEST_CASE("calibrate_an runs deterministically and lands in a sane band") {
    const std::vector<std::pair<int, int>> grid{{50, 50}};
    FitOptions o;
    const CalibrationReport a = calibrate_an(grid, 150, 424242, o, 2);
    const CalibrationReport b = calibrate_an(grid, 150, 424242, o, 1);
    REQUIRE(a.grid.size() == 1);
    CHECK(a.grid[0].a_hat == b.grid[0].a_hat);  // thread count never changes values
    CHECK(a.grid[0].a_hat > 0.3);
    CHECK(a.grid[0].a_hat < 1.1);
    CHECK(a.fitted_slope == b.fitted_slope);

    const std::string csv = calibration_to_csv(a);
    CHECK(csv.rfind("n_M,n_D,a_hat\n", 0) == 0);
    CHECK(csv.find("50,50,") != std::string::npos);

    CHECK_THROWS_AS(calibrate_an(grid, 50, 1, o), invalid_argument);
    CHECK_THROWS_AS(calibrate_an({}, 200, 1, o), invalid_argument);
}

TEST_CASE("bootstrap_ci basics") {
    const TwinDataset ds = simulate(120, 1.0, 0.5, 31337);
    FitOptions o;
    o.seed = 3;

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(bootstrap_ci(ds.mz, ds.dz, Target::delta, 0, 0.95, 1, o),
                        invalid_argument);
        CHECK_THROWS_AS(bootstrap_ci(ds.mz, ds.dz, Target::delta, 500, 1.5, 1, o),
                        invalid_argument);
    }

    SUBCASE("deterministic, ordered, and centred on the point estimate") {
        const BootstrapResult a = bootstrap_ci(ds.mz, ds.dz, Target::delta, 200, 0.95, 99, o, 2);
        const BootstrapResult b = bootstrap_ci(ds.mz, ds.dz, Target::delta, 200, 0.95, 99, o, 1);
        CHECK(a.ci_low == b.ci_low);
        CHECK(a.ci_high == b.ci_high);
        CHECK(a.replicates == b.replicates);
        CHECK(a.ci_low <= a.ci_high);
        CHECK(a.point == doctest::Approx(0.9 - 0.5).epsilon(0.5));
        CHECK(a.n_failed == 0);
        CHECK_FALSE(a.flagged);
    }

    SUBCASE("shift equivariance for delta at a fixed seed") {
        TwinDataset moved = ds;
        for (auto& p : moved.mz) {
            p.y1 += 11.0;
            p.y2 += 11.0;
        }
        for (auto& p : moved.dz) {
            p.y1 += 11.0;
            p.y2 += 11.0;
        }
        const BootstrapResult a = bootstrap_ci(ds.mz, ds.dz, Target::delta, 200, 0.95, 7, o);
        const BootstrapResult b = bootstrap_ci(moved.mz, moved.dz, Target::delta, 200, 0.95, 7, o);
        CHECK(a.ci_low == doctest::Approx(b.ci_low).epsilon(1e-7));
        CHECK(a.ci_high == doctest::Approx(b.ci_high).epsilon(1e-7));
    }

    SUBCASE("rho_m target tracks the MZ correlation") {
        const BootstrapResult a = bootstrap_ci(ds.mz, ds.dz, Target::rho_m, 150, 0.9, 5, o);
        CHECK(a.point == doctest::Approx(0.9).epsilon(0.1));
        CHECK(a.ci_low < a.point);
        CHECK(a.ci_high > a.point);
    }
}

TEST_CASE("bootstrap_percentile propagates and counts replicate failures") {
    const TwinDataset ds = simulate(30, 0.5, 0.4, 5555);
    int calls = 0;
    const PairStatistic flaky = [&calls](std::span<const PairObs>, std::span<const PairObs>,
                                         std::uint64_t seed) -> double {
        ++calls;
        if (seed % 10 == 0) throw convergence_error("synthetic failure");
        return static_cast<double>(seed % 1000) / 1000.0;
    };
    const BootstrapResult r = bootstrap_percentile(ds.mz, ds.dz, flaky, 0.5, 200, 0.95, 17);
    CHECK(calls == 200);
    CHECK(r.n_failed > 0);
    CHECK(static_cast<int>(r.replicates.size()) + r.n_failed == 200);
    CHECK(r.flagged == (r.n_failed * 20 > 200));
}
