#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "twinmix/dataio.hpp"
#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"
#include "twinmix/simulation.hpp"

using namespace twinmix;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::string("tmp_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

struct SwCase {
    std::vector<double> xs;
    double w;
    double p;
};

// Frozen references from an independent implementation of the same
// approximation (cases span the small-sample and large-sample p branches).
const std::vector<SwCase> kSwCases = {
    // normal n=8
    {{0.4866964077475746, -1.4601264261499725, -0.14684056763135023, -1.0977413023417009,
      -0.4323328333891773, -0.4205990410622683, -1.1924737755353476, -0.6555276404471405},
     0.9650780381363946, 0.8568382939122211},
    // normal n=12
    {{-0.286606650218839, 2.8377501708671886, 0.6497407000102887, -1.9176562127339465,
      -0.2704928051359531, 2.174121441460862, -0.31879718325712136, -1.1867499280454077,
      1.0029339810163576, 0.8633736729074087, 1.1005494645655982, -0.08819537301560355},
     0.9724328029862611, 0.9345430211902217},
    // uniform n=25
    {{0.9148479494089669, 0.5144868296912127, 0.669321081985852,   0.0981997625336628,
      0.09379941182979612, 0.600779166631075,  0.5753650158155189,  0.5362559611668621,
      0.6421783854283414,  0.9445595038680038, 0.38147578839195884, 0.06314837178149812,
      0.9473824109195809,  0.7716391368168748, 0.9752317390478217,  0.660841490666194,
      0.44504982278762484, 0.03285564734681823, 0.11707927507102045, 0.14304848684497828,
      0.41375657201319416, 0.2753824637478678, 0.3164419666074175,  0.9109133001669307,
      0.55422452035161},
     0.9350820437375098, 0.11391602684483687},
    // normal n=50
    {{-0.10260302218681987, 2.442749843749086,    -0.4454579783760233,  2.0336207423582393,
      -1.9127606139946123,  -0.36441579658271805, 0.01949619496148845,  -0.8465401929003548,
      0.9900053202066654,   0.93853906727007,     1.9905186469318494,   1.78036204384391,
      0.27350137909410094,  -1.6697337548854068,  -0.8151115122403625,  -1.5459563585291316,
      0.08277809662045509,  -0.07777279388179947, -0.3350133322658993,  -1.0887826325251864,
      1.3811198513707779,   0.0873431713472397,   -2.177543780208676,   -0.4171804291788325,
      -1.122358017412602,   0.24242911791574956,  -0.39424606380906296, 0.21356205231946737,
      2.1890113908862956,   0.5044271031355955,   0.178998720077408,    0.6016329455740794,
      -0.12731383564389728, -0.16213265453745573, -0.9045533726993652,  -1.1027984582984052,
      1.2361589638087787,   -0.8936154784147338,  -0.48833223605579384, -0.7326597100798589,
      0.2994560760802268,   -0.20473696643296313, -0.42001233914605235, -0.5052999994311159,
      -2.505431689096418,   -1.7664284258550491,  0.986391816522719,    0.4986233421842822,
      -0.4497145720079067,  1.6215384948389673},
     0.9793410296015876, 0.524515668664564},
};

}  // namespace

TEST_CASE("inv_norm_cdf known values and domain") {
    CHECK(std::fabs(inv_norm_cdf(0.5)) < 1e-12);
    CHECK(inv_norm_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK_THROWS_AS(inv_norm_cdf(0.0), invalid_argument);
    CHECK_THROWS_AS(inv_norm_cdf(1.0), invalid_argument);
    CHECK_THROWS_AS(inv_norm_cdf(-0.2), invalid_argument);
}

TEST_CASE("inv_norm_cdf is accurate against a root-finding oracle") {
    // bisection on the erfc-based normal CDF, independent of the rational
    // approximation under test; upper tail folded onto the lower one where
    // erfc keeps full relative precision
    auto oracle = [](double p) {
        const bool flip = p > 0.5;
        const double q = flip ? 1.0 - p : p;
        double lo = -40.0, hi = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (norm_cdf(mid) < q) lo = mid;
            else hi = mid;
        }
        const double x = 0.5 * (lo + hi);
        return flip ? -x : x;
    };
    Rng rng(61);
    for (int i = 0; i < 60; ++i) {
        const double u = rng.uniform(0, 1);
        const double p = std::pow(10.0, -12.0 * u);  // log-spread across (1e-12, 1)
        const double q = i % 2 ? p : 1.0 - p;
        if (q <= 0.0 || q >= 1.0) continue;
        CHECK(std::fabs(inv_norm_cdf(q) - oracle(q)) < 1e-9);
    }
}

TEST_CASE("inv_norm_cdf is strictly increasing and odd") {
    double prev = inv_norm_cdf(1e-10);
    for (double p = 1e-6; p < 1.0 - 1e-6; p += 0.001) {
        const double x = inv_norm_cdf(p);
        CHECK(x > prev);
        prev = x;
        CHECK(std::fabs(inv_norm_cdf(1.0 - p) + x) < 1e-9);
    }
}

TEST_CASE("probit_transform maps 0.5 to 0 and keeps order") {
    TraitTable t;
    t.rows = {{"t", "a", true, 0.5, 0.5}, {"t", "b", false, 0.2, 0.7}};
    const TwinDataset ds = probit_transform(t);
    REQUIRE(ds.mz.size() == 1);
    REQUIRE(ds.dz.size() == 1);
    CHECK(ds.transformed);
    CHECK(std::fabs(ds.mz[0].y1) < 1e-12);
    CHECK(ds.dz[0].y1 < ds.dz[0].y2);

    TraitTable bad;
    bad.rows = {{"t", "pair7", true, 1.0, 0.5}};
    CHECK_THROWS_WITH_AS(probit_transform(bad),
                         doctest::Contains("pair7"), invalid_argument);
}

TEST_CASE("probit of the normal CDF recovers uniformity") {
    // P = Phi(Z) for standard normal Z gives exactly standard normal
    // transformed values; the empirical CDF must stay near uniform.
    Rng rng(62);
    const int n = 100000;
    std::vector<double> z(n);
    for (auto& v : z) v = rng.normal();
    std::vector<double> back(n);
    for (int i = 0; i < n; ++i) back[i] = inv_norm_cdf(norm_cdf(z[i]));
    std::sort(back.begin(), back.end());
    const double ks = ks_distance(back, [](double x) { return norm_cdf(x); });
    CHECK(ks < 0.02);
}

TEST_CASE("shapiro_wilk matches frozen reference values") {
    for (const auto& c : kSwCases) {
        const SwResult r = shapiro_wilk(c.xs);
        CHECK(r.w == doctest::Approx(c.w).epsilon(1e-5));
        CHECK(r.p == doctest::Approx(c.p).epsilon(2e-4));
    }
}

TEST_CASE("shapiro_wilk guards its domain") {
    CHECK_THROWS_AS(shapiro_wilk(std::vector<double>{1.0, 2.0}), invalid_argument);
    CHECK_THROWS_AS(shapiro_wilk(std::vector<double>(40, 3.25)), degenerate_data_error);
}

TEST_CASE("shapiro_wilk p-values are near-uniform under the null at n=96") {
    Rng rng(63);
    double sum = 0.0;
    const int reps = 2000;
    std::vector<double> xs(96);
    for (int r = 0; r < reps; ++r) {
        for (auto& x : xs) x = rng.normal();
        sum += shapiro_wilk(xs).p;
    }
    const double mean_p = sum / reps;
    CHECK(mean_p > 0.45);
    CHECK(mean_p < 0.55);
}

TEST_CASE("normality_check behaviour") {
    ScenarioConfig cfg;
    cfg.n_m = 96;
    cfg.n_d = 4;
    cfg.rho_m = 0.5;
    cfg.mu_d2 = 0.0;
    cfg.seed = 64;
    Rng gen(cfg.seed);
    const TwinDataset ds = generate_dataset(cfg, gen);

    Rng rng(65);
    const double mean_p = normality_check(ds, Stratum::MZ, 200, rng);
    CHECK(mean_p > 0.3);
    CHECK(mean_p < 0.7);

    // heavily skewed data: transform each value through exp
    TwinDataset skewed = ds;
    for (auto& p : skewed.mz) {
        p.y1 = std::exp(2.0 * p.y1);
        p.y2 = std::exp(2.0 * p.y2);
    }
    Rng rng2(66);
    CHECK(normality_check(skewed, Stratum::MZ, 100, rng2) < 0.05);

    TwinDataset tiny;
    tiny.mz = {{0, 1}, {1, 0}};
    Rng rng3(67);
    CHECK_THROWS_AS(normality_check(tiny, Stratum::MZ, 10, rng3), invalid_argument);
}

TEST_CASE("variance_diagnostic") {
    ScenarioConfig cfg;
    cfg.n_m = cfg.n_d = 400;
    cfg.rho_m = 0.5;
    cfg.rho_d = 0.5;
    cfg.mu_d2 = 0.0;
    cfg.seed = 68;
    Rng gen(cfg.seed);
    const TwinDataset ds = generate_dataset(cfg, gen);
    FitOptions o;
    o.seed = 1;

    SUBCASE("identical strata give ratio near one") {
        const VarianceDiagnostic d = variance_diagnostic(ds.mz, ds.mz, o);
        CHECK(d.ratio == doctest::Approx(1.0).epsilon(0.05));
    }
    SUBCASE("equal-variance strata give ratio near one") {
        const VarianceDiagnostic d = variance_diagnostic(ds.mz, ds.dz, o);
        CHECK(d.ratio > 0.8);
        CHECK(d.ratio < 1.25);
    }
    SUBCASE("a four-fold DZ variance shows up as ratio near 0.25") {
        TwinDataset wide = ds;
        for (auto& p : wide.dz) {
            p.y1 *= 2.0;
            p.y2 *= 2.0;
        }
        const VarianceDiagnostic d = variance_diagnostic(ds.mz, wide.dz, o);
        CHECK(d.ratio == doctest::Approx(0.25).epsilon(0.15));
    }
}

TEST_CASE("load_twin_csv parses a small valid file") {
    const std::string path = write_temp("valid.csv",
                                        "pair_id,zygosity,y1,y2\n"
                                        "p1,MZ,0.1,0.2\n"
                                        "p2,DZ,-0.5,1.25\n");
    const TwinDataset ds = load_twin_csv(path);
    REQUIRE(ds.mz.size() == 1);
    REQUIRE(ds.dz.size() == 1);
    CHECK(ds.mz[0].y1 == 0.1);
    CHECK(ds.dz[0].y2 == 1.25);
    std::remove(path.c_str());
}

TEST_CASE("load_twin_csv reports bad zygosity with its line number") {
    const std::string path = write_temp("badzyg.csv",
                                        "pair_id,zygosity,y1,y2\n"
                                        "p1,MZ,0.1,0.2\n"
                                        "p2,XZ,0.3,0.4\n");
    try {
        load_twin_csv(path);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("XZ") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("load_twin_csv reports malformed numbers and frequency boundaries") {
    const std::string bad_num = write_temp("badnum.csv",
                                           "pair_id,zygosity,y1,y2\n"
                                           "p1,MZ,zero,0.2\n");
    CHECK_THROWS_AS(load_twin_csv(bad_num), parse_error);
    std::remove(bad_num.c_str());

    const std::string boundary = write_temp("boundary.csv",
                                            "pair_id,zygosity,y1,y2\n"
                                            "p1,MZ,0.5,0.5\n"
                                            "p2,DZ,1,0.5\n");
    CsvOptions freq;
    freq.frequencies = true;
    try {
        load_twin_csv(boundary, freq);
        FAIL("expected parse_error");
    } catch (const parse_error& e) {
        CHECK(e.line == 3);
    }
    std::remove(boundary.c_str());
}

TEST_CASE("dataset CSV round-trips losslessly") {
    ScenarioConfig cfg;
    cfg.n_m = 37;
    cfg.n_d = 53;
    cfg.mu_d2 = 0.73;
    cfg.rho_d = 0.41;
    cfg.seed = 69;
    Rng gen(cfg.seed);
    TwinDataset ds = generate_dataset(cfg, gen);
    ds.trait_name = "demo";

    const std::string path = "tmp_roundtrip.csv";
    write_dataset_csv(ds, path);
    const TwinDataset back = load_twin_csv(path);
    REQUIRE(back.mz.size() == ds.mz.size());
    REQUIRE(back.dz.size() == ds.dz.size());
    CHECK(back.trait_name == "demo");
    for (std::size_t i = 0; i < ds.mz.size(); ++i) {
        CHECK(back.mz[i].y1 == ds.mz[i].y1);
        CHECK(back.mz[i].y2 == ds.mz[i].y2);
    }
    for (std::size_t i = 0; i < ds.dz.size(); ++i) {
        CHECK(back.dz[i].y1 == ds.dz[i].y1);
        CHECK(back.dz[i].y2 == ds.dz[i].y2);
    }
    std::remove(path.c_str());
}

TEST_CASE("analyze_traits populates every field and is deterministic") {
    // two tiny synthetic traits on the frequency scale
    ScenarioConfig cfg;
    cfg.n_m = 48;
    cfg.n_d = 96;
    cfg.rho_m = 0.6;
    cfg.rho_d = 0.35;
    cfg.mu_d2 = 0.4;
    cfg.sigma2 = 0.25;
    cfg.seed = 70;
    Rng gen(cfg.seed);
    TraitTable table;
    for (int trait = 0; trait < 2; ++trait) {
        const TwinDataset ds = generate_dataset(cfg, gen);
        long id = 0;
        for (const auto& p : ds.mz) {
            table.rows.push_back({"trait" + std::to_string(trait), "m" + std::to_string(++id),
                                  true, norm_cdf(p.y1), norm_cdf(p.y2)});
        }
        for (const auto& p : ds.dz) {
            table.rows.push_back({"trait" + std::to_string(trait), "d" + std::to_string(++id),
                                  false, norm_cdf(p.y1), norm_cdf(p.y2)});
        }
    }

    AnalyzeOptions opts;
    opts.frequencies = true;
    opts.n_boot = 120;
    opts.normality_repeats = 50;
    opts.seed = 1234;
    const std::vector<TraitAnalysis> a = analyze_traits(table, opts);
    const std::vector<TraitAnalysis> b = analyze_traits(table, opts);
    REQUIRE(a.size() == 2);
    CHECK(analysis_to_json(a) == analysis_to_json(b));
    for (const auto& t : a) {
        CHECK(t.n_mz == 48);
        CHECK(t.n_dz == 96);
        CHECK(std::isfinite(t.normality_mean_p));
        CHECK(t.combined.converged);
        CHECK(std::isfinite(t.delta));
        CHECK(t.delta_ci.ci_low <= t.delta_ci.ci_high);
        CHECK(std::isfinite(t.pearson_delta));
        CHECK(t.lrt.statistic >= 0.0);
        CHECK(t.variance.ratio > 0.0);
    }
    const std::string csv = analysis_to_csv(a);
    CHECK(csv.find("trait0") != std::string::npos);
    CHECK(csv.find("trait1") != std::string::npos);
}
