#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twinmix/dataio.hpp"

namespace twinmix {

// One simulation-grid cell: stratum sizes, generating parameters, replicate
// count, and the master seed it derives its streams from.
struct ScenarioConfig {
    int n_m = 100;
    int n_d = 100;
    double mu_m = 0.0;
    double rho_m = 0.9;
    double mu_d1 = 0.0;
    double mu_d2 = 0.0;
    double rho_d = 0.3;
    double sigma2 = 1.0;
    int n_reps = 1000;
    std::uint64_t seed = 1;

    void validate() const;
};

// Draws n_m MZ pairs from the equal-means bivariate normal and n_d DZ pairs
// from the swap mixture, in that order on one stream.
TwinDataset generate_dataset(const ScenarioConfig& cfg, Rng& rng);

// One summary row of a scenario report; fields that do not apply to the
// estimator hold NaN.
struct ReportRow {
    int n_m = 0;
    int n_d = 0;
    double rho_d_true = 0.0;
    double mu_d2 = 0.0;
    double delta_true = 0.0;  // NaN in correlation studies
    std::string estimator;
    double mean = 0.0;
    double sd = 0.0;
    double mean_ci_low = 0.0;    // NaN without bootstrap
    double mean_ci_high = 0.0;   // NaN without bootstrap
    double coverage_pct = 0.0;   // NaN without bootstrap
    int n_reps = 0;
    int n_failed = 0;
};

struct ScenarioReport {
    std::vector<ReportRow> rows;
    // Raw replicate values keyed "<n_m>/<n_d>/<rho_d>/<mu_d2>/<estimator>",
    // retained only on request.
    std::vector<std::pair<std::string, std::vector<double>>> raw;
};

std::string report_to_csv(const ScenarioReport& report);
std::string report_to_text(const ScenarioReport& report);

struct Table1Options {
    std::vector<double> rho_d_grid{0.3, 0.5, 0.8};
    std::vector<double> mu_d2_grid{1.0, 0.5, 0.0};
    std::vector<int> n_grid{100, 400};
    double mu_m = 0.0;
    double rho_m = 0.9;
    double mu_d1 = 0.0;
    double sigma2 = 1.0;
    int n_reps = 1000;
    std::uint64_t seed = 1;
    FitOptions fit;
    int threads = 1;
    bool keep_raw = false;
};

// Correlation-recovery study: per cell and replicate, rho_d estimates from
// the combined fit, the separate mixture fit, Pearson, and (in homogeneous
// cells) the equal-means variants; reports mean and SD per estimator.
ScenarioReport run_table1(const Table1Options& opts);

struct Table2Options {
    std::vector<double> delta_grid{0.10, 0.35, 0.60};
    std::vector<double> mu_d2_grid{1.0, 0.5, 0.0};
    std::vector<int> n_grid{100, 400};
    double mu_m = 0.0;
    double rho_m = 0.9;
    double mu_d1 = 0.0;
    double sigma2 = 1.0;
    int n_outer = 100;
    int n_boot = 500;
    double level = 0.95;
    std::uint64_t seed = 1;
    FitOptions fit;
    int threads = 1;
    // Any subset of {"combined", "mixture", "pearson"}.
    std::vector<std::string> pipelines{"combined", "mixture", "pearson"};
};

// Genetic-impact study: per cell and outer replicate, a point estimate and a
// stratified bootstrap CI for delta from each pipeline; reports mean
// estimate, mean CI endpoints, and empirical coverage of the true delta.
ScenarioReport run_table2(const Table2Options& opts);

struct QqRow {
    double empirical = 0.0;
    double theoretical_unadjusted = 0.0;
    double theoretical_adjusted = 0.0;
};

struct NullQq {
    std::vector<QqRow> rows;        // ascending in the empirical statistic
    std::vector<double> statistics; // sorted homogeneity statistics
    double a_n = 0.5;
    int n_failed = 0;
};

// Null-distribution study of the homogeneity statistic: simulates
// homogeneous datasets at cfg, pairs the sorted statistics with the
// quantiles of the unadjusted (w = 0.5) and adjusted (w = a_n) mixture laws.
NullQq run_null_qq(const ScenarioConfig& cfg, const FitOptions& fit, int threads = 1);

std::string qq_to_csv(const NullQq& qq);

}  // namespace twinmix
