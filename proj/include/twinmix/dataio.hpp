#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "twinmix/inference.hpp"
#include "twinmix/rng.hpp"

namespace twinmix {

struct TwinDataset {
    std::vector<PairObs> mz;
    std::vector<PairObs> dz;
    std::string trait_name;
    bool transformed = false;
};

// Raw paired observations keyed by trait and zygosity; values may be
// frequencies awaiting the probit transform or already-normal measurements.
struct TraitTable {
    struct Row {
        std::string trait;
        std::string pair_id;
        bool is_mz = false;
        double y1 = 0.0;
        double y2 = 0.0;
    };
    std::vector<Row> rows;

    std::vector<std::string> trait_names() const;  // in first-appearance order
    TraitTable subset(const std::string& trait) const;
};

// Standard normal quantile; domain error outside (0,1).
double inv_norm_cdf(double p);

// Elementwise inverse-normal transform of strictly interior frequencies.
// All rows must belong to one trait; a boundary or exterior value reports
// the offending pair id.
TwinDataset probit_transform(const TraitTable& t);

// Same reshaping without the transform, for data already on a normal scale.
TwinDataset trait_table_to_dataset(const TraitTable& t);

enum class Stratum { MZ, DZ };

// Repeatedly picks one coordinate per pair at random, tests the resulting
// sample for normality, and returns the mean Shapiro-Wilk p-value.
double normality_check(const TwinDataset& ds, Stratum stratum, int repeats, Rng& rng);

struct SwResult {
    double w = 0.0;
    double p = 0.0;
};

// Shapiro-Wilk normality test, Royston's approximation (3 <= n <= 5000).
SwResult shapiro_wilk(std::span<const double> xs);

struct VarianceDiagnostic {
    double sigma2_m = 0.0;
    double sigma2_d = 0.0;
    double ratio = 0.0;  // sigma2_m / sigma2_d
};

// Descriptive equal-variance check: MZ variance from the closed-form fit,
// DZ variance from the separate mixture fit. No p-value is attached.
VarianceDiagnostic variance_diagnostic(std::span<const PairObs> mz,
                                       std::span<const PairObs> dz, const FitOptions& opts);

struct CsvOptions {
    // Treat the value columns as frequencies in (0,1) and probit-transform
    // them on load. Exact 0/1 entries are rejected, not clamped.
    bool frequencies = false;
};

// Reads `pair_id,zygosity,y1,y2` (optionally preceded by a `trait` column
// holding a single trait). Zygosity must be MZ or DZ; every parse problem
// names its line.
TwinDataset load_twin_csv(const std::string& path, const CsvOptions& options = {});

// Reads the same schema but keeps all traits, for the per-trait pipeline.
TraitTable load_trait_table(const std::string& path);

void write_dataset_csv(const TwinDataset& ds, std::ostream& os);
void write_dataset_csv(const TwinDataset& ds, const std::string& path);

// Full per-trait analysis record produced by analyze_traits.
struct TraitAnalysis {
    std::string trait;
    int n_mz = 0;
    int n_dz = 0;
    double normality_mean_p = 0.0;
    FitResult combined;
    double delta = 0.0;
    BootstrapResult delta_ci;
    double pearson_rho_m = 0.0;
    double pearson_rho_d = 0.0;
    double pearson_delta = 0.0;
    LrtResult lrt;
    VarianceDiagnostic variance;
};

struct AnalyzeOptions {
    bool frequencies = false;
    int normality_repeats = 200;
    int n_boot = 500;
    double level = 0.95;
    std::uint64_t seed = 1;
    FitOptions fit;
    int threads = 1;
};

std::vector<TraitAnalysis> analyze_traits(const TraitTable& table, const AnalyzeOptions& opts);

enum class ReportFormat { json, csv };

std::string analysis_to_json(std::span<const TraitAnalysis> traits);
std::string analysis_to_csv(std::span<const TraitAnalysis> traits);
void write_report(std::span<const TraitAnalysis> traits, const std::string& path,
                  ReportFormat format);

// Shortest round-trip decimal text for a double.
std::string format_double(double x);

}  // namespace twinmix
