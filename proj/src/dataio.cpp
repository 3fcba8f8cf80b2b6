#include "twinmix/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"

namespace twinmix {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double_field(const std::string& s, long line_no, const std::string& column) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto* begin = t.data();
    const auto* end = t.data() + t.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end || t.empty()) {
        throw parse_error("could not parse '" + s + "' as a number in column " + column,
                          line_no);
    }
    if (!std::isfinite(v)) {
        throw parse_error("non-finite value in column " + column, line_no);
    }
    return v;
}

struct ParsedCsv {
    TraitTable table;
    bool has_trait_column = false;
};

ParsedCsv parse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open input file: " + path);

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw parse_error("empty file: " + path, 1);
    ++line_no;

    const std::vector<std::string> header = split_csv_line(line);
    int col_trait = -1, col_id = -1, col_zyg = -1, col_y1 = -1, col_y2 = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string h = lower(header[i]);
        if (h == "trait") col_trait = static_cast<int>(i);
        else if (h == "pair_id") col_id = static_cast<int>(i);
        else if (h == "zygosity") col_zyg = static_cast<int>(i);
        else if (h == "y1") col_y1 = static_cast<int>(i);
        else if (h == "y2") col_y2 = static_cast<int>(i);
        else throw parse_error("unknown column '" + header[i] + "'", line_no);
    }
    if (col_zyg < 0 || col_y1 < 0 || col_y2 < 0 || col_id < 0) {
        throw parse_error("header must contain pair_id, zygosity, y1, y2", line_no);
    }

    ParsedCsv out;
    out.has_trait_column = col_trait >= 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw parse_error("expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(f.size()),
                              line_no);
        }
        TraitTable::Row row;
        row.trait = col_trait >= 0 ? f[static_cast<std::size_t>(col_trait)] : "trait";
        row.pair_id = f[static_cast<std::size_t>(col_id)];
        const std::string zyg = lower(f[static_cast<std::size_t>(col_zyg)]);
        if (zyg == "mz") row.is_mz = true;
        else if (zyg == "dz") row.is_mz = false;
        else {
            throw parse_error("zygosity '" + f[static_cast<std::size_t>(col_zyg)] +
                                  "' is neither MZ nor DZ",
                              line_no);
        }
        row.y1 = parse_double_field(f[static_cast<std::size_t>(col_y1)], line_no, "y1");
        row.y2 = parse_double_field(f[static_cast<std::size_t>(col_y2)], line_no, "y2");
        out.table.rows.push_back(std::move(row));
    }
    return out;
}

TwinDataset rows_to_dataset(const TraitTable& t, bool transform) {
    const std::vector<std::string> names = t.trait_names();
    if (names.size() > 1) {
        throw invalid_argument("dataset holds " + std::to_string(names.size()) +
                               " traits; analyze them per trait");
    }
    TwinDataset ds;
    ds.trait_name = names.empty() ? "" : names.front();
    ds.transformed = transform;
    for (const auto& row : t.rows) {
        double y1 = row.y1, y2 = row.y2;
        if (transform) {
            if (!(row.y1 > 0.0 && row.y1 < 1.0) || !(row.y2 > 0.0 && row.y2 < 1.0)) {
                throw invalid_argument("frequency outside (0,1) for pair '" + row.pair_id +
                                       "' of trait '" + row.trait + "'");
            }
            y1 = inv_norm_cdf(row.y1);
            y2 = inv_norm_cdf(row.y2);
        }
        (row.is_mz ? ds.mz : ds.dz).push_back({y1, y2});
    }
    return ds;
}

nlohmann::json fit_to_json(const FitResult& f) {
    return {
        {"mu_m", f.params.mu_m},   {"rho_m", f.params.rho_m}, {"mu_d1", f.params.mu_d1},
        {"mu_d2", f.params.mu_d2}, {"rho_d", f.params.rho_d}, {"sigma2", f.params.sigma2},
        {"loglik", f.loglik},      {"iterations", f.iterations}, {"converged", f.converged},
        {"start_index", f.start_index},
    };
}

}  // namespace

std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string> TraitTable::trait_names() const {
    std::vector<std::string> names;
    for (const auto& row : rows) {
        if (std::find(names.begin(), names.end(), row.trait) == names.end()) {
            names.push_back(row.trait);
        }
    }
    return names;
}

TraitTable TraitTable::subset(const std::string& trait) const {
    TraitTable out;
    for (const auto& row : rows) {
        if (row.trait == trait) out.rows.push_back(row);
    }
    return out;
}

double inv_norm_cdf(double p) { return norm_quantile(p); }

TwinDataset probit_transform(const TraitTable& t) { return rows_to_dataset(t, true); }

TwinDataset trait_table_to_dataset(const TraitTable& t) { return rows_to_dataset(t, false); }

double normality_check(const TwinDataset& ds, Stratum stratum, int repeats, Rng& rng) {
    const std::vector<PairObs>& pairs = stratum == Stratum::MZ ? ds.mz : ds.dz;
    if (pairs.size() < 8) throw invalid_argument("normality_check: stratum must hold >= 8 pairs");
    if (repeats < 1) throw invalid_argument("normality_check: repeats must be >= 1");

    std::vector<double> sample(pairs.size());
    double p_sum = 0.0;
    for (int r = 0; r < repeats; ++r) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            sample[i] = rng.bernoulli(0.5) ? pairs[i].y1 : pairs[i].y2;
        }
        p_sum += shapiro_wilk(sample).p;
    }
    return p_sum / static_cast<double>(repeats);
}

VarianceDiagnostic variance_diagnostic(std::span<const PairObs> mz,
                                       std::span<const PairObs> dz, const FitOptions& opts) {
    VarianceDiagnostic out;
    out.sigma2_m = fit_mz(mz).sigma2;
    out.sigma2_d = fit_dz_separate(dz, opts).params.sigma2;
    out.ratio = out.sigma2_m / out.sigma2_d;
    return out;
}

TwinDataset load_twin_csv(const std::string& path, const CsvOptions& options) {
    const ParsedCsv parsed = parse_csv(path);
    if (parsed.table.rows.empty()) throw parse_error("no data rows in " + path, 2);
    if (options.frequencies) {
        // Re-raise boundary problems as parse errors that carry the line.
        long line = 1;
        for (const auto& row : parsed.table.rows) {
            ++line;
            if (!(row.y1 > 0.0 && row.y1 < 1.0) || !(row.y2 > 0.0 && row.y2 < 1.0)) {
                throw parse_error("frequency outside (0,1) for pair '" + row.pair_id + "'",
                                  line);
            }
        }
    }
    return rows_to_dataset(parsed.table, options.frequencies);
}

TraitTable load_trait_table(const std::string& path) {
    ParsedCsv parsed = parse_csv(path);
    if (parsed.table.rows.empty()) throw parse_error("no data rows in " + path, 2);
    return std::move(parsed.table);
}

void write_dataset_csv(const TwinDataset& ds, std::ostream& os) {
    const bool with_trait = !ds.trait_name.empty();
    if (with_trait) os << "trait,";
    os << "pair_id,zygosity,y1,y2\n";
    long id = 0;
    for (const auto& p : ds.mz) {
        if (with_trait) os << ds.trait_name << ',';
        os << "mz" << ++id << ",MZ," << format_double(p.y1) << ',' << format_double(p.y2)
           << '\n';
    }
    id = 0;
    for (const auto& p : ds.dz) {
        if (with_trait) os << ds.trait_name << ',';
        os << "dz" << ++id << ",DZ," << format_double(p.y1) << ',' << format_double(p.y2)
           << '\n';
    }
}

void write_dataset_csv(const TwinDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw error("cannot open output file: " + path);
    write_dataset_csv(ds, out);
}

std::vector<TraitAnalysis> analyze_traits(const TraitTable& table, const AnalyzeOptions& opts) {
    std::vector<TraitAnalysis> out;
    const std::vector<std::string> names = table.trait_names();
    if (names.empty()) throw invalid_argument("analyze_traits: no traits in table");

    for (std::size_t ti = 0; ti < names.size(); ++ti) {
        const TraitTable sub = table.subset(names[ti]);
        const TwinDataset ds =
            opts.frequencies ? probit_transform(sub) : trait_table_to_dataset(sub);

        TraitAnalysis ta;
        ta.trait = names[ti];
        ta.n_mz = static_cast<int>(ds.mz.size());
        ta.n_dz = static_cast<int>(ds.dz.size());

        Rng norm_rng(derive_seed(opts.seed, {0xA0A0ULL, ti}));
        ta.normality_mean_p = normality_check(ds, Stratum::MZ, opts.normality_repeats, norm_rng);

        FitOptions fo = opts.fit;
        fo.seed = derive_seed(opts.seed, {0xF17ULL, ti});
        ta.combined = fit_combined(ds.mz, ds.dz, fo);
        ta.delta = ta.combined.params.rho_m - ta.combined.params.rho_d;
        ta.delta_ci = bootstrap_ci(ds.mz, ds.dz, Target::delta, opts.n_boot, opts.level,
                                   derive_seed(opts.seed, {0xB00ULL, ti}), fo, opts.threads);

        ta.pearson_rho_m = pearson_r(ds.mz);
        ta.pearson_rho_d = pearson_r(ds.dz);
        ta.pearson_delta = ta.pearson_rho_m - ta.pearson_rho_d;

        FitOptions lo = opts.fit;
        lo.seed = derive_seed(opts.seed, {0x7E57ULL, ti});
        ta.lrt = lrt_homogeneity(ds.mz, ds.dz, lo);
        ta.variance = variance_diagnostic(ds.mz, ds.dz, fo);
        out.push_back(std::move(ta));
    }
    return out;
}

std::string analysis_to_json(std::span<const TraitAnalysis> traits) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : traits) {
        nlohmann::json j;
        j["trait"] = t.trait;
        j["n_mz"] = t.n_mz;
        j["n_dz"] = t.n_dz;
        j["estimates"] = fit_to_json(t.combined);
        j["estimates"]["delta"] = t.delta;
        j["ci"] = {
            {"target", "delta"},       {"level", t.delta_ci.level},
            {"low", t.delta_ci.ci_low}, {"high", t.delta_ci.ci_high},
            {"n_boot", t.delta_ci.n_boot}, {"n_failed", t.delta_ci.n_failed},
            {"flagged", t.delta_ci.flagged},
        };
        j["lrt"] = {
            {"statistic", t.lrt.statistic},
            {"a_n", t.lrt.a_n},
            {"p_unadjusted", t.lrt.p_unadjusted},
            {"p_adjusted", t.lrt.p_adjusted},
        };
        j["pearson"] = {
            {"rho_m", t.pearson_rho_m},
            {"rho_d", t.pearson_rho_d},
            {"delta", t.pearson_delta},
        };
        j["diagnostics"] = {
            {"normality_mean_p", t.normality_mean_p},
            {"sigma2_m", t.variance.sigma2_m},
            {"sigma2_d", t.variance.sigma2_d},
            {"ratio", t.variance.ratio},
        };
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::string analysis_to_csv(std::span<const TraitAnalysis> traits) {
    std::string out =
        "trait,n_mz,n_dz,rho_m,rho_d,delta,ci_low,ci_high,pearson_rho_m,pearson_rho_d,"
        "pearson_delta,lrt_statistic,a_n,p_unadjusted,p_adjusted,normality_mean_p,sigma2_m,"
        "sigma2_d,variance_ratio\n";
    for (const auto& t : traits) {
        out += t.trait + ',' + std::to_string(t.n_mz) + ',' + std::to_string(t.n_dz) + ',' +
               format_double(t.combined.params.rho_m) + ',' +
               format_double(t.combined.params.rho_d) + ',' + format_double(t.delta) + ',' +
               format_double(t.delta_ci.ci_low) + ',' + format_double(t.delta_ci.ci_high) +
               ',' + format_double(t.pearson_rho_m) + ',' + format_double(t.pearson_rho_d) +
               ',' + format_double(t.pearson_delta) + ',' + format_double(t.lrt.statistic) +
               ',' + format_double(t.lrt.a_n) + ',' + format_double(t.lrt.p_unadjusted) + ',' +
               format_double(t.lrt.p_adjusted) + ',' + format_double(t.normality_mean_p) + ',' +
               format_double(t.variance.sigma2_m) + ',' + format_double(t.variance.sigma2_d) +
               ',' + format_double(t.variance.ratio) + '\n';
    }
    return out;
}

void write_report(std::span<const TraitAnalysis> traits, const std::string& path,
                  ReportFormat format) {
    std::ofstream out(path);
    if (!out) throw error("cannot open output file: " + path);
    out << (format == ReportFormat::json ? analysis_to_json(traits) : analysis_to_csv(traits));
}

}  // namespace twinmix
