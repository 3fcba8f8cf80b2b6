#include "twinmix/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"
#include "twinmix/parallel.hpp"

namespace twinmix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_field(double x) { return std::isnan(x) ? std::string() : format_double(x); }

std::string fixed3(double x) {
    if (std::isnan(x)) return "     -";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.3f", x);
    return buf;
}

// Per-cell estimate collector that keeps values in replicate order and
// counts failures.
struct Collector {
    explicit Collector(int n) : values(static_cast<std::size_t>(n)), ok(static_cast<std::size_t>(n), 0) {}
    std::vector<double> values;
    std::vector<char> ok;

    void set(std::int64_t i, double v) {
        values[static_cast<std::size_t>(i)] = v;
        ok[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<double> kept() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (ok[i]) out.push_back(values[i]);
        }
        return out;
    }
};

std::string raw_key(const ReportRow& row) {
    return std::to_string(row.n_m) + "/" + std::to_string(row.n_d) + "/" +
           format_double(row.rho_d_true) + "/" + format_double(row.mu_d2) + "/" + row.estimator;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (n_m < 3 || n_d < 3) throw invalid_argument("ScenarioConfig: stratum sizes must be >= 3");
    if (n_reps < 1) throw invalid_argument("ScenarioConfig: n_reps must be >= 1");
    ModelParams p{mu_m, rho_m, mu_d1, mu_d2, rho_d, sigma2};
    p.validate();
}

TwinDataset generate_dataset(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();
    TwinDataset ds;
    ds.trait_name = "";
    ds.mz.reserve(static_cast<std::size_t>(cfg.n_m));
    ds.dz.reserve(static_cast<std::size_t>(cfg.n_d));
    const BvnParams mzp{cfg.mu_m, cfg.mu_m, cfg.rho_m, cfg.sigma2};
    const BvnParams dzp{cfg.mu_d1, cfg.mu_d2, cfg.rho_d, cfg.sigma2};
    for (int i = 0; i < cfg.n_m; ++i) ds.mz.push_back(sample_pair(rng, mzp));
    for (int j = 0; j < cfg.n_d; ++j) ds.dz.push_back(sample_pair(rng, dzp));
    return ds;
}

ScenarioReport run_table1(const Table1Options& opts) {
    opts.fit.validate();
    if (opts.n_reps < 1) throw invalid_argument("run_table1: n_reps must be >= 1");

    ScenarioReport report;
    std::uint64_t ci = 0;
    for (const double rho_d : opts.rho_d_grid) {
        for (const double mu_d2 : opts.mu_d2_grid) {
            for (const int n : opts.n_grid) {
                const bool homogeneous = mu_d2 == opts.mu_d1;
                ScenarioConfig cfg;
                cfg.n_m = cfg.n_d = n;
                cfg.mu_m = opts.mu_m;
                cfg.rho_m = opts.rho_m;
                cfg.mu_d1 = opts.mu_d1;
                cfg.mu_d2 = mu_d2;
                cfg.rho_d = rho_d;
                cfg.sigma2 = opts.sigma2;

                Collector combined(opts.n_reps), combined_eq(opts.n_reps);
                Collector mixture(opts.n_reps), mixture_eq(opts.n_reps);
                Collector pearson(opts.n_reps);

                parallel_for(opts.n_reps, opts.threads, [&](std::int64_t r) {
                    Rng rng(derive_seed(opts.seed, {1, ci, static_cast<std::uint64_t>(r)}));
                    const TwinDataset ds = generate_dataset(cfg, rng);
                    FitOptions fo = opts.fit;
                    fo.seed = derive_seed(opts.seed, {2, ci, static_cast<std::uint64_t>(r)});
                    try {
                        combined.set(r, fit_combined(ds.mz, ds.dz, fo).params.rho_d);
                    } catch (const error&) {
                    }
                    try {
                        mixture.set(r, fit_dz_separate(ds.dz, fo).params.rho_d);
                    } catch (const error&) {
                    }
                    try {
                        pearson.set(r, pearson_r(ds.dz));
                    } catch (const error&) {
                    }
                    if (homogeneous) {
                        try {
                            combined_eq.set(r, fit_combined_null(ds.mz, ds.dz, fo).params.rho_d);
                        } catch (const error&) {
                        }
                        try {
                            mixture_eq.set(r, fit_dz_separate_equal_means(ds.dz, fo).params.rho_d);
                        } catch (const error&) {
                        }
                    }
                });

                auto push = [&](const char* name, const Collector& c) {
                    const std::vector<double> v = c.kept();
                    ReportRow row;
                    row.n_m = row.n_d = n;
                    row.rho_d_true = rho_d;
                    row.mu_d2 = mu_d2;
                    row.delta_true = kNaN;
                    row.estimator = name;
                    row.mean = mean(v);
                    row.sd = sample_sd(v);
                    row.mean_ci_low = row.mean_ci_high = row.coverage_pct = kNaN;
                    row.n_reps = opts.n_reps;
                    row.n_failed = opts.n_reps - static_cast<int>(v.size());
                    if (opts.keep_raw) report.raw.emplace_back(raw_key(row), v);
                    report.rows.push_back(std::move(row));
                };
                push("Combined", combined);
                if (homogeneous) push("Combined*", combined_eq);
                push("Mixture", mixture);
                if (homogeneous) push("Mixture*", mixture_eq);
                push("Pearson", pearson);
                ++ci;
            }
        }
    }
    return report;
}

ScenarioReport run_table2(const Table2Options& opts) {
    opts.fit.validate();
    if (opts.n_outer < 1) throw invalid_argument("run_table2: n_outer must be >= 1");

    const bool want_combined = std::find(opts.pipelines.begin(), opts.pipelines.end(),
                                         "combined") != opts.pipelines.end();
    const bool want_mixture = std::find(opts.pipelines.begin(), opts.pipelines.end(),
                                        "mixture") != opts.pipelines.end();
    const bool want_pearson = std::find(opts.pipelines.begin(), opts.pipelines.end(),
                                        "pearson") != opts.pipelines.end();

    struct PipeCollect {
        PipeCollect(int n) : point(n), lo(n), hi(n), cover(n) {}
        Collector point, lo, hi, cover;
    };

    ScenarioReport report;
    std::uint64_t ci = 0;
    for (const double delta : opts.delta_grid) {
        for (const double mu_d2 : opts.mu_d2_grid) {
            for (const int n : opts.n_grid) {
                ScenarioConfig cfg;
                cfg.n_m = cfg.n_d = n;
                cfg.mu_m = opts.mu_m;
                cfg.rho_m = opts.rho_m;
                cfg.mu_d1 = opts.mu_d1;
                cfg.mu_d2 = mu_d2;
                cfg.rho_d = opts.rho_m - delta;
                cfg.sigma2 = opts.sigma2;
                cfg.n_reps = opts.n_outer;

                PipeCollect comb(opts.n_outer), mixt(opts.n_outer), pear(opts.n_outer);

                parallel_for(opts.n_outer, opts.threads, [&](std::int64_t r) {
                    Rng rng(derive_seed(opts.seed, {11, ci, static_cast<std::uint64_t>(r)}));
                    const TwinDataset ds = generate_dataset(cfg, rng);
                    FitOptions fo = opts.fit;
                    fo.seed = derive_seed(opts.seed, {13, ci, static_cast<std::uint64_t>(r)});
                    const std::uint64_t boot_seed =
                        derive_seed(opts.seed, {12, ci, static_cast<std::uint64_t>(r)});

                    auto record = [&](PipeCollect& pc, const BootstrapResult& b) {
                        pc.point.set(r, b.point);
                        pc.lo.set(r, b.ci_low);
                        pc.hi.set(r, b.ci_high);
                        pc.cover.set(r, b.ci_low <= delta && delta <= b.ci_high ? 1.0 : 0.0);
                    };

                    if (want_combined) {
                        try {
                            record(comb, bootstrap_ci(ds.mz, ds.dz, Target::delta, opts.n_boot,
                                                      opts.level, boot_seed, fo, 1));
                        } catch (const error&) {
                        }
                    }
                    if (want_mixture) {
                        try {
                            const MzFit mzf = fit_mz(ds.mz);
                            const FitResult dzf = fit_dz_separate(ds.dz, fo);
                            if (!dzf.converged) throw convergence_error("separate fit failed");
                            FitOptions warm = fo;
                            warm.warm_start = dzf.params;
                            warm.n_starts = 1;
                            const auto est = [&warm](std::span<const PairObs> bmz,
                                                     std::span<const PairObs> bdz,
                                                     std::uint64_t rep_seed) {
                                FitOptions o = warm;
                                o.seed = rep_seed;
                                const FitResult f = fit_dz_separate(bdz, o);
                                if (!f.converged) {
                                    throw convergence_error("separate replicate failed");
                                }
                                return fit_mz(bmz).rho - f.params.rho_d;
                            };
                            record(mixt, bootstrap_percentile(
                                             ds.mz, ds.dz, est, mzf.rho - dzf.params.rho_d,
                                             opts.n_boot, opts.level,
                                             derive_seed(boot_seed, {1}), 1));
                        } catch (const error&) {
                        }
                    }
                    if (want_pearson) {
                        try {
                            const auto est = [](std::span<const PairObs> bmz,
                                                std::span<const PairObs> bdz, std::uint64_t) {
                                return pearson_r(bmz) - pearson_r(bdz);
                            };
                            record(pear, bootstrap_percentile(
                                             ds.mz, ds.dz, est,
                                             pearson_r(ds.mz) - pearson_r(ds.dz), opts.n_boot,
                                             opts.level, derive_seed(boot_seed, {2}), 1));
                        } catch (const error&) {
                        }
                    }
                });

                auto push = [&](const char* name, const PipeCollect& pc) {
                    const std::vector<double> points = pc.point.kept();
                    const std::vector<double> lows = pc.lo.kept();
                    const std::vector<double> highs = pc.hi.kept();
                    const std::vector<double> covers = pc.cover.kept();
                    ReportRow row;
                    row.n_m = row.n_d = n;
                    row.rho_d_true = cfg.rho_d;
                    row.mu_d2 = mu_d2;
                    row.delta_true = delta;
                    row.estimator = name;
                    row.mean = mean(points);
                    row.sd = sample_sd(points);
                    row.mean_ci_low = lows.empty() ? kNaN : mean(lows);
                    row.mean_ci_high = highs.empty() ? kNaN : mean(highs);
                    row.coverage_pct = covers.empty() ? kNaN : 100.0 * mean(covers);
                    row.n_reps = opts.n_outer;
                    row.n_failed = opts.n_outer - static_cast<int>(points.size());
                    report.rows.push_back(std::move(row));
                };
                if (want_combined) push("Combined", comb);
                if (want_mixture) push("Mixture", mixt);
                if (want_pearson) push("Pearson", pear);
                ++ci;
            }
        }
    }
    return report;
}

NullQq run_null_qq(const ScenarioConfig& cfg, const FitOptions& fit, int threads) {
    cfg.validate();
    if (cfg.mu_d1 != cfg.mu_d2) {
        throw invalid_argument("run_null_qq: config must be homogeneous (mu_d1 == mu_d2)");
    }

    std::vector<double> stats(static_cast<std::size_t>(cfg.n_reps));
    std::vector<char> ok(static_cast<std::size_t>(cfg.n_reps), 0);
    parallel_for(cfg.n_reps, threads, [&](std::int64_t r) {
        Rng rng(derive_seed(cfg.seed, {21, static_cast<std::uint64_t>(r)}));
        const TwinDataset ds = generate_dataset(cfg, rng);
        FitOptions fo = fit;
        fo.seed = derive_seed(cfg.seed, {22, static_cast<std::uint64_t>(r)});
        try {
            const LrtResult lrt = lrt_homogeneity(ds.mz, ds.dz, fo);
            stats[static_cast<std::size_t>(r)] = lrt.statistic;
            ok[static_cast<std::size_t>(r)] = 1;
        } catch (const error&) {
        }
    });

    NullQq out;
    out.a_n = a_n_empirical(cfg.n_m);
    for (int r = 0; r < cfg.n_reps; ++r) {
        if (ok[static_cast<std::size_t>(r)]) {
            out.statistics.push_back(stats[static_cast<std::size_t>(r)]);
        }
    }
    out.n_failed = cfg.n_reps - static_cast<int>(out.statistics.size());
    std::sort(out.statistics.begin(), out.statistics.end());
    const double n = static_cast<double>(out.statistics.size());
    out.rows.reserve(out.statistics.size());
    for (std::size_t i = 0; i < out.statistics.size(); ++i) {
        const double q = (static_cast<double>(i) + 0.5) / n;
        out.rows.push_back({out.statistics[i], mixture_chi2_quantile(q, 0.5),
                            mixture_chi2_quantile(q, out.a_n)});
    }
    return out;
}

std::string qq_to_csv(const NullQq& qq) {
    std::string out = "empirical,theoretical_unadjusted,theoretical_adjusted\n";
    for (const auto& row : qq.rows) {
        out += format_double(row.empirical) + ',' + format_double(row.theoretical_unadjusted) +
               ',' + format_double(row.theoretical_adjusted) + '\n';
    }
    return out;
}

std::string report_to_csv(const ScenarioReport& report) {
    std::string out =
        "n_m,n_d,rho_d,mu_d2,delta,estimator,mean,sd,mean_ci_low,mean_ci_high,coverage_pct,"
        "n_reps,n_failed\n";
    for (const auto& r : report.rows) {
        out += std::to_string(r.n_m) + ',' + std::to_string(r.n_d) + ',' +
               csv_field(r.rho_d_true) + ',' + csv_field(r.mu_d2) + ',' +
               csv_field(r.delta_true) + ',' + r.estimator + ',' + csv_field(r.mean) + ',' +
               csv_field(r.sd) + ',' + csv_field(r.mean_ci_low) + ',' +
               csv_field(r.mean_ci_high) + ',' + csv_field(r.coverage_pct) + ',' +
               std::to_string(r.n_reps) + ',' + std::to_string(r.n_failed) + '\n';
    }
    return out;
}

std::string report_to_text(const ScenarioReport& report) {
    if (report.rows.empty()) return "(empty report)\n";
    const bool delta_study = !std::isnan(report.rows.front().delta_true);

    // Distinct block values, column values, and row labels in first
    // appearance order; blocks pivot on the true parameter, columns on
    // mu_d2.
    std::vector<double> blocks, columns;
    std::vector<std::pair<int, std::string>> lines;
    for (const auto& r : report.rows) {
        const double b = delta_study ? r.delta_true : r.rho_d_true;
        if (std::find(blocks.begin(), blocks.end(), b) == blocks.end()) blocks.push_back(b);
        if (std::find(columns.begin(), columns.end(), r.mu_d2) == columns.end()) {
            columns.push_back(r.mu_d2);
        }
        const auto key = std::make_pair(r.n_m, r.estimator);
        if (std::find(lines.begin(), lines.end(), key) == lines.end()) lines.push_back(key);
    }

    std::string out;
    char buf[160];
    for (const double b : blocks) {
        std::snprintf(buf, sizeof(buf), "%s = %.2f\n", delta_study ? "delta" : "rho_D", b);
        out += buf;
        std::snprintf(buf, sizeof(buf), "  %-11s %-10s", "(n_M,n_D)", "estimator");
        out += buf;
        for (const double c : columns) {
            std::snprintf(buf, sizeof(buf),
                          delta_study ? "  %-36s" : "  %-15s",
                          ("mu_D2=" + fixed3(c)).c_str());
            out += buf;
        }
        out += '\n';
        for (const auto& [n, estimator] : lines) {
            bool any = false;
            std::string line;
            std::snprintf(buf, sizeof(buf), "  (%d,%d)%*s %-10s", n, n,
                          std::max(0, 9 - 2 * static_cast<int>(std::to_string(n).size())), "",
                          estimator.c_str());
            line += buf;
            for (const double c : columns) {
                const ReportRow* found = nullptr;
                for (const auto& r : report.rows) {
                    const double rb = delta_study ? r.delta_true : r.rho_d_true;
                    if (rb == b && r.mu_d2 == c && r.n_m == n && r.estimator == estimator) {
                        found = &r;
                        break;
                    }
                }
                if (!found) {
                    line += delta_study ? std::string(38, ' ') : std::string(17, ' ');
                    continue;
                }
                any = true;
                if (delta_study) {
                    std::snprintf(buf, sizeof(buf), "  %s (%s,%s) %3.0f%%",
                                  fixed3(found->mean).c_str(), fixed3(found->mean_ci_low).c_str(),
                                  fixed3(found->mean_ci_high).c_str(), found->coverage_pct);
                } else {
                    std::snprintf(buf, sizeof(buf), "  %s %s", fixed3(found->mean).c_str(),
                                  fixed3(found->sd).c_str());
                }
                line += buf;
            }
            if (any) {
                out += line;
                out += '\n';
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace twinmix
