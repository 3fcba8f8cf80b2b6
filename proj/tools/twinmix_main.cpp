#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "twinmix/dataio.hpp"
#include "twinmix/errors.hpp"
#include "twinmix/simulation.hpp"

using nlohmann::json;
using namespace twinmix;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 1;
    int threads = 1;
    std::string format = "table";
    std::string out;
};

void emit(const GlobalOpts& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(g.out);
    if (!f) throw error("cannot open output file: " + g.out);
    f << text;
}

json fit_json(const FitResult& f) {
    return {
        {"mu_m", f.params.mu_m},   {"rho_m", f.params.rho_m}, {"mu_d1", f.params.mu_d1},
        {"mu_d2", f.params.mu_d2}, {"rho_d", f.params.rho_d}, {"sigma2", f.params.sigma2},
        {"loglik", f.loglik},      {"iterations", f.iterations}, {"converged", f.converged},
        {"start_index", f.start_index},
    };
}

std::string kv_table(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::size_t width = 0;
    for (const auto& [k, v] : rows) width = std::max(width, k.size());
    std::string out;
    for (const auto& [k, v] : rows) {
        out += k;
        out.append(width - k.size() + 2, ' ');
        out += v;
        out += '\n';
    }
    return out;
}

std::string flat_csv(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::string head, vals;
    for (const auto& [k, v] : rows) {
        if (!head.empty()) {
            head += ',';
            vals += ',';
        }
        head += k;
        vals += v;
    }
    return head + "\n" + vals + "\n";
}

std::string render_kv(const GlobalOpts& g, const json& j,
                      const std::vector<std::pair<std::string, std::string>>& rows) {
    if (g.format == "json") return j.dump(2) + "\n";
    if (g.format == "csv") return flat_csv(rows);
    return kv_table(rows);
}

std::string fmt(double x) { return format_double(x); }

TwinDataset load_input(const std::string& path, bool frequencies) {
    CsvOptions opts;
    opts.frequencies = frequencies;
    return load_twin_csv(path, opts);
}

int run_fit(const GlobalOpts& g, const std::string& input, const std::string& model,
            bool frequencies, const FitOptions& fo) {
    const TwinDataset ds = load_input(input, frequencies);
    json j;
    std::vector<std::pair<std::string, std::string>> rows;
    rows.emplace_back("model", model);
    j["model"] = model;

    auto add_fit = [&](const FitResult& f) {
        j["estimates"] = fit_json(f);
        j["estimates"]["delta"] = f.params.rho_m - f.params.rho_d;
        rows.emplace_back("mu_m", fmt(f.params.mu_m));
        rows.emplace_back("rho_m", fmt(f.params.rho_m));
        rows.emplace_back("mu_d1", fmt(f.params.mu_d1));
        rows.emplace_back("mu_d2", fmt(f.params.mu_d2));
        rows.emplace_back("rho_d", fmt(f.params.rho_d));
        rows.emplace_back("sigma2", fmt(f.params.sigma2));
        rows.emplace_back("delta", fmt(f.params.rho_m - f.params.rho_d));
        rows.emplace_back("loglik", fmt(f.loglik));
        rows.emplace_back("iterations", std::to_string(f.iterations));
        rows.emplace_back("converged", f.converged ? "true" : "false");
        rows.emplace_back("start_index", std::to_string(f.start_index));
        if (!f.converged) throw convergence_error("fit did not converge");
    };

    if (model == "combined") {
        add_fit(fit_combined(ds.mz, ds.dz, fo));
    } else if (model == "null") {
        add_fit(fit_combined_null(ds.mz, ds.dz, fo));
    } else if (model == "separate") {
        const MzFit mzf = fit_mz(ds.mz);
        const FitResult dzf = fit_dz_separate(ds.dz, fo);
        j["mz"] = {{"mu_m", mzf.mu},
                   {"rho_m", mzf.rho},
                   {"sigma2_m", mzf.sigma2},
                   {"loglik", mzf.loglik}};
        j["dz"] = fit_json(dzf);
        rows.emplace_back("mu_m", fmt(mzf.mu));
        rows.emplace_back("rho_m", fmt(mzf.rho));
        rows.emplace_back("sigma2_m", fmt(mzf.sigma2));
        rows.emplace_back("mu_d1", fmt(dzf.params.mu_d1));
        rows.emplace_back("mu_d2", fmt(dzf.params.mu_d2));
        rows.emplace_back("rho_d", fmt(dzf.params.rho_d));
        rows.emplace_back("sigma2_d", fmt(dzf.params.sigma2));
        rows.emplace_back("delta", fmt(mzf.rho - dzf.params.rho_d));
        rows.emplace_back("loglik_mz", fmt(mzf.loglik));
        rows.emplace_back("loglik_dz", fmt(dzf.loglik));
        rows.emplace_back("converged", dzf.converged ? "true" : "false");
        if (!dzf.converged) throw convergence_error("separate DZ fit did not converge");
    } else {  // mz-only
        const MzFit mzf = fit_mz(ds.mz);
        j["mz"] = {{"mu_m", mzf.mu},
                   {"rho_m", mzf.rho},
                   {"sigma2_m", mzf.sigma2},
                   {"loglik", mzf.loglik}};
        rows.emplace_back("mu_m", fmt(mzf.mu));
        rows.emplace_back("rho_m", fmt(mzf.rho));
        rows.emplace_back("sigma2_m", fmt(mzf.sigma2));
        rows.emplace_back("loglik", fmt(mzf.loglik));
    }
    emit(g, render_kv(g, j, rows));
    return 0;
}

int run_test(const GlobalOpts& g, const std::string& input, bool frequencies, bool unadjusted,
             const FitOptions& fo) {
    const TwinDataset ds = load_input(input, frequencies);
    const LrtResult l = lrt_homogeneity(ds.mz, ds.dz, fo);
    const char* primary = unadjusted ? "unadjusted" : "adjusted";
    const double p_primary = unadjusted ? l.p_unadjusted : l.p_adjusted;
    const json j = {
        {"statistic", l.statistic},
        {"a_n", l.a_n},
        {"p_unadjusted", l.p_unadjusted},
        {"p_adjusted", l.p_adjusted},
        {"primary_null", primary},
        {"p_value", p_primary},
        {"loglik_unrestricted", l.fit_unrestricted.loglik},
        {"loglik_null", l.fit_null.loglik},
    };
    const std::vector<std::pair<std::string, std::string>> rows{
        {"statistic", fmt(l.statistic)},
        {"a_n", fmt(l.a_n)},
        {"p_unadjusted", fmt(l.p_unadjusted)},
        {"p_adjusted", fmt(l.p_adjusted)},
        {"primary_null", primary},
        {"p_value", fmt(p_primary)},
        {"loglik_unrestricted", fmt(l.fit_unrestricted.loglik)},
        {"loglik_null", fmt(l.fit_null.loglik)},
    };
    emit(g, render_kv(g, j, rows));
    return 0;
}

int run_delta(const GlobalOpts& g, const std::string& input, bool frequencies, int n_boot,
              double level, const FitOptions& fo) {
    const TwinDataset ds = load_input(input, frequencies);
    const BootstrapResult b =
        bootstrap_ci(ds.mz, ds.dz, Target::delta, n_boot, level, g.seed, fo, g.threads);
    const json j = {
        {"target", "delta"},      {"point", b.point},   {"ci_low", b.ci_low},
        {"ci_high", b.ci_high},   {"level", b.level},   {"n_boot", b.n_boot},
        {"n_failed", b.n_failed}, {"flagged", b.flagged},
    };
    const std::vector<std::pair<std::string, std::string>> rows{
        {"target", "delta"},
        {"point", fmt(b.point)},
        {"ci_low", fmt(b.ci_low)},
        {"ci_high", fmt(b.ci_high)},
        {"level", fmt(b.level)},
        {"n_boot", std::to_string(b.n_boot)},
        {"n_failed", std::to_string(b.n_failed)},
        {"flagged", b.flagged ? "true" : "false"},
    };
    emit(g, render_kv(g, j, rows));
    return 0;
}

std::string render_report(const GlobalOpts& g, const ScenarioReport& rep) {
    if (g.format == "json") {
        json arr = json::array();
        for (const auto& r : rep.rows) {
            json row = {
                {"n_m", r.n_m},       {"n_d", r.n_d},
                {"estimator", r.estimator}, {"mean", r.mean},
                {"sd", r.sd},         {"n_reps", r.n_reps},
                {"n_failed", r.n_failed},
            };
            if (!std::isnan(r.rho_d_true)) row["rho_d"] = r.rho_d_true;
            if (!std::isnan(r.mu_d2)) row["mu_d2"] = r.mu_d2;
            if (!std::isnan(r.delta_true)) row["delta"] = r.delta_true;
            if (!std::isnan(r.coverage_pct)) {
                row["mean_ci_low"] = r.mean_ci_low;
                row["mean_ci_high"] = r.mean_ci_high;
                row["coverage_pct"] = r.coverage_pct;
            }
            arr.push_back(std::move(row));
        }
        return arr.dump(2) + "\n";
    }
    if (g.format == "csv") return report_to_csv(rep);
    return report_to_text(rep);
}

int run_simulate(const GlobalOpts& g, const std::string& scenario,
                 const std::vector<int>& n_list, int reps, int outer, int boot, double level,
                 int nm, int nd, double rho_m, double rho_d, const FitOptions& fo) {
    if (scenario == "table1") {
        Table1Options o;
        o.fit = fo;
        o.seed = g.seed;
        o.threads = g.threads;
        o.n_reps = reps;
        if (!n_list.empty()) o.n_grid = n_list;
        emit(g, render_report(g, run_table1(o)));
        return 0;
    }
    if (scenario == "table2") {
        Table2Options o;
        o.fit = fo;
        o.seed = g.seed;
        o.threads = g.threads;
        o.n_outer = outer;
        o.n_boot = boot;
        o.level = level;
        if (!n_list.empty()) o.n_grid = n_list;
        emit(g, render_report(g, run_table2(o)));
        return 0;
    }
    ScenarioConfig cfg;
    cfg.n_m = nm;
    cfg.n_d = nd;
    cfg.rho_m = rho_m;
    cfg.rho_d = rho_d;
    cfg.mu_d1 = cfg.mu_d2 = 0.0;
    cfg.n_reps = reps;
    cfg.seed = g.seed;
    const NullQq qq = run_null_qq(cfg, fo, g.threads);
    if (g.format == "json") {
        json arr = json::array();
        for (const auto& r : qq.rows) {
            arr.push_back({{"empirical", r.empirical},
                           {"theoretical_unadjusted", r.theoretical_unadjusted},
                           {"theoretical_adjusted", r.theoretical_adjusted}});
        }
        emit(g, json{{"a_n", qq.a_n}, {"n_failed", qq.n_failed}, {"quantiles", arr}}.dump(2) +
                    "\n");
    } else {
        emit(g, qq_to_csv(qq));
    }
    return 0;
}

int run_calibrate(const GlobalOpts& g, const std::string& grid_name,
                  const std::vector<int>& nm_list, const std::vector<int>& nd_list, int reps,
                  const FitOptions& fo) {
    std::vector<std::pair<int, int>> grid;
    if (!nm_list.empty() || !nd_list.empty()) {
        if (nm_list.empty() || nd_list.empty()) {
            throw invalid_argument("calibrate: both --nm and --nd are needed for a custom grid");
        }
        for (int a : nm_list) {
            for (int b : nd_list) grid.emplace_back(a, b);
        }
    } else if (grid_name == "paper") {
        for (int a = 50; a <= 400; a += 50) {
            for (int b = 50; b <= 400; b += 50) grid.emplace_back(a, b);
        }
    } else {
        throw invalid_argument("calibrate: unknown grid '" + grid_name + "'");
    }

    const CalibrationReport rep = calibrate_an(grid, reps, g.seed, fo, g.threads);
    if (g.format == "json") {
        json cells = json::array();
        for (const auto& c : rep.grid) {
            cells.push_back(
                {{"n_m", c.n_m}, {"n_d", c.n_d}, {"a_hat", c.a_hat}, {"n_failed", c.n_failed}});
        }
        emit(g, json{{"cells", cells},
                     {"fitted_slope", rep.fitted_slope},
                     {"fixed_intercept", rep.fixed_intercept},
                     {"residual_sd", rep.residual_sd}}
                        .dump(2) +
                    "\n");
    } else if (g.format == "csv") {
        emit(g, calibration_to_csv(rep));
    } else {
        std::string out = calibration_to_csv(rep);
        out += "fitted a_n = 0.5 + " + fmt(rep.fitted_slope) + "/n_M   (residual sd " +
               fmt(rep.residual_sd) + ")\n";
        emit(g, out);
    }
    return 0;
}

int run_analyze(const GlobalOpts& g, const std::string& input, bool frequencies, int repeats,
                int n_boot, double level, const FitOptions& fo) {
    const TraitTable table = load_trait_table(input);
    AnalyzeOptions opts;
    opts.frequencies = frequencies;
    opts.normality_repeats = repeats;
    opts.n_boot = n_boot;
    opts.level = level;
    opts.seed = g.seed;
    opts.fit = fo;
    opts.threads = g.threads;
    const std::vector<TraitAnalysis> traits = analyze_traits(table, opts);

    if (g.format == "json") {
        emit(g, analysis_to_json(traits));
    } else if (g.format == "csv") {
        emit(g, analysis_to_csv(traits));
    } else {
        std::string out;
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-14s %5s %5s %7s %7s %7s %-17s %9s %7s %7s\n", "trait",
                      "n_mz", "n_dz", "rho_m", "rho_d", "delta", "delta CI", "lrt_p_adj",
                      "norm_p", "var_rat");
        out += buf;
        for (const auto& t : traits) {
            std::snprintf(buf, sizeof(buf),
                          "%-14s %5d %5d %7.3f %7.3f %7.3f (%6.3f,%6.3f) %9.4f %7.3f %7.3f\n",
                          t.trait.c_str(), t.n_mz, t.n_dz, t.combined.params.rho_m,
                          t.combined.params.rho_d, t.delta, t.delta_ci.ci_low,
                          t.delta_ci.ci_high, t.lrt.p_adjusted, t.normality_mean_p,
                          t.variance.ratio);
            out += buf;
        }
        emit(g, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    GlobalOpts g;
    CLI::App app{"Correlation and genetic-impact inference for unordered twin pairs"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "Master seed for every random stream");
    app.add_option("--threads", g.threads, "Worker threads (never changes results)")
        ->check(CLI::PositiveNumber);
    app.add_option("--format", g.format, "Output format")
        ->check(CLI::IsMember({"json", "csv", "table"}));
    app.add_option("--out", g.out, "Write output to a file instead of stdout");

    FitOptions fo;
    std::string input, model = "combined", scenario, grid_name = "paper";
    bool frequencies = false, unadjusted = false;
    int n_boot = 1000, reps = 1000, outer = 100, boot = 500, repeats = 200;
    int nm = 400, nd = 400;
    double level = 0.95, rho_m = 0.9, rho_d = 0.3;
    std::vector<int> n_list, nm_list, nd_list;

    auto add_fit_opts = [&fo](CLI::App* cmd) {
        cmd->add_option("--max-iter", fo.max_iter, "EM iteration budget per start");
        cmd->add_option("--tol", fo.tol, "Relative log-likelihood tolerance");
        cmd->add_option("--starts", fo.n_starts, "Number of optimizer starts");
    };

    CLI::App* fit = app.add_subcommand("fit", "Fit a model to a twin-pair CSV");
    fit->add_option("--input", input, "Input CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", model, "Which model to fit")
        ->check(CLI::IsMember({"combined", "separate", "null", "mz-only"}));
    fit->add_flag("--frequencies", frequencies, "Treat y columns as frequencies in (0,1)");
    add_fit_opts(fit);

    CLI::App* test = app.add_subcommand("test", "Homogeneity likelihood-ratio test");
    test->add_option("--input", input, "Input CSV")->required()->check(CLI::ExistingFile);
    test->add_flag("--frequencies", frequencies, "Treat y columns as frequencies in (0,1)");
    test->add_flag("--unadjusted", unadjusted, "Report the unadjusted null as primary");
    add_fit_opts(test);

    CLI::App* delta = app.add_subcommand("delta", "Bootstrap confidence interval for delta");
    delta->add_option("--input", input, "Input CSV")->required()->check(CLI::ExistingFile);
    delta->add_flag("--frequencies", frequencies, "Treat y columns as frequencies in (0,1)");
    delta->add_option("--n-boot", n_boot, "Bootstrap replicates");
    delta->add_option("--level", level, "Confidence level in (0,1)");
    add_fit_opts(delta);

    CLI::App* sim = app.add_subcommand("simulate", "Run a simulation study");
    sim->add_option("scenario", scenario, "Which study to run")
        ->required()
        ->check(CLI::IsMember({"table1", "table2", "qq"}));
    sim->add_option("--n", n_list, "Per-stratum sizes for the grid (repeatable)");
    sim->add_option("--reps", reps, "Replicates per cell (table1/qq)");
    sim->add_option("--outer", outer, "Outer replicates per cell (table2)");
    sim->add_option("--boot", boot, "Bootstrap draws per replicate (table2)");
    sim->add_option("--level", level, "Confidence level (table2)");
    sim->add_option("--nm", nm, "MZ pairs (qq)");
    sim->add_option("--nd", nd, "DZ pairs (qq)");
    sim->add_option("--rho-m", rho_m, "MZ correlation (qq)");
    sim->add_option("--rho-d", rho_d, "DZ correlation (qq)");
    add_fit_opts(sim);

    CLI::App* cal = app.add_subcommand("calibrate", "Recalibrate the adjusted-null weight a_n");
    cal->add_option("--grid", grid_name, "Grid preset ('paper' = 8x8 from 50 to 400)");
    cal->add_option("--nm", nm_list, "Custom grid MZ sizes");
    cal->add_option("--nd", nd_list, "Custom grid DZ sizes");
    cal->add_option("--reps", reps, "Null replicates per cell");
    add_fit_opts(cal);

    CLI::App* ana = app.add_subcommand("analyze", "Full per-trait analysis of a trait file");
    ana->add_option("--input", input, "Input CSV (optionally with a trait column)")
        ->required()
        ->check(CLI::ExistingFile);
    ana->add_flag("--frequencies", frequencies, "Probit-transform the value columns");
    ana->add_option("--repeats", repeats, "Normality-check repeats");
    ana->add_option("--n-boot", n_boot, "Bootstrap replicates for the delta CI");
    ana->add_option("--level", level, "Confidence level in (0,1)");
    add_fit_opts(ana);

    try {
        app.parse(argc, argv);
        fo.seed = g.seed;
        if (fit->parsed()) return run_fit(g, input, model, frequencies, fo);
        if (test->parsed()) return run_test(g, input, frequencies, unadjusted, fo);
        if (delta->parsed()) return run_delta(g, input, frequencies, n_boot, level, fo);
        if (sim->parsed()) {
            return run_simulate(g, scenario, n_list, reps, outer, boot, level, nm, nd, rho_m,
                                rho_d, fo);
        }
        if (cal->parsed()) return run_calibrate(g, grid_name, nm_list, nd_list, reps, fo);
        if (ana->parsed()) return run_analyze(g, input, frequencies, repeats, n_boot, level, fo);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const parse_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const degenerate_data_error& e) {
        std::cerr << "fit failure: " << e.what() << "\n";
        return 3;
    } catch (const convergence_error& e) {
        std::cerr << "fit failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
