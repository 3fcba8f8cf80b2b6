#include "twinmix/estimation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "twinmix/errors.hpp"
#include "twinmix/math.hpp"
#include "twinmix/rng.hpp"

namespace twinmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kParamTol = 1e-8;   // absolute parameter-change half of the stop rule
constexpr double kTieWindow = 1e-9;  // restart ties within this window go to the lowest index

// Raw moments of pair data, usually computed after centering.
struct Moments {
    double n = 0;
    double s1 = 0, s2 = 0;  // sums of first/second coordinates
    double ssq = 0;         // sum of y1^2 + y2^2
    double scross = 0;      // sum of y1*y2
};

double grand_mean(std::span<const PairObs> pairs) {
    double s = 0.0;
    for (const auto& p : pairs) s += p.y1 + p.y2;
    return s / (2.0 * static_cast<double>(pairs.size()));
}

Moments make_moments(std::span<const PairObs> pairs, double center) {
    Moments m;
    m.n = static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        const double a = p.y1 - center;
        const double b = p.y2 - center;
        m.s1 += a;
        m.s2 += b;
        m.ssq += a * a + b * b;
        m.scross += a * b;
    }
    return m;
}

// Sum of equal-variance bivariate normal log-densities over a stratum,
// expressed through the stratum's raw moments.
double sum_bvn_ll(const Moments& m, double mu1, double mu2, double rho, double s2) {
    const double q1 = m.ssq - 2.0 * mu1 * m.s1 - 2.0 * mu2 * m.s2 + m.n * (mu1 * mu1 + mu2 * mu2);
    const double q2 = m.scross - mu2 * m.s1 - mu1 * m.s2 + m.n * mu1 * mu2;
    const double omr2 = 1.0 - rho * rho;
    return -m.n * kLog2Pi - m.n * std::log(s2) - 0.5 * m.n * std::log(omr2) -
           (q1 - 2.0 * rho * q2) / (2.0 * s2 * omr2);
}

// MZ-stratum contribution from its fixed deviation sums A (squares) and C
// (cross products).
double mz_agg_ll(double n, double A, double C, double rho, double s2) {
    const double omr2 = 1.0 - rho * rho;
    return -n * kLog2Pi - n * std::log(s2) - 0.5 * n * std::log(omr2) -
           (A - 2.0 * rho * C) / (2.0 * s2 * omr2);
}

// Stationarity condition in rho for fixed sigma2 (per stratum):
//   h(rho) = n*s2*rho*(1-rho^2) + C*(1+rho^2) - rho*A = 0.
// h(-1) = A + 2C >= 0 >= 2C - A = h(1), so a root always brackets.
double h_rho(double rho, double k, double A, double C) {
    return k * rho * (1.0 - rho * rho) + C * (1.0 + rho * rho) - rho * A;
}

double h_rho_deriv(double rho, double k, double A, double C) {
    return k * (1.0 - 3.0 * rho * rho) + 2.0 * C * rho - A;
}

// Complete-data objective profile in rho for fixed sigma2, used to choose
// among multiple stationary points.
double rho_profile(double rho, double n, double A, double C, double s2) {
    const double omr2 = 1.0 - rho * rho;
    return -0.5 * n * std::log(omr2) - (A - 2.0 * rho * C) / (2.0 * s2 * omr2);
}

double bracketed_root(double lo, double hi, double hlo, double k, double A, double C) {
    const bool lo_pos = hlo > 0.0;
    double x = 0.5 * (lo + hi);
    for (int i = 0; i < 80; ++i) {
        const double hx = h_rho(x, k, A, C);
        if (hx == 0.0 || hi - lo < 1e-15) break;
        if ((hx > 0.0) == lo_pos) {
            lo = x;
        } else {
            hi = x;
        }
        const double d = h_rho_deriv(x, k, A, C);
        const double xn = d != 0.0 ? x - hx / d : 0.5 * (lo + hi);
        x = (xn > lo && xn < hi) ? xn : 0.5 * (lo + hi);
    }
    return x;
}

// Maximizer of the rho profile given sigma2: enumerates the stationary
// points of the cubic h on the monotone segments cut by h', then picks the
// best by objective value. Newton with a maintained bracket on each segment.
double solve_rho(double n, double A, double C, double s2) {
    const double lim = 1.0 - RHO_EPS;
    const double k = n * s2;

    std::array<double, 4> bounds{-lim, lim, 0.0, 0.0};
    int nb = 2;
    // critical points of h: -3k x^2 + 2C x + (k - A) = 0
    const double disc = C * C + 3.0 * k * (k - A);
    if (disc > 0.0 && k > 0.0) {
        const double sq = std::sqrt(disc);
        for (double c : {(C - sq) / (3.0 * k), (C + sq) / (3.0 * k)}) {
            if (c > -lim && c < lim) bounds[nb++] = c;
        }
    }
    std::sort(bounds.begin(), bounds.begin() + nb);

    double best = std::clamp(A > 0.0 ? 2.0 * C / A : 0.0, -lim, lim);
    double best_q = rho_profile(best, n, A, C, s2);
    for (int i = 0; i + 1 < nb; ++i) {
        const double a = bounds[i], b = bounds[i + 1];
        const double ha = h_rho(a, k, A, C), hb = h_rho(b, k, A, C);
        if (ha == 0.0 || (ha > 0.0) == (hb > 0.0)) continue;
        const double r = bracketed_root(a, b, ha, k, A, C);
        const double q = rho_profile(r, n, A, C, s2);
        if (q > best_q) {
            best_q = q;
            best = r;
        }
    }
    return std::clamp(best, -lim, lim);
}

// Cycled conditional maximization of (sigma2, rho) given fixed deviation
// sums; sigma2 closed-form given rho, rho by the safeguarded solve above.
void cm_sigma_rho(double n, double A, double C, double& s2, double& rho) {
    for (int cyc = 0; cyc < 200; ++cyc) {
        const double s2n = clamp_sigma2((A - 2.0 * rho * C) / (2.0 * n * (1.0 - rho * rho)));
        const double rhon = solve_rho(n, A, C, s2n);
        const bool done =
            std::fabs(s2n - s2) <= 1e-13 * (1.0 + std::fabs(s2n)) && std::fabs(rhon - rho) <= 1e-13;
        s2 = s2n;
        rho = rhon;
        if (done) break;
    }
}

// Same cycle for the combined model where one sigma2 serves both strata.
void cm_combined(double nm, double Am, double Cm, double nd, double Ad, double Cd, double& s2,
                 double& rho_m, double& rho_d) {
    for (int cyc = 0; cyc < 200; ++cyc) {
        const double s2n = clamp_sigma2(((Am - 2.0 * rho_m * Cm) / (1.0 - rho_m * rho_m) +
                                         (Ad - 2.0 * rho_d * Cd) / (1.0 - rho_d * rho_d)) /
                                        (2.0 * (nm + nd)));
        const double rmn = solve_rho(nm, Am, Cm, s2n);
        const double rdn = solve_rho(nd, Ad, Cd, s2n);
        const bool done = std::fabs(s2n - s2) <= 1e-13 * (1.0 + std::fabs(s2n)) &&
                          std::fabs(rmn - rho_m) <= 1e-13 && std::fabs(rdn - rho_d) <= 1e-13;
        s2 = s2n;
        rho_m = rmn;
        rho_d = rdn;
        if (done) break;
    }
}

// State layout: [mu_d1, mu_d2, rho_d, sigma2, rho_m]; the separate fit
// ignores the last slot.
using State = std::array<double, 5>;

struct StepOut {
    State next;
    double ll;  // log-likelihood at the *input* state
};

// EM for the swap mixture over one stratum. The E-step weights depend on
// the data only through the within-pair differences t = y1 - y2, and the
// M-step sums reduce to one weighted difference total.
class DzMixtureEm {
public:
    DzMixtureEm(const Moments& m, const std::vector<double>& t) : m_(m), t_(t) {}

    static constexpr int dim = 4;

    StepOut step(const State& s) const {
        const double n = m_.n;
        const double c = (s[0] - s[1]) / (s[3] * (1.0 - s[2]));
        double swt = 0.0, corr = 0.0;
        for (const double tj : t_) {
            const double d = c * tj;
            const double e = std::exp(-std::fabs(d));
            const double w = d >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
            swt += w * tj;
            corr += std::max(-d, 0.0) + std::log1p(e);
        }
        const double ll = sum_bvn_ll(m_, s[0], s[1], s[2], s[3]) - n * M_LN2 + corr;

        State out = s;
        out[0] = m_.s2 / n + swt / n;
        out[1] = m_.s1 / n - swt / n;
        const double A = m_.ssq - n * (out[0] * out[0] + out[1] * out[1]);
        const double C = m_.scross - n * out[0] * out[1];
        cm_sigma_rho(n, A, C, out[3], out[2]);
        return {out, ll};
    }

    double loglik(const State& s) const {
        const double n = m_.n;
        const double c = (s[0] - s[1]) / (s[3] * (1.0 - s[2]));
        double corr = 0.0;
        for (const double tj : t_) {
            const double d = c * tj;
            corr += std::max(-d, 0.0) + std::log1p(std::exp(-std::fabs(d)));
        }
        return sum_bvn_ll(m_, s[0], s[1], s[2], s[3]) - n * M_LN2 + corr;
    }

    void project(State& s) const {
        s[2] = clamp_rho(s[2]);
        s[3] = clamp_sigma2(s[3]);
    }

private:
    const Moments& m_;
    const std::vector<double>& t_;
};

// EM/CM for the combined model: the MZ stratum enters through fixed
// deviation sums, the DZ stratum through responsibilities, and the shared
// sigma2 couples the two inside the M-step cycle.
class CombinedEm {
public:
    CombinedEm(double nm, double Am, double Cm, const Moments& md, const std::vector<double>& t)
        : nm_(nm), Am_(Am), Cm_(Cm), md_(md), t_(t) {}

    static constexpr int dim = 5;

    StepOut step(const State& s) const {
        const double n = md_.n;
        const double c = (s[0] - s[1]) / (s[3] * (1.0 - s[2]));
        double swt = 0.0, corr = 0.0;
        for (const double tj : t_) {
            const double d = c * tj;
            const double e = std::exp(-std::fabs(d));
            const double w = d >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
            swt += w * tj;
            corr += std::max(-d, 0.0) + std::log1p(e);
        }
        const double ll = mz_agg_ll(nm_, Am_, Cm_, s[4], s[3]) +
                          sum_bvn_ll(md_, s[0], s[1], s[2], s[3]) - n * M_LN2 + corr;

        State out = s;
        out[0] = md_.s2 / n + swt / n;
        out[1] = md_.s1 / n - swt / n;
        const double Ad = md_.ssq - n * (out[0] * out[0] + out[1] * out[1]);
        const double Cd = md_.scross - n * out[0] * out[1];
        cm_combined(nm_, Am_, Cm_, n, Ad, Cd, out[3], out[4], out[2]);
        return {out, ll};
    }

    double loglik(const State& s) const {
        const double n = md_.n;
        const double c = (s[0] - s[1]) / (s[3] * (1.0 - s[2]));
        double corr = 0.0;
        for (const double tj : t_) {
            const double d = c * tj;
            corr += std::max(-d, 0.0) + std::log1p(std::exp(-std::fabs(d)));
        }
        return mz_agg_ll(nm_, Am_, Cm_, s[4], s[3]) + sum_bvn_ll(md_, s[0], s[1], s[2], s[3]) -
               n * M_LN2 + corr;
    }

    void project(State& s) const {
        s[2] = clamp_rho(s[2]);
        s[3] = clamp_sigma2(s[3]);
        s[4] = clamp_rho(s[4]);
    }

private:
    double nm_, Am_, Cm_;
    const Moments& md_;
    const std::vector<double>& t_;
};

struct EmRun {
    State s{};
    double ll = kNegInf;
    int iters = 0;
    bool converged = false;
};

template <class Em>
double state_step_size(const State& a, const State& b) {
    double d = 0.0;
    for (int i = 0; i < Em::dim; ++i) d = std::max(d, std::fabs(a[i] - b[i]));
    return d;
}

bool state_finite(const State& s, int dim) {
    for (int i = 0; i < dim; ++i) {
        if (!std::isfinite(s[i])) return false;
    }
    return true;
}

// Runs EM from one start with squared-extrapolation acceleration. Each
// cycle takes two EM steps, proposes a Steffensen-type jump, and keeps it
// only when the objective does not drop, so the recorded log-likelihood
// chain stays non-decreasing. Stops when the relative objective change and
// the step size both fall under their thresholds.
template <class Em>
EmRun run_em(const Em& em, State s, int budget, double tol, std::vector<double>* trace) {
    EmRun out;
    double ll_prev = kNegInf;
    int it = 0;
    bool conv = false;

    auto advance = [&](const State& cur) -> std::pair<State, bool> {
        const StepOut r = em.step(cur);
        ++it;
        if (trace) trace->push_back(r.ll);
        const double dll = std::fabs(r.ll - ll_prev) / (1.0 + std::fabs(r.ll));
        const bool done =
            ll_prev > kNegInf && dll < tol && state_step_size<Em>(cur, r.next) < kParamTol;
        ll_prev = r.ll;
        return {r.next, done};
    };

    while (it < budget && !conv) {
        auto [s1, done1] = advance(s);
        if (done1 || it >= budget) {
            s = s1;
            conv = done1;
            break;
        }
        auto [s2, done2] = advance(s1);
        if (done2 || it >= budget) {
            s = s2;
            conv = done2;
            break;
        }

        double rr = 0.0, vv = 0.0;
        State rv{}, vvec{};
        for (int i = 0; i < Em::dim; ++i) {
            const double ri = s1[i] - s[i];
            const double vi = s2[i] - s1[i] - ri;
            rv[i] = ri;
            vvec[i] = vi;
            rr += ri * ri;
            vv += vi * vi;
        }
        if (rr == 0.0) {
            s = s2;
            conv = true;
            break;
        }
        if (vv > 0.0) {
            double alpha = -std::sqrt(rr / vv);
            if (alpha > -1.0) alpha = -1.0;
            State sx = s;
            for (int i = 0; i < Em::dim; ++i) {
                sx[i] = s[i] - 2.0 * alpha * rv[i] + alpha * alpha * vvec[i];
            }
            em.project(sx);
            if (state_finite(sx, Em::dim)) {
                const StepOut rx = em.step(sx);
                ++it;
                if (rx.ll >= ll_prev) {
                    if (trace) trace->push_back(rx.ll);
                    const double dll = std::fabs(rx.ll - ll_prev) / (1.0 + std::fabs(rx.ll));
                    const bool done = dll < tol && state_step_size<Em>(sx, rx.next) < kParamTol;
                    ll_prev = rx.ll;
                    s = rx.next;
                    conv = done;
                    continue;
                }
            }
        }
        s = s2;
    }

    out.s = s;
    out.ll = em.loglik(s);
    out.iters = it;
    out.converged = conv;
    return out;
}

struct BestRun {
    EmRun run;
    int start_index = 0;
    std::vector<double> trace;
};

// Multi-start driver. All starts get a bounded first pass; the contenders
// (within 0.5 log-likelihood units of the leader) are then run to the full
// budget. Ties within 1e-9 go to the lowest start index.
template <class Em>
BestRun best_of_starts(const Em& em, const std::vector<State>& starts, const FitOptions& o) {
    BestRun best;
    if (o.record_trace) {
        // Traced runs skip the two-phase schedule so each trace is one
        // uninterrupted chain.
        std::vector<std::vector<double>> traces(starts.size());
        std::vector<EmRun> runs(starts.size());
        for (std::size_t i = 0; i < starts.size(); ++i) {
            runs[i] = run_em(em, starts[i], o.max_iter, o.tol, &traces[i]);
        }
        std::size_t win = 0;
        for (std::size_t i = 1; i < starts.size(); ++i) {
            if (runs[i].ll > runs[win].ll + kTieWindow) win = i;
        }
        best.run = runs[win];
        best.start_index = static_cast<int>(win);
        best.trace = std::move(traces[win]);
        return best;
    }

    const int phase1 = std::min(o.max_iter, 250);
    std::vector<EmRun> runs(starts.size());
    double lead = kNegInf;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        runs[i] = run_em(em, starts[i], phase1, o.tol, nullptr);
        lead = std::max(lead, runs[i].ll);
    }
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (runs[i].converged || runs[i].ll < lead - 0.5 || runs[i].iters >= o.max_iter) continue;
        EmRun cont = run_em(em, runs[i].s, o.max_iter - runs[i].iters, o.tol, nullptr);
        cont.iters += runs[i].iters;
        runs[i] = cont;
    }
    std::size_t win = 0;
    for (std::size_t i = 1; i < starts.size(); ++i) {
        if (runs[i].ll > runs[win].ll + kTieWindow) win = i;
    }
    best.run = runs[win];
    best.start_index = static_cast<int>(win);
    return best;
}

struct DzData {
    Moments m;
    std::vector<double> t;
};

DzData make_dz(std::span<const PairObs> pairs, double center) {
    DzData d;
    d.m = make_moments(pairs, center);
    d.t.reserve(pairs.size());
    for (const auto& p : pairs) d.t.push_back(p.y1 - p.y2);
    return d;
}

// Start list per the multistart scheme: the moment start first, then
// deterministic seeded perturbations that pull the two means apart by
// fractions of the pooled SD. Draw counts per start are fixed so the list
// is prefix-stable in n_starts.
std::vector<State> make_starts(const Moments& md, double rho_m0, double s2_pool,
                               const FitOptions& o) {
    const double n = md.n;
    const double yb1 = md.s1 / n, yb2 = md.s2 / n;
    const double var_dz =
        std::max((md.ssq - n * (yb1 * yb1 + yb2 * yb2)) / (2.0 * n), SIGMA2_MIN);
    const double cov = md.scross / n - yb1 * yb2;
    const double rho0 = clamp_rho(cov / var_dz);
    const double sd = std::sqrt(var_dz);
    const double gm = 0.5 * (yb1 + yb2);

    std::vector<State> starts;
    starts.push_back({yb1, yb2, rho0, s2_pool, rho_m0});
    Rng rng(derive_seed(o.seed, {0x57A27500ULL}));
    for (int k = 1; k < o.n_starts; ++k) {
        const double g1 = rng.uniform(0.15, 1.5);
        const double g2 = rng.uniform(0.15, 1.5);
        const double rho_pick = rng.uniform(-0.5, 0.95);
        const double mu1 = gm - g1 * sd;
        const double mu2 = gm + g2 * sd;
        const double gap = mu2 - mu1;
        const double s2 = std::max(0.25 * var_dz, s2_pool - 0.25 * gap * gap);
        starts.push_back({mu1, mu2, k % 2 == 1 ? rho0 : clamp_rho(rho_pick), s2, rho_m0});
    }
    return starts;
}

struct MzAgg {
    double n = 0, mu = 0, A = 0, C = 0;
};

MzAgg mz_aggregates(std::span<const PairObs> pairs, double center) {
    const Moments m = make_moments(pairs, center);
    MzAgg a;
    a.n = m.n;
    a.mu = (m.s1 + m.s2) / (2.0 * m.n);
    a.A = m.ssq - 2.0 * a.mu * (m.s1 + m.s2) + 2.0 * m.n * a.mu * a.mu;
    a.C = m.scross - a.mu * (m.s1 + m.s2) + m.n * a.mu * a.mu;
    return a;
}

void require_pairs(std::span<const PairObs> pairs, std::size_t min_n, const char* who) {
    if (pairs.size() < min_n) {
        throw invalid_argument(std::string(who) + ": need at least " + std::to_string(min_n) +
                               " pairs");
    }
    for (const auto& p : pairs) {
        if (!std::isfinite(p.y1) || !std::isfinite(p.y2)) {
            throw invalid_argument(std::string(who) + ": non-finite observation");
        }
    }
}

}  // namespace

void FitOptions::validate() const {
    if (max_iter < 1) throw invalid_argument("FitOptions: max_iter must be >= 1");
    if (!(tol > 0.0)) throw invalid_argument("FitOptions: tol must be positive");
    if (n_starts < 1) throw invalid_argument("FitOptions: n_starts must be >= 1");
}

MzFit fit_mz(std::span<const PairObs> pairs) {
    require_pairs(pairs, 2, "fit_mz");
    const double center = grand_mean(pairs);
    const MzAgg a = mz_aggregates(pairs, center);
    const double sigma2 = a.A / (2.0 * a.n);
    if (sigma2 < SIGMA2_MIN) throw degenerate_data_error("fit_mz: data carry no variation");
    const double rho = clamp_rho(2.0 * a.C / a.A);
    const double ll = mz_agg_ll(a.n, a.A, a.C, rho, sigma2);
    return {a.mu + center, rho, sigma2, ll};
}

FitResult fit_dz_separate(std::span<const PairObs> pairs, const FitOptions& opts) {
    opts.validate();
    require_pairs(pairs, 4, "fit_dz_separate");
    const double center = grand_mean(pairs);
    const DzData d = make_dz(pairs, center);
    if (d.m.ssq / (2.0 * d.m.n) < SIGMA2_MIN) {
        throw degenerate_data_error("fit_dz_separate: data carry no variation");
    }

    const double s2_pool =
        (d.m.ssq - (d.m.s1 * d.m.s1 + d.m.s2 * d.m.s2) / d.m.n) / (2.0 * d.m.n);
    std::vector<State> starts = make_starts(d.m, 0.0, std::max(s2_pool, SIGMA2_MIN), opts);
    if (opts.warm_start) {
        const ModelParams& w = *opts.warm_start;
        starts.insert(starts.begin(),
                      {w.mu_d1 - center, w.mu_d2 - center, w.rho_d, w.sigma2, 0.0});
    }

    const DzMixtureEm em(d.m, d.t);
    BestRun best = best_of_starts(em, starts, opts);

    ModelParams p;
    p.mu_d1 = best.run.s[0] + center;
    p.mu_d2 = best.run.s[1] + center;
    p.rho_d = best.run.s[2];
    p.sigma2 = best.run.s[3];
    return {canonicalize(p), best.run.ll,        best.run.iters,
            best.run.converged, best.start_index, std::move(best.trace)};
}

FitResult fit_dz_separate_equal_means(std::span<const PairObs> pairs, const FitOptions& opts) {
    opts.validate();
    const MzFit f = fit_mz(pairs);
    ModelParams p;
    p.mu_d1 = p.mu_d2 = f.mu;
    p.rho_d = f.rho;
    p.sigma2 = f.sigma2;
    return {p, f.loglik, 1, true, 0, {}};
}

FitResult fit_combined(std::span<const PairObs> mz, std::span<const PairObs> dz,
                       const FitOptions& opts) {
    opts.validate();
    require_pairs(mz, 3, "fit_combined (MZ stratum)");
    require_pairs(dz, 3, "fit_combined (DZ stratum)");

    double center = 0.0;
    for (const auto& p : mz) center += p.y1 + p.y2;
    for (const auto& p : dz) center += p.y1 + p.y2;
    center /= 2.0 * static_cast<double>(mz.size() + dz.size());

    const MzAgg am = mz_aggregates(mz, center);
    const DzData d = make_dz(dz, center);
    const double nd = d.m.n;
    const double dz_A0 = d.m.ssq - (d.m.s1 * d.m.s1 + d.m.s2 * d.m.s2) / nd;
    const double s2_pool = (am.A + dz_A0) / (2.0 * (am.n + nd));
    if (s2_pool < SIGMA2_MIN) {
        throw degenerate_data_error("fit_combined: data carry no variation");
    }

    const double rho_m0 = clamp_rho(am.A > 0.0 ? 2.0 * am.C / am.A : 0.0);
    std::vector<State> starts = make_starts(d.m, rho_m0, s2_pool, opts);
    if (opts.warm_start) {
        const ModelParams& w = *opts.warm_start;
        starts.insert(starts.begin(),
                      {w.mu_d1 - center, w.mu_d2 - center, w.rho_d, w.sigma2, w.rho_m});
    }

    const CombinedEm em(am.n, am.A, am.C, d.m, d.t);
    BestRun best = best_of_starts(em, starts, opts);

    ModelParams p;
    p.mu_m = am.mu + center;
    p.rho_m = best.run.s[4];
    p.mu_d1 = best.run.s[0] + center;
    p.mu_d2 = best.run.s[1] + center;
    p.rho_d = best.run.s[2];
    p.sigma2 = best.run.s[3];
    return {canonicalize(p), best.run.ll,        best.run.iters,
            best.run.converged, best.start_index, std::move(best.trace)};
}

FitResult fit_combined_null(std::span<const PairObs> mz, std::span<const PairObs> dz,
                            const FitOptions& opts) {
    opts.validate();
    require_pairs(mz, 3, "fit_combined_null (MZ stratum)");
    require_pairs(dz, 3, "fit_combined_null (DZ stratum)");

    double center = 0.0;
    for (const auto& p : mz) center += p.y1 + p.y2;
    for (const auto& p : dz) center += p.y1 + p.y2;
    center /= 2.0 * static_cast<double>(mz.size() + dz.size());

    const MzAgg am = mz_aggregates(mz, center);
    const Moments md = make_moments(dz, center);
    const double nd = md.n;
    const double mu_d = (md.s1 + md.s2) / (2.0 * nd);
    const double Ad = md.ssq - 2.0 * mu_d * (md.s1 + md.s2) + 2.0 * nd * mu_d * mu_d;
    const double Cd = md.scross - mu_d * (md.s1 + md.s2) + nd * mu_d * mu_d;
    if ((am.A + Ad) / (2.0 * (am.n + nd)) < SIGMA2_MIN) {
        throw degenerate_data_error("fit_combined_null: data carry no variation");
    }

    // With both strata collapsed to plain bivariate normals the whole fit
    // is conditional maximization on (sigma2, rho_m, rho_d).
    struct Cand {
        double rho_m, rho_d;
    };
    const std::array<Cand, 2> inits{
        Cand{clamp_rho(am.A > 0.0 ? 2.0 * am.C / am.A : 0.0),
             clamp_rho(Ad > 0.0 ? 2.0 * Cd / Ad : 0.0)},
        Cand{0.0, 0.0}};

    double best_ll = kNegInf;
    double bs2 = 1.0, brm = 0.0, brd = 0.0;
    int best_idx = 0, iters_total = 0;
    for (std::size_t i = 0; i < inits.size(); ++i) {
        double s2 = clamp_sigma2((am.A + Ad) / (2.0 * (am.n + nd)));
        double rm = inits[i].rho_m, rd = inits[i].rho_d;
        double ll_prev = kNegInf;
        int it = 0;
        for (; it < opts.max_iter; ++it) {
            const double s2p = s2, rmp = rm, rdp = rd;
            cm_combined(am.n, am.A, am.C, nd, Ad, Cd, s2, rm, rd);
            const double ll =
                mz_agg_ll(am.n, am.A, am.C, rm, s2) + mz_agg_ll(nd, Ad, Cd, rd, s2);
            const double dll = std::fabs(ll - ll_prev) / (1.0 + std::fabs(ll));
            const double dpar = std::max({std::fabs(s2 - s2p), std::fabs(rm - rmp),
                                          std::fabs(rd - rdp)});
            ll_prev = ll;
            if (dll < opts.tol && dpar < kParamTol) {
                ++it;
                break;
            }
        }
        if (ll_prev > best_ll + kTieWindow) {
            best_ll = ll_prev;
            bs2 = s2;
            brm = rm;
            brd = rd;
            best_idx = static_cast<int>(i);
            iters_total = it;
        }
    }

    ModelParams p;
    p.mu_m = am.mu + center;
    p.rho_m = brm;
    p.mu_d1 = p.mu_d2 = mu_d + center;
    p.rho_d = brd;
    p.sigma2 = bs2;
    return {p, best_ll, iters_total, true, best_idx, {}};
}

double pearson_r(std::span<const PairObs> pairs) {
    require_pairs(pairs, 3, "pearson_r");
    const double n = static_cast<double>(pairs.size());
    double m1 = 0.0, m2 = 0.0;
    for (const auto& p : pairs) {
        m1 += p.y1;
        m2 += p.y2;
    }
    m1 /= n;
    m2 /= n;
    double v1 = 0.0, v2 = 0.0, c12 = 0.0;
    for (const auto& p : pairs) {
        const double d1 = p.y1 - m1;
        const double d2 = p.y2 - m2;
        v1 += d1 * d1;
        v2 += d2 * d2;
        c12 += d1 * d2;
    }
    const double scale = (v1 + v2) / (2.0 * n);
    if (v1 <= 1e-24 * n * (1.0 + m1 * m1) || v2 <= 1e-24 * n * (1.0 + m2 * m2) ||
        scale < SIGMA2_MIN) {
        throw degenerate_data_error("pearson_r: a coordinate carries no variation");
    }
    return c12 / std::sqrt(v1 * v2);
}

ModelParams canonicalize(const ModelParams& p) {
    ModelParams out = p;
    if (out.mu_d1 > out.mu_d2) std::swap(out.mu_d1, out.mu_d2);
    return out;
}

double mz_loglik(std::span<const PairObs> pairs, double mu, double rho, double sigma2) {
    const BvnParams b{mu, mu, rho, sigma2};
    double ll = 0.0;
    for (const auto& p : pairs) ll += bvn_logpdf(p.y1, p.y2, b);
    return ll;
}

double dz_mixture_loglik(std::span<const PairObs> pairs, const BvnParams& p) {
    double ll = 0.0;
    for (const auto& q : pairs) ll += mixture_logpdf(q.y1, q.y2, p);
    return ll;
}

double combined_loglik(std::span<const PairObs> mz, std::span<const PairObs> dz,
                       const ModelParams& p) {
    return mz_loglik(mz, p.mu_m, p.rho_m, p.sigma2) + dz_mixture_loglik(dz, p.dz());
}

}  // namespace twinmix
