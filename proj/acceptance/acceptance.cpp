// Acceptance suite: one PASS/FAIL line per criterion A1-A12.
//
//   acceptance [--only A5] [--reps 1000] [--threads 0]
//
// Exit status is nonzero when any selected criterion fails. Tolerances are the
// constants below and are not configurable.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpb/bounds.hpp"
#include "mpb/figures.hpp"
#include "mpb/montecarlo.hpp"
#include "mpb/serialize.hpp"
#include "mpb/session.hpp"
#include "support/crosscheck.hpp"

using namespace mpb;

namespace {

// A1
constexpr double kPosteriorTol = 1e-12;
constexpr int kHistories = 1000;
// A2
constexpr double kStubbornAlphaMax = 0.01;
constexpr std::uint64_t kStubbornFrom = 600;
constexpr double kConfidentLo = 0.90, kConfidentHi = 0.98;
// A3
constexpr double kTauC = 0.1;
constexpr double kExceedHighEpsMax = 0.10;
constexpr double kExceedLowEpsMin = 0.35;
constexpr double kSeparationSE = 2.0;
// A4
constexpr double kPullsLo = 400.0, kPullsHi = 500.0;
// A5
constexpr double kStopMistakeMax = 0.02;
// A6
constexpr double kBiasSmall = 0.10, kBiasLarge = 0.30;
constexpr double kBiasSmallMistakeMax = 0.05;
constexpr double kBiasLargeMistakeMin = 0.90;
// A8
constexpr double kPeakLo = 0.1, kPeakHi = 0.7;
// A9
constexpr int kBoundTuples = 10000;
constexpr int kEtaConfigs = 40;
constexpr double kEtaTol = 1e-6;
constexpr std::size_t kCrossCheckMin = 1000;
// A10
constexpr double kFloorSlack = 1e-12;
constexpr double kThompsonTol = 0.01;
constexpr int kThompsonDraws = 100000;
// A11
constexpr int kPointMassReps = 200;
constexpr std::uint64_t kPointMassHorizon = 500;
constexpr double kRatioMax = 1e-6;
constexpr double kPointMassShare = 0.99;
constexpr double kPointMassNu = 1e8;

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Context {
    std::size_t reps = 1000;
    unsigned threads = 0;
    std::uint64_t seed = 20240601;
};

std::string num(double x) { return fmt(x); }

MetricsFrame run_preset(Figure f, const Context& ctx) {
    FigureOptions o;
    o.reps = ctx.reps;
    o.seed = ctx.seed;
    o.threads = ctx.threads;
    return run_sweep(figure_preset(f, o).sweep);
}

const PointMetrics& point(const MetricsFrame& f, const std::string& label) {
    for (const auto& p : f.points)
        if (p.label == label) return p;
    fail(ErrorCode::invalid_argument, "no grid point " + label);
}

const StageRow& stage_at(const PointMetrics& p, std::uint64_t t) {
    for (const auto& r : p.stages)
        if (r.t == t) return r;
    fail(ErrorCode::invalid_argument, "stage not recorded");
}

/// a < b beyond k standard errors of the difference.
bool below(double a, double se_a, double b, double se_b, double k = kSeparationSE) {
    return b - a > k * std::sqrt(se_a * se_a + se_b * se_b);
}

Verdict a1(const Context&) {
    Rng rng(101);
    double worst = 0.0;
    bool precision_ok = true;
    for (int h = 0; h < kHistories; ++h) {
        const std::size_t arms = 2 + rng.next_u64() % 3;
        const std::size_t L = 1 + rng.next_u64() % 3;
        std::vector<SourcePrior> src;
        for (std::size_t o = 0; o < L; ++o) {
            SourcePrior s{o, {}, {}};
            for (std::size_t d = 0; d < arms; ++d) {
                s.zeta0.push_back(rng.normal(0.0, 2.0));
                s.nu0.push_back(0.1 + 300.0 * rng.uniform());
            }
            src.push_back(s);
        }
        BeliefBank b(src);
        std::vector<double> sum(arms, 0.0);
        std::vector<double> n(arms, 0.0);
        const auto len = rng.next_u64() % 201;
        for (std::uint64_t k = 0; k < len; ++k) {
            const Arm d = rng.next_u64() % arms;
            const double y = rng.normal(1.0, 1.5);
            b.observe(d, y);
            b.advance_stage();
            sum[d] += y;
            n[d] += 1.0;
        }
        // Batch form written out directly: (nu0 zeta0 + sum y) / (nu0 + n).
        for (std::size_t o = 0; o < L; ++o)
            for (Arm d = 0; d < arms; ++d) {
                const double prec = src[o].nu0[d] + n[d];
                const double mean = (src[o].nu0[d] * src[o].zeta0[d] + sum[d]) / prec;
                worst = std::max(worst, std::abs(mean - b.zeta(o, d)));
                precision_ok = precision_ok && std::abs(prec - b.nu(o, d)) <= kPosteriorTol * prec;
            }
    }
    return {worst <= kPosteriorTol && precision_ok,
            "max |recursive - batch| = " + num(worst) + " over " + std::to_string(kHistories) + " histories"};
}

Verdict a2(const Context& ctx) {
    const MetricsFrame f = run_preset(Figure::weights, ctx);
    const auto& stubborn = point(f, "stubborn");
    const auto& confident = point(f, "confident");
    double worst = 0.0;
    for (const auto& r : stubborn.stages)
        if (r.t >= kStubbornFrom)
            for (Arm d = 0; d < 2; ++d) worst = std::max(worst, r.alpha_mean[1][d]);
    const auto& end = stage_at(confident, 1000);
    const double c0 = end.alpha_mean[1][0], c1 = end.alpha_mean[1][1];
    const bool ok = worst < kStubbornAlphaMax && c0 >= kConfidentLo && c0 <= kConfidentHi && c1 >= kConfidentLo &&
                    c1 <= kConfidentHi;
    return {ok, "stubborn max mean alpha (t>=600) = " + num(worst) + "; confident alpha at t=1000 = (" + num(c0) +
                    ", " + num(c1) + ")"};
}

struct ConcentrationData {
    std::vector<double> eps, p, se, pulls0;
};

ConcentrationData concentration(const Context& ctx) {
    static std::map<std::size_t, ConcentrationData> cache;
    if (auto it = cache.find(ctx.reps); it != cache.end()) return it->second;
    const MetricsFrame f = run_preset(Figure::concentration, ctx);
    ConcentrationData out;
    for (const auto& pt : f.points) {
        const auto curve = concentration_curve(pt, 0, kTauC);
        out.eps.push_back(pt.value);
        out.p.push_back(curve.back().p);
        out.se.push_back(curve.back().se);
        out.pulls0.push_back(stage_at(pt, 1000).pulls_mean[0]);
    }
    cache[ctx.reps] = out;
    return out;
}

Verdict a3(const Context& ctx) {
    const auto c = concentration(ctx);  // eps = 0.1, 0.5, 0.9
    const bool ok = c.p[2] <= kExceedHighEpsMax && c.p[0] >= kExceedLowEpsMin && below(c.p[2], c.se[2], c.p[1], c.se[1]) &&
                    below(c.p[1], c.se[1], c.p[0], c.se[0]);
    return {ok, "P(|zeta_1000(0) - theta(0)| > 0.1) at eps 0.1/0.5/0.9 = " + num(c.p[0]) + "/" + num(c.p[1]) + "/" +
                    num(c.p[2])};
}

Verdict a4(const Context& ctx) {
    const auto c = concentration(ctx);
    const bool ok =
        c.pulls0[0] < c.pulls0[1] && c.pulls0[1] < c.pulls0[2] && c.pulls0[2] >= kPullsLo && c.pulls0[2] <= kPullsHi;
    return {ok, "mean arm-0 pulls at t=1000 for eps 0.1/0.5/0.9 = " + num(c.pulls0[0]) + "/" + num(c.pulls0[1]) + "/" +
                    num(c.pulls0[2])};
}

Verdict a5(const Context& ctx) {
    const MetricsFrame f = run_preset(Figure::stopping, ctx);
    bool mistakes_ok = true, decreasing = true;
    double worst = 0.0;
    std::ostringstream times;
    for (std::size_t i = 0; i < f.points.size(); ++i) {
        const auto& p = f.points[i];
        worst = std::max(worst, p.mistake_rate);
        mistakes_ok = mistakes_ok && p.mistake_rate <= kStopMistakeMax;
        times << (i ? "/" : "") << num(p.mean_stop_time);
        if (i > 0) {
            const auto& q = f.points[i - 1];
            decreasing = decreasing && below(p.mean_stop_time, p.se_stop_time, q.mean_stop_time, q.se_stop_time);
        }
    }
    return {mistakes_ok && decreasing,
            "max mistake rate = " + num(worst) + "; mean stop time eps 0.1..0.9 = " + times.str()};
}

Verdict a6(const Context& ctx) {
    const MetricsFrame f = run_preset(Figure::bias, ctx);
    bool ok = true;
    double small_worst = 0.0, combined_worst = 0.0, large = num::kNaN;
    for (const auto& p : f.points) {
        const bool stubborn = p.label.rfind("stubborn", 0) == 0;
        if (stubborn && p.value <= kBiasSmall + 1e-9) {
            small_worst = std::max(small_worst, p.mistake_rate);
            ok = ok && p.mistake_rate <= kBiasSmallMistakeMax;
        }
        if (stubborn && std::abs(p.value - kBiasLarge) < 1e-9) {
            large = p.mistake_rate;
            ok = ok && p.mistake_rate >= kBiasLargeMistakeMin;
        }
        if (!stubborn && p.value <= kBiasLarge + 1e-9) {
            combined_worst = std::max(combined_worst, p.mistake_rate);
            ok = ok && p.mistake_rate <= kBiasSmallMistakeMax;
        }
    }
    return {ok, "stubborn mistake max (bias<=0.1) = " + num(small_worst) + ", at bias 0.3 = " + num(large) +
                    "; combined max (bias<=0.3) = " + num(combined_worst)};
}

Verdict a7(const Context& ctx) {
    const MetricsFrame f = run_preset(Figure::earnings, ctx);
    std::vector<const PointMetrics*> diffuse;
    for (const auto& p : f.points)
        if (p.label.rfind("diffuse", 0) == 0) diffuse.push_back(&p);
    bool decreasing = true;
    std::ostringstream means;
    for (std::size_t i = 0; i < diffuse.size(); ++i) {
        means << (i ? "/" : "") << num(diffuse[i]->mean_earnings);
        if (i > 0) decreasing = decreasing && diffuse[i]->mean_earnings < diffuse[i - 1]->mean_earnings;
    }
    const double q10 = diffuse.front()->q10_earnings, q90 = diffuse.back()->q90_earnings;
    return {decreasing && q10 > q90, "mean earnings eps 0.1..0.9 = " + means.str() + "; q10(eps 0.1) = " + num(q10) +
                                         ", q90(eps 0.9) = " + num(q90)};
}

Verdict a8(const Context& ctx) {
    const MetricsFrame f = run_preset(Figure::payoff, ctx);
    const auto& pts = f.points;
    std::size_t best = 1;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i)
        if (pts[i].mean_payoff > pts[best].mean_payoff) best = i;
    const auto& lo = pts.front();
    const auto& hi = pts.back();
    const auto& b = pts[best];
    const bool ok = below(lo.mean_payoff, lo.se_payoff, b.mean_payoff, b.se_payoff) &&
                    below(hi.mean_payoff, hi.se_payoff, b.mean_payoff, b.se_payoff) && b.value > kPeakLo &&
                    b.value < kPeakHi;
    return {ok, "payoff at eps 0.05 = " + num(lo.mean_payoff) + " (se " + num(lo.se_payoff) + "), best interior eps " +
                    num(b.value) + " = " + num(b.mean_payoff) + " (se " + num(b.se_payoff) + "), eps 0.90 = " +
                    num(hi.mean_payoff) + " (se " + num(hi.se_payoff) + ")"};
}

Verdict a9(const Context&) {
    std::mt19937_64 g(909);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t omega_bad = 0, gamma_bad = 0, eta_bad = 0;
    for (int i = 0; i < kBoundTuples; ++i) {
        const double b = 6.0 * u(g) - 3.0, c = 0.01 + 2.0 * u(g), e = 0.01 + 2.0 * u(g);
        if (omega(0.0, b, c, e) != b * c / (e + c)) ++omega_bad;
    }
    for (int i = 0; i < kBoundTuples; ++i) {
        const double e = 0.1 + 0.9 * u(g);
        std::vector<SourceBias> s = {{u(g) - 0.5, 1 + 300 * u(g)}, {u(g) - 0.5, 1 + 300 * u(g)}};
        const double t = 10 + 990 * u(g);
        double g1 = 0.95 * e * u(g), g2 = 0.95 * e * u(g);
        if (g1 > g2) std::swap(g1, g2);
        if (gamma_bound(t, g1, e, s) > gamma_bound(t, g2, e, s) + 1e-12) ++gamma_bad;
    }
    EtaStarOptions opt;
    opt.x_step = 5e-3;
    auto gam = [](double t) { return std::log(t) * std::sqrt(2.318366) / std::sqrt(t); };
    for (int i = 0; i < kEtaConfigs; ++i) {
        std::vector<SourceBias> s = {{0.6 * u(g) - 0.1, 1 + 300 * u(g)}, {0.6 * u(g) - 0.1, 1 + 300 * u(g)}};
        const bool best = u(g) < 0.5;
        const double eps = 0.05 + 0.4 * u(g), D = 0.1 + 0.5 * u(g);
        const double t1 = 100 + 400 * u(g), t2 = t1 + 500 * u(g);
        const double base = eta_star(t1, gam(t1), eps, D, s, best, opt);
        eta_bad += base > eta_star(t2, gam(t2), eps, D, s, best, opt) + kEtaTol;
        eta_bad += base > eta_star(t1, gam(t1), eps, D * 1.5, s, best, opt) + kEtaTol;
        eta_bad += eta_star(t1, gam(t1), eps * 0.8, D, s, best, opt) > base + kEtaTol;
    }
    const auto cc = check::envelope_crosscheck(check::crosscheck_config(), 0.5, 0.1, 3, 11);
    const bool ok = omega_bad == 0 && gamma_bad == 0 && eta_bad == 0 && cc.checked >= kCrossCheckMin &&
                    cc.alpha_violations == 0 && cc.gamma_violations == 0;
    return {ok, "omega mismatches " + std::to_string(omega_bad) + ", Gamma decreases " + std::to_string(gamma_bad) +
                    ", eta* monotonicity breaks " + std::to_string(eta_bad) + ", cross-check " +
                    std::to_string(cc.checked) + " stages with " + std::to_string(cc.alpha_violations) +
                    " alpha and " + std::to_string(cc.gamma_violations) + " mean violations"};
}

Verdict a10(const Context&) {
    std::size_t checked = 0, below_floor = 0;
    ExperimentConfig c = presets::two_source(0.3, 250.0);
    c.horizon = 300;
    for (PolicyFamily fam : {PolicyFamily::epsilon_greedy, PolicyFamily::perturbed_softmax, PolicyFamily::thompson_floored})
        for (double floor : {0.01, 0.1, 0.25, 0.5}) {
            c.policy.family = fam;
            c.policy.epsilon = floor;
            c.policy.h = 5.0;
            c.policy.thompson_draws = 64;
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                const RunResult r = run_experiment(c, seed);
                for (const auto& rec : r.log) {
                    if (!rec.assignment) continue;
                    ++checked;
                    for (double p : rec.action_probs.probs) below_floor += p < floor - kFloorSlack;
                }
            }
        }
    const double z0 = 1.0, z1 = 1.2, n0 = 20.0, n1 = 35.0;
    BeliefBank b({SourcePrior{0, {z0, z1}, {n0, n1}}});
    Rng rng(1010);
    const double mc = thompson_probs(b, kThompsonDraws, 0.0, rng).probs[1];
    const double oracle = num::normal_cdf((z1 - z0) / std::sqrt(1.0 / n0 + 1.0 / n1));
    const bool ok = below_floor == 0 && checked > 0 && std::abs(mc - oracle) <= kThompsonTol;
    return {ok, std::to_string(checked) + " distributions, " + std::to_string(below_floor) +
                    " below floor; Thompson pi(1) = " + num(mc) + " vs Phi oracle " + num(oracle)};
}

Verdict a11(const Context&) {
    ExperimentConfig c = presets::base();
    c.horizon = kPointMassHorizon;
    c.sources = {presets::source(0, 0.0, kPointMassNu), presets::source(1, 1.0, kPointMassNu)};
    c.policy.epsilon = 0.25;
    int good = 0;
    double worst_ratio = 0.0;
    RunOptions opts;
    opts.keep_log = false;
    for (int r = 0; r < kPointMassReps; ++r) {
        const RunResult res = run_experiment(c, stream_seed(1111, r), opts);
        double ratio = 0.0;
        for (Arm d = 0; d < 2; ++d)
            ratio = std::max(ratio, res.final_bank.alpha(1, d) / res.final_bank.alpha(0, d));
        worst_ratio = std::max(worst_ratio, ratio);
        good += ratio < kRatioMax;
    }
    const double share = static_cast<double>(good) / kPointMassReps;
    return {share >= kPointMassShare, "share of runs with alpha ratio < 1e-6 at t=500 = " + num(share) +
                                          " (worst ratio " + num(worst_ratio) + ")"};
}

Verdict a12(const Context&) {
    ExperimentConfig c = presets::two_source(0.3, 250.0);
    c.stopping = presets::stopping();
    c.payoff = PayoffSpec{0.994, 1.15, 1.15};
    bool same = true;
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        const RunResult a = run_experiment(c, seed), b = run_experiment(c, seed);
        same = same && summary_json(a) == summary_json(b) && a.final_bank == b.final_bank &&
               a.avg_outcome_path == b.avg_outcome_path && a.log.size() == b.log.size();
        for (std::size_t k = 0; same && k < a.log.size(); ++k) same = to_json(a.log[k]) == to_json(b.log[k]);
    }

    const auto dir = std::filesystem::temp_directory_path() / ("mpb_acceptance_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    bool replay = true;
    {
        std::vector<json> live;
        const json cfg = to_json(c);
        std::vector<std::string> ids;
        {
            SessionManager m(dir);
            ids = {m.create(cfg, "live", true), m.create(cfg, "overridden", true)};
            for (int k = 0; k < 250; ++k) {
                if (m.next_assignment("live").arm) m.report_outcome("live", std::nullopt);
                if (m.next_assignment("overridden", k % 3 == 0).arm) m.report_outcome("overridden", std::nullopt);
            }
            m.next_assignment("live");
            for (const auto& id : ids) live.push_back(m.state(id));
        }
        SessionManager reloaded(dir);
        for (std::size_t i = 0; i < ids.size(); ++i) replay = replay && reloaded.state(ids[i]) == live[i];
    }
    std::filesystem::remove_all(dir);
    return {same && replay, std::string("repeated runs ") + (same ? "identical" : "differ") + "; session replay " +
                                (replay ? "identical" : "differs")};
}

struct Criterion {
    std::string id;
    std::string name;
    std::function<Verdict(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria A1-A12"};
    std::vector<std::string> only;
    Context ctx;
    app.add_option("--only", only, "Run only these criteria (e.g. A3)");
    app.add_option("--reps", ctx.reps, "Replications for the Monte Carlo criteria")->check(CLI::PositiveNumber);
    app.add_option("--threads", ctx.threads, "Worker threads (0: all cores)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> all = {
        {"A1", "posterior recursion equals batch form", a1},
        {"A2", "weight dynamics", a2},
        {"A3", "concentration vs exploration", a3},
        {"A4", "frequency of play", a4},
        {"A5", "stopping mistakes and stop times", a5},
        {"A6", "bias sweep", a6},
        {"A7", "earnings vs exploration", a7},
        {"A8", "payoff inverted-U", a8},
        {"A9", "bound functions", a9},
        {"A10", "policy floor and Thompson oracle", a10},
        {"A11", "point-mass source elimination", a11},
        {"A12", "determinism and session replay", a12},
    };
    int failed = 0, ran = 0;
    for (const auto& c : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run(ctx);
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !v.pass;
        std::cout << c.id << ' ' << (v.pass ? "PASS" : "FAIL") << ' ' << c.name << ": " << v.detail << " ["
                  << std::fixed << std::setprecision(1) << secs << "s]" << std::defaultfloat << std::endl;
    }
    if (ran == 0) {
        std::cerr << "no criteria selected\n";
        return 2;
    }
    return failed == 0 ? 0 : 1;
}
