#pragma once

// Replication harness. Each grid point runs R independent experiments; run r
// of point i uses seed stream_seed(stream_seed(master, i), r). Replications
// may run on several threads, but every aggregate is summed in replication
// order, so results do not depend on the thread count.
//
// Per-stage series are recorded after each observation at stages
// thin, 2 thin, ..., and always at the horizon. A run that halts early keeps
// its final beliefs for the remaining stages.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mpb/config.hpp"
#include "mpb/engine.hpp"
#include "mpb/error.hpp"
#include "mpb/numeric.hpp"
#include "mpb/rng.hpp"
#include "mpb/stopping.hpp"

namespace mpb {

inline constexpr const char* kVersion = "0.1.0";

struct GridPoint {
    std::string label;
    double value = 0.0;
    ExperimentConfig config;
};

struct SweepSpec {
    ExperimentConfig base;
    std::string param;   ///< swept parameter, see apply_param
    std::string column;  ///< name of the value column in emitted tables; defaults to param
    std::vector<GridPoint> grid;
    std::size_t reps = 1000;
    std::uint64_t seed = 0;
    std::uint64_t thin = 1;
    bool stage_series = true;
    double tau_c = 0.1;   ///< threshold for the exceedance columns of the stage table
    unsigned threads = 0; ///< 0: hardware concurrency
    /// Optional per-replication outcome source (e.g. resampled field data);
    /// environment draws are used when unset or when it returns an empty function.
    std::function<OutcomeSource(std::size_t rep)> outcomes;
};

namespace detail {

inline void set_all(std::vector<double>& v, double x) { std::fill(v.begin(), v.end(), x); }

inline std::size_t source_index(const std::string& name, const ExperimentConfig& c) {
    const auto colon = name.find(':');
    if (colon == std::string::npos) fail(ErrorCode::invalid_argument, "parameter " + name + " needs a source index");
    std::size_t o = 0;
    const auto s = name.substr(colon + 1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), o);
    if (ec != std::errc() || p != s.data() + s.size() || o >= c.sources.size())
        fail(ErrorCode::invalid_argument, "bad source index in parameter " + name);
    return o;
}

inline void recalibrate(ExperimentConfig& c) {
    if (c.stopping && !c.stopping->gamma_override)
        c.stopping->gamma_A = calibrate(c.stopping->beta, c.stopping->burn_in, c.horizon, c.arms());
}

}  // namespace detail

/// Sets one named parameter on a copy of `base`.
///   epsilon     exploration rate; per-arm floor = value / (M+1)
///   floor       per-arm floor directly
///   h           softmax inverse temperature
///   burn_in     B (gamma recalibrated unless gamma_A was swept)
///   beta        mistake tolerance; A recalibrated
///   gamma_A     A
///   horizon     T (A recalibrated)
///   discount    payoff discount
///   cost        c1 = c2
///   nu:<o>      every nu0 of source o
///   shift:<o>   zeta0^o = theta + value on every arm
///   reverse:<o> zeta0^o = theta + value on every arm but the best, theta - value on the best
inline ExperimentConfig apply_param(const ExperimentConfig& base, const std::string& name, double value) {
    ExperimentConfig c = base;
    const auto& theta = c.environment.theta;
    auto need_stopping = [&] {
        if (!c.stopping) fail(ErrorCode::invalid_argument, "parameter " + name + " needs a stopping rule");
    };
    auto need_payoff = [&] {
        if (!c.payoff) fail(ErrorCode::invalid_argument, "parameter " + name + " needs a payoff spec");
    };
    if (name == "epsilon") {
        c.policy.epsilon = value / static_cast<double>(c.arms());
    } else if (name == "floor") {
        c.policy.epsilon = value;
    } else if (name == "h") {
        c.policy.h = value;
    } else if (name == "burn_in") {
        need_stopping();
        c.stopping->burn_in = static_cast<std::uint64_t>(std::llround(value));
        detail::recalibrate(c);
    } else if (name == "beta") {
        need_stopping();
        c.stopping->beta = value;
        detail::recalibrate(c);
    } else if (name == "gamma_A") {
        need_stopping();
        c.stopping->gamma_A = value;
    } else if (name == "horizon") {
        c.horizon = static_cast<std::uint64_t>(std::llround(value));
        if (c.stopping) {
            c.stopping->horizon = c.horizon;
            detail::recalibrate(c);
        }
    } else if (name == "discount") {
        need_payoff();
        c.payoff->discount = value;
    } else if (name == "cost") {
        need_payoff();
        c.payoff->cost_experiment = c.payoff->cost_deploy = value;
    } else if (name.rfind("nu:", 0) == 0) {
        detail::set_all(c.sources[detail::source_index(name, c)].nu0, value);
    } else if (name.rfind("shift:", 0) == 0) {
        auto& z = c.sources[detail::source_index(name, c)].zeta0;
        for (std::size_t d = 0; d < z.size(); ++d) z[d] = theta[d] + value;
    } else if (name.rfind("reverse:", 0) == 0) {
        auto& z = c.sources[detail::source_index(name, c)].zeta0;
        const Arm best = num::argmax_last(theta);
        for (std::size_t d = 0; d < z.size(); ++d) z[d] = d == best ? theta[d] - value : theta[d] + value;
    } else {
        fail(ErrorCode::invalid_argument, "unknown sweep parameter: " + name);
    }
    return c;
}

inline std::vector<GridPoint> make_grid(const ExperimentConfig& base, const std::string& param,
                                        std::span<const double> values) {
    std::vector<GridPoint> grid;
    for (double v : values) {
        std::ostringstream label;
        label << param << '=' << v;
        grid.push_back({label.str(), v, apply_param(base, param, v)});
    }
    return grid;
}

/// Scalar outcome of one replication.
struct RepOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::uint64_t stop_time = 0;
    Arm chosen_arm = 0;
    bool forced = false;
    bool mistake = false;
    double earnings = num::kNaN;  ///< mean observed outcome minus max theta
    std::optional<double> payoff;
    std::vector<std::uint64_t> pulls;  ///< N(d) at the halt
};

/// Cross-replication statistics at one recorded stage.
struct StageRow {
    std::uint64_t t = 0;
    std::size_t active = 0;  ///< runs that had not halted before observation t
    std::vector<std::vector<double>> alpha_mean, alpha_q10, alpha_q90;  ///< [source][arm]
    std::vector<std::vector<double>> zeta_mean;                         ///< per-source posterior mean
    std::vector<double> aggregate_mean;                                 ///< zeta^alpha
    std::vector<double> pulls_mean;
};

struct PointMetrics {
    std::string label;
    double value = 0.0;
    std::uint64_t seed = 0;
    std::vector<RepOutcome> reps;
    std::size_t n_ok = 0;
    std::size_t failures = 0;

    double mean_stop_time = num::kNaN;
    double se_stop_time = num::kNaN;
    double stop_rate = num::kNaN;  ///< share of runs halted by the rule rather than the horizon
    double mistake_rate = num::kNaN;
    double se_mistake = num::kNaN;
    double mean_earnings = num::kNaN;
    double se_earnings = num::kNaN;
    double q10_earnings = num::kNaN;
    double q90_earnings = num::kNaN;
    double mean_payoff = num::kNaN;
    double se_payoff = num::kNaN;
    std::vector<double> mean_pulls;

    std::vector<StageRow> stages;
    std::vector<std::uint64_t> trace_stages;  ///< recorded t values
    /// zeta^alpha per successful replication, flattened [rep][stage][arm].
    std::vector<double> aggregate_trace;
    std::vector<double> theta;
};

struct MetricsFrame {
    std::string param;
    std::string column;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::uint64_t thin = 1;
    double tau_c = 0.1;
    std::string config_hash;
    std::vector<PointMetrics> points;
};

inline double binomial_se(double p, std::size_t n) {
    return n == 0 ? num::kNaN : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

namespace detail {

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) return num::kNaN;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Standard error of the mean with the n - 1 sample variance.
inline double se_of(std::span<const double> xs) {
    if (xs.size() < 2) return xs.empty() ? num::kNaN : 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

inline std::vector<std::uint64_t> recorded_stages(std::uint64_t horizon, std::uint64_t thin) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t t = thin; t <= horizon; t += thin) out.push_back(t);
    if (out.empty() || out.back() != horizon) out.push_back(horizon);
    return out;
}

/// Layout of one recorded stage: aggregate[A], alpha[L*A], zeta[L*A], pulls[A].
struct TraceLayout {
    std::size_t A = 0, L = 0;
    std::size_t width() const { return 2 * A + 2 * L * A; }
    std::size_t agg(Arm d) const { return d; }
    std::size_t alpha(std::size_t o, Arm d) const { return A + o * A + d; }
    std::size_t zeta(std::size_t o, Arm d) const { return A + L * A + o * A + d; }
    std::size_t pulls(Arm d) const { return A + 2 * L * A + d; }
};

inline void write_row(const BeliefBank& b, const TraceLayout& lay, double* row) {
    for (Arm d = 0; d < lay.A; ++d) {
        row[lay.agg(d)] = b.aggregate(d);
        row[lay.pulls(d)] = static_cast<double>(b.stats(d).n);
        for (std::size_t o = 0; o < lay.L; ++o) {
            row[lay.alpha(o, d)] = b.alpha(o, d);
            row[lay.zeta(o, d)] = b.zeta(o, d);
        }
    }
}

struct RepRun {
    RepOutcome outcome;
    std::vector<double> trace;  ///< stages x width, empty unless series were requested
};

inline RepRun run_rep(const ExperimentConfig& cfg, std::size_t r, std::uint64_t seed, bool series,
                      std::span<const std::uint64_t> stages, const TraceLayout& lay, const OutcomeSource& outcomes) {
    RepRun out;
    out.outcome.index = r;
    out.outcome.seed = seed;
    try {
        RunOptions opts;
        opts.keep_log = false;
        opts.outcomes = outcomes;
        std::size_t next = 0;
        if (series) {
            out.trace.assign(stages.size() * lay.width(), 0.0);
            opts.on_stage = [&](const BeliefBank& bank, const StageRecord&) {
                if (next < stages.size() && bank.stage() == stages[next]) {
                    write_row(bank, lay, out.trace.data() + next * lay.width());
                    ++next;
                }
            };
        }
        const RunResult res = run_experiment(cfg, seed, opts);
        if (series) {
            // Frozen beliefs after the halt.
            std::vector<double> last(lay.width());
            write_row(res.final_bank, lay, last.data());
            for (; next < stages.size(); ++next)
                std::copy(last.begin(), last.end(), out.trace.begin() + static_cast<std::ptrdiff_t>(next * lay.width()));
        }
        auto& o = out.outcome;
        o.ok = true;
        o.stop_time = res.stop_time;
        o.chosen_arm = res.chosen_arm;
        o.forced = res.forced;
        o.mistake = res.mistake;
        o.earnings = res.avg_outcome_path.empty() ? num::kNaN
                                                  : res.avg_outcome_path.back() - cfg.environment.best_value();
        o.payoff = res.payoff;
        for (Arm d = 0; d < cfg.arms(); ++d) o.pulls.push_back(res.final_bank.stats(d).n);
    } catch (const std::exception& e) {
        out.outcome.ok = false;
        out.outcome.error = e.what();
        out.trace.clear();
    }
    return out;
}

inline std::vector<RepRun> run_reps(const ExperimentConfig& cfg, std::uint64_t point_seed, std::size_t reps,
                                    bool series, std::span<const std::uint64_t> stages, const TraceLayout& lay,
                                    unsigned threads, const std::function<OutcomeSource(std::size_t)>& outcomes) {
    std::vector<RepRun> out(reps);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < reps; r = next++)
            out[r] = run_rep(cfg, r, stream_seed(point_seed, r), series, stages, lay,
                             outcomes ? outcomes(r) : OutcomeSource{});
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

inline void summarize(PointMetrics& pm, bool has_payoff) {
    std::vector<double> stop, mistake, earn, pay;
    std::size_t rule_stops = 0;
    const std::size_t A = pm.theta.size();
    pm.mean_pulls.assign(A, 0.0);
    for (const auto& r : pm.reps) {
        if (!r.ok) continue;
        stop.push_back(static_cast<double>(r.stop_time));
        mistake.push_back(r.mistake ? 1.0 : 0.0);
        if (!r.forced) ++rule_stops;
        if (std::isfinite(r.earnings)) earn.push_back(r.earnings);
        if (r.payoff) pay.push_back(*r.payoff);
        for (Arm d = 0; d < A; ++d) pm.mean_pulls[d] += static_cast<double>(r.pulls[d]);
    }
    const std::size_t n = pm.n_ok;
    for (auto& x : pm.mean_pulls) x = n ? x / static_cast<double>(n) : num::kNaN;
    pm.mean_stop_time = mean_of(stop);
    pm.se_stop_time = se_of(stop);
    pm.stop_rate = n ? static_cast<double>(rule_stops) / static_cast<double>(n) : num::kNaN;
    pm.mistake_rate = mean_of(mistake);
    pm.se_mistake = binomial_se(pm.mistake_rate, n);
    pm.mean_earnings = mean_of(earn);
    pm.se_earnings = se_of(earn);
    pm.q10_earnings = num::quantile(earn, 0.10);
    pm.q90_earnings = num::quantile(earn, 0.90);
    if (has_payoff) {
        pm.mean_payoff = mean_of(pay);
        pm.se_payoff = se_of(pay);
    }
}

inline void stage_rows(PointMetrics& pm, const std::vector<RepRun>& runs, const TraceLayout& lay,
                       std::span<const std::uint64_t> stages) {
    const std::size_t W = lay.width();
    std::vector<const RepRun*> ok;
    for (const auto& r : runs)
        if (r.outcome.ok) ok.push_back(&r);
    pm.trace_stages.assign(stages.begin(), stages.end());
    pm.aggregate_trace.assign(ok.size() * stages.size() * lay.A, 0.0);
    for (std::size_t i = 0; i < ok.size(); ++i)
        for (std::size_t k = 0; k < stages.size(); ++k)
            for (Arm d = 0; d < lay.A; ++d)
                pm.aggregate_trace[(i * stages.size() + k) * lay.A + d] = ok[i]->trace[k * W + lay.agg(d)];

    std::vector<double> column(ok.size());
    auto gather = [&](std::size_t k, std::size_t col) {
        for (std::size_t i = 0; i < ok.size(); ++i) column[i] = ok[i]->trace[k * W + col];
    };
    for (std::size_t k = 0; k < stages.size(); ++k) {
        StageRow row;
        row.t = stages[k];
        for (const auto* r : ok)
            if (r->outcome.stop_time >= row.t) ++row.active;
        auto mat = [&] { return std::vector<std::vector<double>>(lay.L, std::vector<double>(lay.A)); };
        row.alpha_mean = row.alpha_q10 = row.alpha_q90 = row.zeta_mean = mat();
        row.aggregate_mean.assign(lay.A, 0.0);
        row.pulls_mean.assign(lay.A, 0.0);
        for (Arm d = 0; d < lay.A; ++d) {
            gather(k, lay.agg(d));
            row.aggregate_mean[d] = mean_of(column);
            gather(k, lay.pulls(d));
            row.pulls_mean[d] = mean_of(column);
            for (std::size_t o = 0; o < lay.L; ++o) {
                gather(k, lay.alpha(o, d));
                row.alpha_mean[o][d] = mean_of(column);
                row.alpha_q10[o][d] = num::quantile(column, 0.10);
                row.alpha_q90[o][d] = num::quantile(column, 0.90);
                gather(k, lay.zeta(o, d));
                row.zeta_mean[o][d] = mean_of(column);
            }
        }
        pm.stages.push_back(std::move(row));
    }
}

/// FNV-1a 64 of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

inline std::string config_hash(const ExperimentConfig& c) { return detail::fnv1a_hex(to_json(c).dump()); }

/// Runs every grid point. Failed replications are kept with their seeds; more
/// than 1% failures at any point aborts with too_many_failures.
inline MetricsFrame run_sweep(const SweepSpec& spec) {
    if (spec.grid.empty()) fail(ErrorCode::invalid_argument, "sweep grid is empty");
    if (spec.reps < 1) fail(ErrorCode::invalid_argument, "sweep needs at least one replication");
    if (spec.thin < 1) fail(ErrorCode::invalid_argument, "thinning interval must be >= 1");
    for (const auto& g : spec.grid) ensure_valid(g.config);

    MetricsFrame frame;
    frame.param = spec.param;
    frame.column = spec.column.empty() ? spec.param : spec.column;
    frame.reps = spec.reps;
    frame.seed = spec.seed;
    frame.thin = spec.thin;
    frame.tau_c = spec.tau_c;
    frame.config_hash = config_hash(spec.base);
    const unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());

    for (std::size_t i = 0; i < spec.grid.size(); ++i) {
        const auto& gp = spec.grid[i];
        PointMetrics pm;
        pm.label = gp.label;
        pm.value = gp.value;
        pm.seed = stream_seed(spec.seed, i);
        pm.theta = gp.config.environment.theta;
        const detail::TraceLayout lay{gp.config.arms(), gp.config.sources.size()};
        const auto stages = detail::recorded_stages(gp.config.horizon, spec.thin);
        auto runs = detail::run_reps(gp.config, pm.seed, spec.reps, spec.stage_series, stages, lay, threads,
                                    spec.outcomes);
        for (const auto& r : runs) {
            pm.reps.push_back(r.outcome);
            (r.outcome.ok ? pm.n_ok : pm.failures)++;
        }
        if (static_cast<double>(pm.failures) > 0.01 * static_cast<double>(spec.reps))
            fail(ErrorCode::too_many_failures, "more than 1% of replications failed at " + gp.label + ": " +
                                                   std::find_if(runs.begin(), runs.end(), [](const auto& r) {
                                                       return !r.outcome.ok;
                                                   })->outcome.error);
        detail::summarize(pm, gp.config.payoff.has_value());
        if (spec.stage_series) detail::stage_rows(pm, runs, lay, stages);
        frame.points.push_back(std::move(pm));
    }
    return frame;
}

struct Exceedance {
    std::uint64_t t = 0;
    double p = 0.0;
    double se = 0.0;
};

/// P(|zeta^alpha_t(d) - theta(d)| > tau_c) per recorded stage, with binomial
/// standard errors.
inline std::vector<Exceedance> concentration_curve(const PointMetrics& pm, Arm d, double tau_c) {
    if (!(tau_c > 0.0)) fail(ErrorCode::invalid_argument, "threshold must be positive");
    if (pm.trace_stages.empty()) fail(ErrorCode::invalid_argument, "frame has no per-stage snapshots");
    const std::size_t A = pm.theta.size();
    if (d >= A) fail(ErrorCode::arm_out_of_range, "arm out of range");
    const std::size_t K = pm.trace_stages.size();
    const std::size_t n = pm.aggregate_trace.size() / (K * A);
    std::vector<Exceedance> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(pm.aggregate_trace[(i * K + k) * A + d] - pm.theta[d]) > tau_c) ++hits;
        out[k].t = pm.trace_stages[k];
        out[k].p = n ? static_cast<double>(hits) / static_cast<double>(n) : num::kNaN;
        out[k].se = binomial_se(out[k].p, n);
    }
    return out;
}

inline std::vector<std::vector<Exceedance>> concentration_curve(const MetricsFrame& f, Arm d, double tau_c) {
    std::vector<std::vector<Exceedance>> out;
    for (const auto& pm : f.points) out.push_back(concentration_curve(pm, d, tau_c));
    return out;
}

// ---------------------------------------------------------------------------
// Tables

/// Shortest round-trip text for a double; "nan" for NaN.
inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

/// Column names of the summary table, in order.
inline std::vector<std::string> summary_columns(const MetricsFrame& f) {
    std::vector<std::string> cols = {"label", f.column, "reps", "failures", "mean_stop_time", "se_stop_time",
                                     "stop_rate", "mistake_rate", "se_mistake", "mean_earnings", "se_earnings",
                                     "q10_earnings", "q90_earnings", "mean_payoff", "se_payoff"};
    const std::size_t A = f.points.empty() ? 0 : f.points.front().theta.size();
    for (Arm d = 0; d < A; ++d) cols.push_back("mean_pulls_" + std::to_string(d));
    return cols;
}

inline std::string summary_cell(const MetricsFrame& f, const PointMetrics& p, const std::string& col) {
    if (col == "label") return p.label;
    if (col == f.column) return fmt(p.value);
    if (col == "reps") return std::to_string(p.reps.size());
    if (col == "failures") return std::to_string(p.failures);
    if (col == "mean_stop_time") return fmt(p.mean_stop_time);
    if (col == "se_stop_time") return fmt(p.se_stop_time);
    if (col == "stop_rate") return fmt(p.stop_rate);
    if (col == "mistake_rate") return fmt(p.mistake_rate);
    if (col == "se_mistake") return fmt(p.se_mistake);
    if (col == "mean_earnings") return fmt(p.mean_earnings);
    if (col == "se_earnings") return fmt(p.se_earnings);
    if (col == "q10_earnings") return fmt(p.q10_earnings);
    if (col == "q90_earnings") return fmt(p.q90_earnings);
    if (col == "mean_payoff") return fmt(p.mean_payoff);
    if (col == "se_payoff") return fmt(p.se_payoff);
    if (col.rfind("mean_pulls_", 0) == 0) return fmt(p.mean_pulls.at(std::stoul(col.substr(11))));
    fail(ErrorCode::invalid_argument, "unknown summary column: " + col);
}

/// Stage table columns: label, value, t, active, then per arm d and source o
/// aggregate_d, pulls_d, exceed_d (at tau_c), alpha_o_d, alpha_q10_o_d,
/// alpha_q90_o_d, zeta_o_d.
inline std::vector<std::string> stage_columns(const MetricsFrame& f) {
    std::vector<std::string> cols = {"label", f.column, "t", "active"};
    if (f.points.empty() || f.points.front().stages.empty()) return cols;
    const auto& row = f.points.front().stages.front();
    const std::size_t A = row.aggregate_mean.size(), L = row.alpha_mean.size();
    for (Arm d = 0; d < A; ++d) {
        const auto ds = std::to_string(d);
        cols.push_back("aggregate_" + ds);
        cols.push_back("pulls_" + ds);
        cols.push_back("exceed_" + ds);
    }
    for (std::size_t o = 0; o < L; ++o)
        for (Arm d = 0; d < A; ++d) {
            const auto s = std::to_string(o) + "_" + std::to_string(d);
            for (const char* p : {"alpha_", "alpha_q10_", "alpha_q90_", "zeta_"}) cols.push_back(p + s);
        }
    return cols;
}

struct TableSpec {
    std::string file;                  ///< e.g. "fig5_stopping.tsv"
    std::vector<std::string> columns;  ///< empty means all
    bool stage = false;                ///< columns come from the stage table
};

namespace detail {

inline void write_tsv_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "\t" : "") << cells[i];
    out << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io_error, "cannot write " + p.string());
    return out;
}

/// Every stage-table row of every point, cells in stage_columns order.
inline std::vector<std::vector<std::string>> stage_cells(const MetricsFrame& f) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& pt : f.points) {
        const std::size_t A = pt.theta.size();
        std::vector<std::vector<Exceedance>> exc;
        for (Arm d = 0; d < A; ++d) exc.push_back(concentration_curve(pt, d, f.tau_c));
        for (std::size_t k = 0; k < pt.stages.size(); ++k) {
            const auto& row = pt.stages[k];
            std::vector<std::string> cells = {pt.label, fmt(pt.value), std::to_string(row.t),
                                              std::to_string(row.active)};
            for (Arm d = 0; d < A; ++d) {
                cells.push_back(fmt(row.aggregate_mean[d]));
                cells.push_back(fmt(row.pulls_mean[d]));
                cells.push_back(fmt(exc[d][k].p));
            }
            for (std::size_t o = 0; o < row.alpha_mean.size(); ++o)
                for (Arm d = 0; d < A; ++d) {
                    cells.push_back(fmt(row.alpha_mean[o][d]));
                    cells.push_back(fmt(row.alpha_q10[o][d]));
                    cells.push_back(fmt(row.alpha_q90[o][d]));
                    cells.push_back(fmt(row.zeta_mean[o][d]));
                }
            rows.push_back(std::move(cells));
        }
    }
    return rows;
}

inline std::vector<std::size_t> column_indices(const std::vector<std::string>& all,
                                               const std::vector<std::string>& wanted) {
    std::vector<std::size_t> idx;
    for (const auto& c : wanted.empty() ? all : wanted) {
        auto it = std::find(all.begin(), all.end(), c);
        if (it == all.end()) fail(ErrorCode::invalid_argument, "unknown column: " + c);
        idx.push_back(static_cast<std::size_t>(it - all.begin()));
    }
    return idx;
}

}  // namespace detail

/// Writes summary.tsv, stages.tsv (when series were recorded), any extra
/// figure tables, and metadata.json into `dir`. Output bytes depend only on
/// the frame. Everything is validated before the first file is created.
inline std::vector<std::filesystem::path> emit_results(const MetricsFrame& f, const std::filesystem::path& dir,
                                                       const std::vector<TableSpec>& extra = {}) {
    if (f.points.empty()) fail(ErrorCode::invalid_argument, "cannot emit an empty grid");
    const bool series = !f.points.front().stages.empty();
    const auto sum_cols = summary_columns(f);
    const auto stage_cols = stage_columns(f);
    std::vector<std::vector<std::string>> sum_rows;
    for (const auto& pt : f.points) {
        std::vector<std::string> cells;
        for (const auto& c : sum_cols) cells.push_back(summary_cell(f, pt, c));
        sum_rows.push_back(std::move(cells));
    }
    const auto stage_rows = series ? detail::stage_cells(f) : std::vector<std::vector<std::string>>{};
    std::vector<std::vector<std::size_t>> extra_idx;
    for (const auto& t : extra) {
        if (t.stage && !series) fail(ErrorCode::invalid_argument, t.file + " needs per-stage series");
        extra_idx.push_back(detail::column_indices(t.stage ? stage_cols : sum_cols, t.columns));
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) fail(ErrorCode::io_error, "cannot create " + dir.string());

    std::vector<std::filesystem::path> written;
    auto table = [&](const std::string& file, const std::vector<std::string>& cols,
                     const std::vector<std::vector<std::string>>& rows, const std::vector<std::size_t>& idx) {
        const auto p = dir / file;
        auto out = detail::open_out(p);
        std::vector<std::string> cells;
        for (std::size_t i : idx) cells.push_back(cols[i]);
        detail::write_tsv_row(out, cells);
        for (const auto& r : rows) {
            cells.clear();
            for (std::size_t i : idx) cells.push_back(r[i]);
            detail::write_tsv_row(out, cells);
        }
        if (!out) fail(ErrorCode::io_error, "write failed: " + p.string());
        written.push_back(p);
    };
    table("summary.tsv", sum_cols, sum_rows, detail::column_indices(sum_cols, {}));
    if (series) table("stages.tsv", stage_cols, stage_rows, detail::column_indices(stage_cols, {}));
    for (std::size_t i = 0; i < extra.size(); ++i)
        table(extra[i].file, extra[i].stage ? stage_cols : sum_cols, extra[i].stage ? stage_rows : sum_rows,
              extra_idx[i]);

    json meta = {{"version", kVersion},
                 {"json_library", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                 {"config_hash", f.config_hash},
                 {"seed", f.seed},
                 {"reps", f.reps},
                 {"thin", f.thin},
                 {"param", f.param},
                 {"column", f.column},
                 {"tau_c", f.tau_c},
                 {"seed_rule", "run r of point i uses stream_seed(stream_seed(seed, i), r)"}};
    json pts = json::array();
    for (const auto& pt : f.points) {
        json failed = json::array();
        for (const auto& r : pt.reps)
            if (!r.ok) failed.push_back({{"index", r.index}, {"seed", r.seed}, {"error", r.error}});
        pts.push_back({{"label", pt.label}, {"value", pt.value}, {"seed", pt.seed}, {"failed", std::move(failed)}});
    }
    meta["points"] = std::move(pts);
    const auto p = dir / "metadata.json";
    auto out = detail::open_out(p);
    out << meta.dump(2) << '\n';
    if (!out) fail(ErrorCode::io_error, "write failed: " + p.string());
    written.push_back(p);
    return written;
}

}  // namespace mpb
