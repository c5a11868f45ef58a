#pragma once

// Built-in sweep presets for the eight simulation figures. All share
// theta = (1, 1.3), sigma = (1, 1), T = 1000 and epsilon-greedy assignment.
// "epsilon" here is the exploration rate: each arm's floor is epsilon / (M+1),
// so epsilon = 0.5 on two arms plays the greedy arm with probability 0.75.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "mpb/montecarlo.hpp"

namespace mpb {

enum class Figure { weights, beliefs, concentration, priors, stopping, bias, earnings, payoff };

inline constexpr Figure kAllFigures[] = {Figure::weights, Figure::beliefs, Figure::concentration, Figure::priors,
                                         Figure::stopping, Figure::bias, Figure::earnings, Figure::payoff};

inline std::string_view to_string(Figure f) {
    switch (f) {
        case Figure::weights: return "weights";
        case Figure::beliefs: return "beliefs";
        case Figure::concentration: return "concentration";
        case Figure::priors: return "priors";
        case Figure::stopping: return "stopping";
        case Figure::bias: return "bias";
        case Figure::earnings: return "earnings";
        case Figure::payoff: return "payoff";
    }
    return "unknown";
}

inline Figure figure_from_string(std::string_view s) {
    for (Figure f : kAllFigures)
        if (to_string(f) == s) return f;
    fail(ErrorCode::invalid_argument, "unknown figure: " + std::string(s));
}

struct FigureOptions {
    std::size_t reps = 1000;
    std::uint64_t seed = 20240601;
    double beliefs_bias = 0.3;  ///< stubborn bias for the beliefs figure; 0.5 is the alternative reading
    unsigned threads = 0;
};

struct FigurePreset {
    Figure figure;
    SweepSpec sweep;
    std::vector<TableSpec> tables;
};

namespace presets {

inline constexpr double kTheta0 = 1.0;
inline constexpr double kTheta1 = 1.3;

inline SourcePrior source(std::size_t id, double bias, double nu0) {
    return SourcePrior{id, {kTheta0 + bias, kTheta1 + bias}, {nu0, nu0}};
}

/// Two unbiased diffuse sources, no stopping, no payoff.
inline ExperimentConfig base() {
    ExperimentConfig c;
    c.environment.theta = {kTheta0, kTheta1};
    c.environment.sigma = {1.0, 1.0};
    c.sources = {source(0, 0.0, 1.0), source(1, 0.0, 1.0)};
    c.policy.family = PolicyFamily::epsilon_greedy;
    c.policy.epsilon = 0.25;
    c.horizon = 1000;
    return c;
}

/// Rule with B = 100 and A calibrated from beta = 0.01.
inline StoppingSpec stopping(std::uint64_t horizon = 1000) {
    StoppingSpec s;
    s.burn_in = 100;
    s.horizon = horizon;
    s.beta = 0.01;
    s.gamma_A = calibrate(s.beta, s.burn_in, horizon, 2);
    return s;
}

inline ExperimentConfig with_explore(ExperimentConfig c, double epsilon) { return apply_param(c, "epsilon", epsilon); }

/// Unbiased diffuse source 0 plus source 1 with the given bias and conviction.
inline ExperimentConfig two_source(double bias, double nu0) {
    ExperimentConfig c = base();
    c.sources = {source(0, 0.0, 1.0), source(1, bias, nu0)};
    return with_explore(c, 0.5);
}

inline std::vector<double> steps(double lo, double hi, double step) {
    std::vector<double> out;
    const auto n = static_cast<int>(std::llround((hi - lo) / step));
    for (int k = 0; k <= n; ++k) out.push_back(std::round((lo + k * step) * 1e6) / 1e6);
    return out;
}

inline std::string label(std::string_view prefix, double v) {
    std::ostringstream s;
    s << prefix << v;
    return s.str();
}

}  // namespace presets

/// Sweep and figure tables for one figure.
inline FigurePreset figure_preset(Figure fig, const FigureOptions& opt = {}) {
    using namespace presets;
    FigurePreset p{fig, {}, {}};
    SweepSpec& s = p.sweep;
    s.reps = opt.reps;
    s.seed = opt.seed + static_cast<std::uint64_t>(fig);
    s.threads = opt.threads;
    s.base = base();
    switch (fig) {
        case Figure::weights:
        case Figure::beliefs: {
            const double bias = fig == Figure::weights ? 0.3 : opt.beliefs_bias;
            s.param = "shift:1";
            s.column = "bias";
            s.base = two_source(bias, 250.0);
            s.grid = {{"stubborn", bias, two_source(bias, 250.0)}, {"confident", 0.0, two_source(0.0, 250.0)}};
            if (fig == Figure::weights) {
                p.tables.push_back({"fig1_weights.tsv",
                                    {"label", "t", "alpha_0_0", "alpha_0_1", "alpha_1_0", "alpha_1_1", "alpha_q10_1_0",
                                     "alpha_q90_1_0", "alpha_q10_1_1", "alpha_q90_1_1"},
                                    true});
            } else {
                p.tables.push_back({"fig2_beliefs.tsv",
                                    {"label", "t", "zeta_0_0", "zeta_0_1", "zeta_1_0", "zeta_1_1", "aggregate_0",
                                     "aggregate_1"},
                                    true});
            }
            break;
        }
        case Figure::concentration: {
            s.param = "epsilon";
            const std::vector<double> eps = {0.1, 0.5, 0.9};
            s.grid = make_grid(s.base, s.param, eps);
            p.tables.push_back(
                {"fig3_concentration.tsv", {"label", "epsilon", "t", "exceed_0", "exceed_1", "pulls_0", "pulls_1"}, true});
            break;
        }
        case Figure::priors: {
            // Descending stubbornness (bias x sqrt(conviction)); the last line is confident.
            s.param = "nu:1";
            s.column = "stubbornness";
            s.base = two_source(0.3, 250.0);
            for (double nu : {250.0, 100.0, 25.0}) {
                auto c = two_source(0.3, nu);
                s.grid.push_back({label("bias=0.3,nu=", nu), 0.3 * std::sqrt(nu), c});
            }
            s.grid.push_back({"bias=0,nu=250", 0.0, two_source(0.0, 250.0)});
            p.tables.push_back({"fig4_priors.tsv", {"label", "stubbornness", "t", "exceed_0", "exceed_1"}, true});
            break;
        }
        case Figure::stopping: {
            s.param = "epsilon";
            s.base.stopping = stopping();
            s.stage_series = false;
            s.grid = make_grid(s.base, s.param, steps(0.1, 0.9, 0.1));
            p.tables.push_back({"fig5_stopping.tsv", {"epsilon", "mean_stop_time", "mistake_rate", "se_mistake"}});
            break;
        }
        case Figure::bias: {
            // Model 0 reverses the ranking by `bias`; the combined model adds an
            // unbiased source with the same conviction.
            s.param = "reverse:0";
            s.column = "bias";
            s.stage_series = false;
            ExperimentConfig stubborn = with_explore(base(), 0.5);
            stubborn.stopping = stopping();
            stubborn.sources = {source(0, 0.0, 250.0)};
            ExperimentConfig combined = stubborn;
            combined.sources = {source(0, 0.0, 250.0), source(1, 0.0, 250.0)};
            s.base = combined;
            for (const auto& [name, cfg] : {std::pair{"stubborn", stubborn}, std::pair{"combined", combined}})
                for (double b : steps(0.0, 0.5, 0.05))
                    s.grid.push_back({label(std::string(name) + ",bias=", b), b, apply_param(cfg, "reverse:0", b)});
            p.tables.push_back({"fig6_bias.tsv", {"label", "bias", "mistake_rate", "se_mistake", "mean_stop_time"}});
            break;
        }
        case Figure::earnings: {
            s.param = "epsilon";
            s.stage_series = false;
            for (double e : steps(0.1, 0.9, 0.1))
                s.grid.push_back({label("diffuse,epsilon=", e), e, with_explore(base(), e)});
            for (double e : steps(0.1, 0.9, 0.1))
                s.grid.push_back({label("stubborn,epsilon=", e), e, with_explore(two_source(0.3, 250.0), e)});
            p.tables.push_back(
                {"fig7_earnings.tsv", {"label", "epsilon", "mean_earnings", "se_earnings", "q10_earnings", "q90_earnings"}});
            break;
        }
        case Figure::payoff: {
            s.param = "epsilon";
            s.stage_series = false;
            s.base.stopping = stopping();
            s.base.payoff = PayoffSpec{0.994, 1.15, 1.15};
            s.grid = make_grid(s.base, s.param, steps(0.05, 0.9, 0.05));
            p.tables.push_back({"fig8_payoff.tsv", {"epsilon", "mean_payoff", "se_payoff", "mean_stop_time"}});
            break;
        }
    }
    return p;
}

}  // namespace mpb
