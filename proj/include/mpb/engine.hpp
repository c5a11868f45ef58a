#pragma once

// One adaptive experiment end-to-end. A stage at belief stage t runs:
//   (1) if t >= B, evaluate the stopping rule on the current beliefs; halt if it fires
//   (2) assignment distribution from current beliefs
//   (3) sample the assignment
//   (4) observe the outcome of the assigned arm only
//   (5) posterior update, t -> t + 1
//   (6) snapshot

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpb/belief.hpp"
#include "mpb/error.hpp"
#include "mpb/policy.hpp"
#include "mpb/rng.hpp"
#include "mpb/stopping.hpp"

namespace mpb {

enum class OutcomeFamily { gaussian, bounded_uniform };

struct Environment {
    std::vector<double> theta;  ///< true mean per arm
    std::vector<double> sigma;  ///< true standard deviation per arm
    OutcomeFamily family = OutcomeFamily::gaussian;

    std::size_t arms() const { return theta.size(); }

    double draw(Arm arm, Rng& rng) const {
        const double th = theta.at(arm);
        const double sd = sigma.at(arm);
        if (family == OutcomeFamily::gaussian) return rng.normal(th, sd);
        // Uniform on [th - sd*sqrt(3), th + sd*sqrt(3)] has standard deviation sd.
        return th + sd * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
    }

    double best_value() const {
        double b = -num::kInf;
        for (double t : theta) b = std::max(b, t);
        return b;
    }
};

struct PayoffSpec {
    double discount = 0.994;
    double cost_experiment = 0.0;  ///< c1, per experimental stage
    double cost_deploy = 0.0;      ///< c2, per post-stop stage
};

struct ExperimentConfig {
    Environment environment;
    std::vector<SourcePrior> sources;
    std::vector<SupportRestriction> support;  ///< optional, one per source
    PolicySpec policy;
    std::optional<StoppingSpec> stopping;     ///< absent: run to the horizon
    std::uint64_t horizon = 1000;
    std::optional<PayoffSpec> payoff;
    std::uint64_t seed = 0;

    std::size_t arms() const { return environment.arms(); }
};

/// Field-level validation; empty result means the config is usable.
inline std::vector<FieldIssue> validate(const ExperimentConfig& c) {
    std::vector<FieldIssue> issues;
    auto bad = [&](std::string f, std::string m) { issues.push_back({std::move(f), std::move(m)}); };
    const std::size_t A = c.environment.theta.size();
    if (A < 2) bad("environment.theta", "at least two arms are required");
    if (c.environment.sigma.size() != A) bad("environment.sigma", "needs one entry per arm");
    for (double th : c.environment.theta)
        if (!std::isfinite(th)) bad("environment.theta", "entries must be finite");
    for (double s : c.environment.sigma)
        if (!(s >= 0.0) || !std::isfinite(s)) bad("environment.sigma", "entries must be finite and >= 0");
    if (c.sources.empty()) bad("sources", "at least one source is required");
    for (std::size_t o = 0; o < c.sources.size(); ++o) {
        const auto& s = c.sources[o];
        const std::string p = "sources[" + std::to_string(o) + "]";
        if (s.zeta0.size() != A) bad(p + ".zeta0", "needs one entry per arm");
        if (s.nu0.size() != A) bad(p + ".nu0", "needs one entry per arm");
        for (double z : s.zeta0)
            if (!std::isfinite(z)) bad(p + ".zeta0", "entries must be finite");
        for (double n : s.nu0)
            if (!(n > 0.0) || !std::isfinite(n)) bad(p + ".nu0", "entries must be positive and finite");
    }
    if (!c.support.empty() && c.support.size() != c.sources.size())
        bad("sources", "support restrictions must be given for all sources or none");
    if (A >= 1) {
        const double cap = 1.0 / static_cast<double>(A);
        const double e = c.policy.epsilon;
        const bool allow_zero = c.policy.family != PolicyFamily::epsilon_greedy;
        if (!((allow_zero ? e >= 0.0 : e > 0.0) && e <= cap + 1e-12))
            bad("policy.epsilon", "must lie in (0, 1/(M+1)]");
    }
    if (!(c.policy.h > 0.0)) bad("policy.h", "must be positive");
    if (c.policy.thompson_draws < 1) bad("policy.thompson_draws", "must be >= 1");
    if (c.horizon < 1) bad("horizon", "must be >= 1");
    if (c.stopping) {
        const auto& s = *c.stopping;
        if (s.burn_in < 1) bad("stopping.burn_in", "must be >= 1");
        if (s.burn_in > c.horizon) bad("stopping.burn_in", "must not exceed the horizon");
        if (s.horizon != c.horizon) bad("stopping.horizon", "must equal the experiment horizon");
        if (!(s.beta > 0.0 && s.beta < 1.0)) bad("stopping.beta", "must lie in (0,1)");
        if (s.gamma_override) {
            if (s.gamma_override->values.empty()) bad("stopping.gamma_override", "must not be empty");
            if (s.gamma_override->values.size() > 1 && s.gamma_override->values.size() < c.horizon)
                bad("stopping.gamma_override", "sequence must cover every stage up to the horizon");
            for (double g : s.gamma_override->values)
                if (!(g >= 0.0) || !std::isfinite(g)) bad("stopping.gamma_override", "entries must be finite and >= 0");
        } else {
            if (!(s.gamma_A > 1.0)) bad("stopping.gamma_A", "must be > 1");
            if (s.burn_in < 2) bad("stopping.burn_in", "must be >= 2 when gamma follows the log(t)/sqrt(t) schedule");
        }
    }
    if (c.payoff) {
        if (!(c.payoff->discount > 0.0 && c.payoff->discount < 1.0)) bad("payoff.discount", "must lie in (0,1)");
    }
    return issues;
}

inline void ensure_valid(const ExperimentConfig& c) {
    auto issues = validate(c);
    if (!issues.empty()) {
        std::string msg = "invalid config:";
        for (const auto& i : issues) msg += " " + i.field + " (" + i.message + ");";
        throw Error(ErrorCode::invalid_config, msg, std::move(issues));
    }
}

/// Compact per-stage view of the beliefs after the update.
struct BeliefSnapshot {
    std::vector<double> aggregate;           ///< zeta^alpha per arm
    std::vector<std::vector<double>> alpha;  ///< [source][arm]
    std::vector<double> frequency;           ///< f_t per arm

    bool operator==(const BeliefSnapshot&) const = default;
};

inline BeliefSnapshot snapshot_of(const BeliefBank& bank) {
    BeliefSnapshot s;
    s.aggregate = bank.aggregates();
    s.alpha = bank.alpha_matrix();
    s.frequency.resize(bank.arms());
    for (Arm d = 0; d < bank.arms(); ++d) s.frequency[d] = bank.frequency(d);
    return s;
}

struct StageRecord {
    std::uint64_t t = 0;  ///< belief stage at the start; the outcome, if any, is observation t + 1
    bool stop_checked = false;
    std::optional<StopDecision> stop_decision;
    bool stop_overridden = false;
    ActionDistribution action_probs;
    std::optional<Arm> assignment;
    std::optional<double> outcome;
    BeliefSnapshot snapshot;
};

enum class RunStatus { live, stopped, horizon_forced };

inline std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::live: return "live";
        case RunStatus::stopped: return "stopped";
        case RunStatus::horizon_forced: return "horizon-forced";
    }
    return "unknown";
}

struct RunResult {
    std::vector<StageRecord> log;
    std::uint64_t stop_time = 0;  ///< tau: observations collected when the run halted
    Arm chosen_arm = 0;
    bool forced = false;          ///< horizon reached without the rule firing
    bool mistake = false;
    std::vector<double> avg_outcome_path;  ///< running mean of observed outcomes
    std::optional<double> payoff;
    BeliefBank final_bank;
};

/// Result of the decision half of a stage: either a halt or an assignment.
struct StageStart {
    std::uint64_t t = 0;
    bool stop_checked = false;
    std::optional<StopDecision> stop_decision;
    bool halted = false;
    bool forced = false;
    Arm chosen_arm = 0;
    ActionDistribution action_probs;
    Arm assignment = 0;
};

/// Steps (1)-(3). With `override_stop` the rule is evaluated and reported but
/// does not halt the run. At the horizon the run halts regardless; if the rule
/// has not fired the recommendation is the current argmax (forced).
inline StageStart begin_stage(const BeliefBank& bank, const PolicySpec& policy,
                              const std::optional<StoppingSpec>& stopping, std::uint64_t horizon,
                              Rng& policy_rng, bool override_stop = false) {
    if (bank.stopped()) fail(ErrorCode::experiment_stopped, "stage requested after halt");
    StageStart s;
    s.t = bank.stage();
    if (stopping && s.t >= stopping->burn_in) {
        s.stop_checked = true;
        s.stop_decision = should_stop(bank, *stopping, s.t);
        if (s.stop_decision->stop && !override_stop) {
            s.halted = true;
            s.chosen_arm = *s.stop_decision->chosen_arm;
            return s;
        }
    }
    if (s.t >= horizon) {
        s.halted = true;
        s.forced = true;
        s.chosen_arm = num::argmax_last(bank.aggregates());
        return s;
    }
    s.action_probs = action_probs(policy, bank, policy_rng);
    s.assignment = sample_action(s.action_probs, policy_rng);
    return s;
}

/// Steps (5)-(6).
inline StageRecord complete_stage(BeliefBank& bank, const StageStart& start, double outcome) {
    bank.observe(start.assignment, outcome);
    bank.advance_stage();
    StageRecord rec;
    rec.t = start.t;
    rec.stop_checked = start.stop_checked;
    rec.stop_decision = start.stop_decision;
    rec.stop_overridden = start.stop_decision && start.stop_decision->stop;
    rec.action_probs = start.action_probs;
    rec.assignment = start.assignment;
    rec.outcome = outcome;
    rec.snapshot = snapshot_of(bank);
    return rec;
}

inline StageRecord halt_record(const BeliefBank& bank, const StageStart& start) {
    StageRecord rec;
    rec.t = start.t;
    rec.stop_checked = start.stop_checked;
    rec.stop_decision = start.stop_decision;
    rec.snapshot = snapshot_of(bank);
    return rec;
}

/// One full stage against a simulated environment. The bank is updated in
/// place; on halt it is marked stopped and the record carries no outcome.
inline StageRecord run_stage(BeliefBank& bank, const Environment& env, const PolicySpec& policy,
                             const std::optional<StoppingSpec>& stopping, std::uint64_t horizon,
                             Rng& policy_rng, Rng& env_rng) {
    const StageStart start = begin_stage(bank, policy, stopping, horizon, policy_rng);
    if (start.halted) {
        StageRecord rec = halt_record(bank, start);
        bank.mark_stopped();
        return rec;
    }
    const double y = env.draw(start.assignment, env_rng);
    return complete_stage(bank, start, y);
}

/// Supplies the outcome for (stage t, assigned arm). Used to script outcomes.
using OutcomeSource = std::function<double(std::uint64_t t, Arm arm)>;

/// Observer invoked after every completed stage with the updated bank.
using StageObserver = std::function<void(const BeliefBank&, const StageRecord&)>;

struct RunOptions {
    bool keep_log = true;
    StageObserver on_stage;
    OutcomeSource outcomes;  ///< if set, replaces environment draws
};

inline BeliefBank initial_bank(const ExperimentConfig& config) { return BeliefBank(config.sources); }

/// Discounted payoff: sum_{s=1}^{tau} b^s (Y_s - c1) + b^{tau+1} / (1 - b) (theta(chosen) - c2).
inline double payoff(const RunResult& result, const Environment& env, const PayoffSpec& spec) {
    const double b = spec.discount;
    if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::invalid_argument, "discount must lie in (0,1)");
    double acc = 0.0;
    double w = 1.0;
    for (const auto& rec : result.log) {
        if (!rec.outcome) continue;
        w *= b;
        acc += w * (*rec.outcome - spec.cost_experiment);
    }
    const double tail = std::pow(b, static_cast<double>(result.stop_time) + 1.0) / (1.0 - b);
    return acc + tail * (env.theta.at(result.chosen_arm) - spec.cost_deploy);
}

/// Streaming form of `payoff` for runs that do not keep their log.
inline double payoff_from_outcomes(std::span<const double> outcomes, double theta_chosen, const PayoffSpec& spec) {
    const double b = spec.discount;
    if (!(b > 0.0 && b < 1.0)) fail(ErrorCode::invalid_argument, "discount must lie in (0,1)");
    double acc = 0.0;
    double w = 1.0;
    for (double y : outcomes) {
        w *= b;
        acc += w * (y - spec.cost_experiment);
    }
    const double tail = std::pow(b, static_cast<double>(outcomes.size()) + 1.0) / (1.0 - b);
    return acc + tail * (theta_chosen - spec.cost_deploy);
}

/// Runs one experiment. Deterministic given (config, seed): the policy and the
/// environment draw from separate substreams of `seed`.
inline RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& opts = {}) {
    ensure_valid(config);
    Rng policy_rng(substream_seed(seed, Stream::policy));
    Rng env_rng(substream_seed(seed, Stream::environment));
    BeliefBank bank = initial_bank(config);
    RunResult res;
    std::vector<double> outcomes;
    outcomes.reserve(config.horizon);
    double running = 0.0;

    while (true) {
        const StageStart start = begin_stage(bank, config.policy, config.stopping, config.horizon, policy_rng);
        if (start.halted) {
            if (opts.keep_log) res.log.push_back(halt_record(bank, start));
            bank.mark_stopped();
            res.stop_time = start.t;
            res.chosen_arm = start.chosen_arm;
            res.forced = start.forced;
            break;
        }
        const double y = opts.outcomes ? opts.outcomes(start.t, start.assignment)
                                       : config.environment.draw(start.assignment, env_rng);
        StageRecord rec = complete_stage(bank, start, y);
        outcomes.push_back(y);
        running += y;
        res.avg_outcome_path.push_back(running / static_cast<double>(outcomes.size()));
        if (opts.on_stage) opts.on_stage(bank, rec);
        if (opts.keep_log) res.log.push_back(std::move(rec));
    }
    StopDecision final_decision;
    final_decision.stop = true;
    final_decision.chosen_arm = res.chosen_arm;
    res.mistake = is_mistake(final_decision, config.environment.theta);
    if (config.payoff)
        res.payoff = payoff_from_outcomes(outcomes, config.environment.theta[res.chosen_arm], *config.payoff);
    res.final_bank = std::move(bank);
    return res;
}

/// Covariate cells are independent problems: one bank and one run per cell,
/// cell k seeded with stream k of `seed`.
inline std::vector<RunResult> run_cells(std::span<const ExperimentConfig> cells, std::uint64_t seed,
                                        const RunOptions& opts = {}) {
    std::vector<RunResult> out;
    out.reserve(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) out.push_back(run_experiment(cells[k], stream_seed(seed, k), opts));
    return out;
}

}  // namespace mpb
