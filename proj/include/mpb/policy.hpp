#pragma once

// Markov assignment rules over the aggregated beliefs, all floored so that
// every arm keeps probability at least epsilon.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpb/belief.hpp"
#include "mpb/error.hpp"
#include "mpb/numeric.hpp"
#include "mpb/rng.hpp"

namespace mpb {

enum class PolicyFamily { epsilon_greedy, perturbed_softmax, thompson_floored };

inline std::string_view to_string(PolicyFamily f) {
    switch (f) {
        case PolicyFamily::epsilon_greedy: return "epsilon-greedy";
        case PolicyFamily::perturbed_softmax: return "perturbed-softmax";
        case PolicyFamily::thompson_floored: return "thompson-floored";
    }
    return "unknown";
}

inline PolicyFamily policy_family_from_string(std::string_view s) {
    if (s == "epsilon-greedy") return PolicyFamily::epsilon_greedy;
    if (s == "perturbed-softmax") return PolicyFamily::perturbed_softmax;
    if (s == "thompson-floored") return PolicyFamily::thompson_floored;
    fail(ErrorCode::invalid_argument, "unknown policy family: " + std::string(s));
}

struct PolicySpec {
    PolicyFamily family = PolicyFamily::epsilon_greedy;
    double epsilon = 0.05;      ///< per-arm probability floor
    double h = 1.0;             ///< softmax inverse temperature
    int thompson_draws = 1024;  ///< Monte Carlo draws for the Thompson probabilities
};

struct ActionDistribution {
    std::vector<double> probs;

    bool operator==(const ActionDistribution&) const = default;
};

namespace detail {

inline constexpr double kFloorSlack = 1e-12;

inline void check_floor(double epsilon, std::size_t arms, bool allow_zero) {
    const double cap = 1.0 / static_cast<double>(arms);
    const bool low_ok = allow_zero ? epsilon >= 0.0 : epsilon > 0.0;
    if (!(low_ok && epsilon <= cap + kFloorSlack))
        fail(ErrorCode::invalid_argument, "epsilon must lie in (0, 1/(M+1)]");
}

/// (M+1) eps * uniform + (1 - (M+1) eps) * base.
inline ActionDistribution floor_mix(std::vector<double> base, double epsilon) {
    const double k = static_cast<double>(base.size());
    const double explore = std::min(1.0, k * epsilon);
    for (double& p : base) p = epsilon + (1.0 - explore) * p;
    if (explore >= 1.0)
        for (double& p : base) p = 1.0 / k;
    return {std::move(base)};
}

}  // namespace detail

/// Each arm gets epsilon; the highest aggregate mean (last index on ties) gets
/// the remaining 1 - (M+1) epsilon.
inline ActionDistribution epsilon_greedy_probs(std::span<const double> aggregate, double epsilon) {
    if (aggregate.size() < 1) fail(ErrorCode::invalid_argument, "at least one arm is required");
    detail::check_floor(epsilon, aggregate.size(), false);
    std::vector<double> base(aggregate.size(), 0.0);
    base[num::argmax_last(aggregate)] = 1.0;
    return detail::floor_mix(std::move(base), epsilon);
}

/// Floored softmax over h * payoff.
inline ActionDistribution softmax_probs(std::span<const double> payoffs, double h, double epsilon) {
    if (payoffs.empty()) fail(ErrorCode::invalid_argument, "at least one arm is required");
    if (!(h > 0.0)) fail(ErrorCode::invalid_argument, "h must be positive");
    detail::check_floor(epsilon, payoffs.size(), true);
    std::vector<double> logits(payoffs.size());
    for (std::size_t d = 0; d < payoffs.size(); ++d) {
        if (!std::isfinite(payoffs[d])) fail(ErrorCode::invalid_argument, "payoffs must be finite");
        logits[d] = h * payoffs[d];
    }
    return detail::floor_mix(num::normalize_log_weights(logits), epsilon);
}

/// Monte Carlo estimate of the probability that each arm has the highest mean
/// under the aggregated posterior, floored by epsilon. Each draw samples every
/// arm once; ties go to the highest index.
inline ActionDistribution thompson_probs(const BeliefBank& bank, int draws, double epsilon, Rng& rng) {
    if (draws < 1) fail(ErrorCode::invalid_argument, "thompson draws must be >= 1");
    const std::size_t A = bank.arms();
    detail::check_floor(epsilon, A, true);
    std::vector<double> counts(A, 0.0);
    std::vector<double> sample(A);
    for (int i = 0; i < draws; ++i) {
        for (Arm d = 0; d < A; ++d) sample[d] = sample_aggregate_posterior(bank, d, rng);
        counts[num::argmax_last(sample)] += 1.0;
    }
    for (double& c : counts) c /= static_cast<double>(draws);
    return detail::floor_mix(std::move(counts), epsilon);
}

/// Inverse-CDF draw over arms in index order.
inline Arm sample_action(const ActionDistribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (Arm d = 0; d < dist.probs.size(); ++d) {
        cum += dist.probs[d];
        if (u < cum) return d;
    }
    // Rounding left u above the total: fall back to the last arm with mass.
    for (Arm d = dist.probs.size(); d-- > 0;)
        if (dist.probs[d] > 0.0) return d;
    return 0;
}

/// Assignment distribution for the current beliefs. The softmax payoff index
/// defaults to the aggregate means.
inline ActionDistribution action_probs(const PolicySpec& spec, const BeliefBank& bank, Rng& rng,
                                       std::span<const double> payoff_index = {}) {
    switch (spec.family) {
        case PolicyFamily::epsilon_greedy:
            return epsilon_greedy_probs(bank.aggregates(), spec.epsilon);
        case PolicyFamily::perturbed_softmax:
            return softmax_probs(payoff_index.empty() ? std::span<const double>(bank.aggregates()) : payoff_index,
                                 spec.h, spec.epsilon);
        case PolicyFamily::thompson_floored:
            return thompson_probs(bank, spec.thompson_draws, spec.epsilon, rng);
    }
    fail(ErrorCode::invalid_argument, "unknown policy family");
}

}  // namespace mpb
