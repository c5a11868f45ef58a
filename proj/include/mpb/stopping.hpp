#pragma once

// Threshold stopping rule: after burn-in B, stop as soon as one arm's
// aggregate mean beats every other arm by more than the cutoff
// c_t(gamma, d, m) = c_t(gamma, d) + c_t(gamma, m), with
// c_t(gamma, d) = gamma * sum_o alpha^o(d) / (f_t(d) + nu0^o(d) / t).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mpb/belief.hpp"
#include "mpb/error.hpp"
#include "mpb/numeric.hpp"

namespace mpb {

/// Explicit gamma sequence. A single value applies to every stage; otherwise
/// values[t - 1] is gamma_t.
struct GammaOverride {
    std::vector<double> values;

    double at(std::uint64_t t) const {
        if (values.empty()) fail(ErrorCode::invalid_argument, "empty gamma override");
        if (values.size() == 1) return values.front();
        if (t < 1 || t > values.size()) fail(ErrorCode::invalid_argument, "gamma override does not cover stage");
        return values[t - 1];
    }
};

struct StoppingSpec {
    std::uint64_t burn_in = 100;  ///< B
    std::uint64_t horizon = 1000; ///< T
    double gamma_A = 2.0;         ///< A in gamma_t = log(t) sqrt(A) / sqrt(t)
    double beta = 0.01;           ///< target mistake tolerance
    std::optional<GammaOverride> gamma_override;
};

struct StopDecision {
    bool stop = false;
    std::optional<Arm> chosen_arm;
    double margin = num::kNaN;
    std::vector<std::vector<double>> cutoffs;  ///< [d][m], zero on the diagonal
};

/// gamma_t: the override if present, else log(t) sqrt(A) / sqrt(t).
inline double gamma_schedule(const StoppingSpec& spec, std::uint64_t t) {
    if (spec.gamma_override) return spec.gamma_override->at(t);
    if (t < 2) fail(ErrorCode::invalid_argument, "gamma schedule needs t >= 2");
    const double tt = static_cast<double>(t);
    return std::log(tt) * std::sqrt(spec.gamma_A) / std::sqrt(tt);
}

/// Per-arm half of the cutoff, c_t(gamma, d).
inline double arm_cutoff(const BeliefBank& bank, Arm d, double gamma) {
    const std::uint64_t t = bank.stage();
    if (t == 0) fail(ErrorCode::invalid_argument, "cutoff needs t >= 1");
    const double tt = static_cast<double>(t);
    const double f = bank.frequency(d);
    double acc = 0.0;
    for (std::size_t o = 0; o < bank.num_sources(); ++o)
        acc += bank.alpha(o, d) / (f + bank.sources()[o].nu0[d] / tt);
    return gamma * acc;
}

inline double cutoff(const BeliefBank& bank, Arm d, Arm m, double gamma) {
    return arm_cutoff(bank, d, gamma) + arm_cutoff(bank, m, gamma);
}

/// Evaluates the stopping statistic max_d min_{m != d} [zeta^a(d) - zeta^a(m) - c_t(d, m)]
/// for a bank at stage t. Never stops before burn-in.
inline StopDecision should_stop(const BeliefBank& bank, const StoppingSpec& spec, std::uint64_t t) {
    StopDecision dec;
    if (t < spec.burn_in || t == 0) return dec;
    const std::size_t A = bank.arms();
    if (A < 2) fail(ErrorCode::invalid_argument, "stopping needs at least two arms");
    const double gamma = gamma_schedule(spec, t);

    std::vector<double> half(A);
    for (Arm d = 0; d < A; ++d) half[d] = arm_cutoff(bank, d, gamma);
    dec.cutoffs.assign(A, std::vector<double>(A, 0.0));
    std::vector<double> inner(A);
    for (Arm d = 0; d < A; ++d) {
        double worst = num::kInf;
        for (Arm m = 0; m < A; ++m) {
            if (m == d) continue;
            dec.cutoffs[d][m] = half[d] + half[m];
            worst = std::min(worst, bank.aggregate(d) - bank.aggregate(m) - dec.cutoffs[d][m]);
        }
        inner[d] = worst;
    }
    const Arm best = num::argmax_last(inner);
    dec.margin = inner[best];
    if (dec.margin > 0.0) {
        dec.stop = true;
        dec.chosen_arm = best;
    }
    return dec;
}

/// Left side of the calibration inequality:
/// 3 (M+1) / (A-1) * (B^{-(A-1)} - T^{-(A-1)}).
inline double calibration_lhs(double A, double B, double T, std::size_t arms) {
    const double k = A - 1.0;
    return 3.0 * static_cast<double>(arms) / k * (std::pow(B, -k) - std::pow(T, -k));
}

/// Smallest A in (1 + 1e-9, 64] whose calibration left side is <= beta, to 1e-9.
/// `arms` is M + 1.
inline double calibrate(double beta, std::uint64_t burn_in, std::uint64_t horizon, std::size_t arms) {
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorCode::invalid_argument, "beta must lie in (0,1)");
    if (burn_in < 2) fail(ErrorCode::invalid_argument, "calibration needs B >= 2");
    if (!(burn_in < horizon)) fail(ErrorCode::invalid_argument, "calibration needs B < T");
    const double B = static_cast<double>(burn_in);
    const double T = static_cast<double>(horizon);
    constexpr double lo_bound = 1.0 + 1e-9;
    constexpr double hi_bound = 64.0;
    auto lhs = [&](double A) { return calibration_lhs(A, B, T, arms); };

    // The bisection relies on the left side decreasing in A; check it on a grid.
    double prev = lhs(lo_bound);
    for (int i = 1; i <= 4096; ++i) {
        const double A = lo_bound + (hi_bound - lo_bound) * i / 4096.0;
        const double cur = lhs(A);
        if (cur > prev * (1.0 + 1e-12) + 1e-300)
            fail(ErrorCode::no_solution, "calibration left side is not monotone in A");
        prev = cur;
    }
    if (lhs(hi_bound) > beta) fail(ErrorCode::no_solution, "no A <= 64 satisfies the calibration inequality");
    if (lhs(lo_bound) <= beta) return lo_bound;
    double lo = lo_bound;  // lhs(lo) > beta
    double hi = hi_bound;  // lhs(hi) <= beta
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (lhs(mid) <= beta ? hi : lo) = mid;
    }
    return hi;
}

/// True iff the recommended arm is not among the arms with the largest truth.
inline bool is_mistake(const StopDecision& decision, std::span<const double> theta) {
    if (!decision.stop || !decision.chosen_arm) fail(ErrorCode::invalid_argument, "decision did not stop");
    const Arm chosen = *decision.chosen_arm;
    if (chosen >= theta.size()) fail(ErrorCode::arm_out_of_range, "chosen arm out of range");
    double best = -num::kInf;
    for (double th : theta) best = std::max(best, th);
    return theta[chosen] < best;
}

}  // namespace mpb
