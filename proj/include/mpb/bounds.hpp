#pragma once

// Non-random bound functions for the concentration of the posterior means and
// weights, and the probability-of-mistake bound for the stopping rule.
//
// Argument naming for omega: (a, b, c, e) = (radius gamma, signed prior bias
// zeta0 - theta, nu0 / t, expected frequency of play e_t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpb/belief.hpp"
#include "mpb/error.hpp"
#include "mpb/numeric.hpp"
#include "mpb/stopping.hpp"

namespace mpb {

inline double omega(double a, double b, double c, double e) {
    const double lo = e - a + c;
    const double hi = e + a + c;
    if (!(lo > 0.0) || !(hi > 0.0)) fail(ErrorCode::invalid_argument, "omega: denominator must be positive");
    return b >= 0.0 ? (a + b * c) / lo : a / lo + b * c / hi;
}

/// One source's bias and conviction for a single arm.
struct SourceBias {
    double bias = 0.0;  ///< zeta0 - theta, signed
    double nu0 = 1.0;
};

struct BoundInputs {
    double t = 1.0;
    double gamma = 0.0;             ///< concentration radius
    std::vector<SourceBias> sources;
    double e_t = 0.5;               ///< expected frequency of play (pi in the weight envelopes)
    double epsilon = 0.0;
    double eta = 0.0;               ///< frequency radius
    double delta_m = 0.0;           ///< radius on the centered sample mean
    std::optional<double> upsilon;  ///< sub-gaussian variance proxy
    std::optional<double> C_eps;
    std::optional<double> B_eps;
};

/// How the lower log-likelihood envelope resolves its two variance branches.
enum class LowerEnvelope {
    exact_min,      ///< min over the two endpoint variances; always a valid bound
    displayed_sum,  ///< indicator-weighted sum of both branches
};

struct WeightEnvelope {
    double ell_lo = 0.0;
    double ell_hi = 0.0;
    double alpha_lo = 0.0;
    double alpha_hi = 0.0;
};

namespace detail {

inline double log_phi_centered(double y, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * y * y / var;
}

}  // namespace detail

/// Log-likelihood and weight envelopes for every source, valid whenever
/// |f_t - pi| <= eta and |m_t - theta| <= delta.
inline std::vector<WeightEnvelope> weight_envelopes(double t, double eta, double delta, double pi,
                                                    std::span<const SourceBias> sources,
                                                    LowerEnvelope form = LowerEnvelope::exact_min) {
    if (!(t > 0.0)) fail(ErrorCode::invalid_argument, "envelopes need t > 0");
    if (!(eta >= 0.0) || !(delta >= 0.0)) fail(ErrorCode::invalid_argument, "envelopes need eta, delta >= 0");
    if (!(pi - eta > 0.0)) fail(ErrorCode::invalid_argument, "envelopes need eta < pi");
    if (sources.empty()) fail(ErrorCode::invalid_argument, "envelopes need at least one source");

    std::vector<WeightEnvelope> out(sources.size());
    std::vector<double> hi(sources.size()), lo(sources.size());
    for (std::size_t o = 0; o < sources.size(); ++o) {
        const double nu0 = sources[o].nu0;
        if (!(nu0 > 0.0)) fail(ErrorCode::invalid_argument, "envelopes need nu0 > 0");
        const double var_lo = 1.0 / nu0 + 1.0 / (t * (pi + eta));
        const double var_hi = 1.0 / nu0 + 1.0 / (t * (pi - eta));
        if (!(var_lo > 0.0)) fail(ErrorCode::invalid_argument, "lower variance envelope is not positive");
        const double b = std::abs(sources[o].bias);

        const double near = std::max(b - delta, 0.0);
        hi[o] = -0.5 * std::log(2.0 * std::numbers::pi * var_lo) - 0.5 * near * near / var_hi;

        const double far = delta + b;
        const double at_hi = detail::log_phi_centered(far, var_hi);
        const double at_lo = detail::log_phi_centered(far, var_lo);
        if (form == LowerEnvelope::exact_min) {
            lo[o] = std::min(at_hi, at_lo);
        } else {
            lo[o] = (far * far < var_hi ? at_hi : 0.0) + (far * far > var_lo ? at_lo : 0.0);
        }
        out[o].ell_hi = hi[o];
        out[o].ell_lo = lo[o];
    }
    const double lse_lo = num::log_sum_exp(lo);
    const double lse_hi = num::log_sum_exp(hi);
    for (std::size_t o = 0; o < sources.size(); ++o) {
        out[o].alpha_hi = std::exp(hi[o] - lse_lo);
        out[o].alpha_lo = std::exp(lo[o] - lse_hi);
    }
    return out;
}

inline WeightEnvelope weight_envelopes(const BoundInputs& in, std::size_t o,
                                       LowerEnvelope form = LowerEnvelope::exact_min) {
    if (o >= in.sources.size()) fail(ErrorCode::invalid_argument, "source index out of range");
    return weight_envelopes(in.t, in.eta, in.delta_m, in.e_t, in.sources, form)[o];
}

/// Gamma: sum_o alpha_hi^o Omega^+_o + sum_o alpha_lo^o Omega^-_o with the
/// envelopes at eta = gamma, delta = gamma / (e_t - gamma). Bounds
/// zeta^alpha - theta from above for signed biases; pass |bias| to bound the
/// absolute deviation.
inline double gamma_bound(double t, double gamma, double e_t, std::span<const SourceBias> sources,
                          LowerEnvelope form = LowerEnvelope::exact_min) {
    if (!(gamma >= 0.0)) fail(ErrorCode::invalid_argument, "gamma must be >= 0");
    if (!(e_t - gamma > 0.0)) fail(ErrorCode::invalid_argument, "gamma bound needs gamma < e_t");
    const auto env = weight_envelopes(t, gamma, gamma / (e_t - gamma), e_t, sources, form);
    double acc = 0.0;
    for (std::size_t o = 0; o < sources.size(); ++o) {
        const double w = omega(gamma, sources[o].bias, sources[o].nu0 / t, e_t);
        acc += w >= 0.0 ? env[o].alpha_hi * w : env[o].alpha_lo * w;
    }
    return acc;
}

inline double gamma_bound(const BoundInputs& in, LowerEnvelope form = LowerEnvelope::exact_min) {
    return gamma_bound(in.t, in.gamma, in.e_t, in.sources, form);
}

/// Sources with every bias replaced by its absolute value or its negation.
inline std::vector<SourceBias> abs_bias(std::span<const SourceBias> s) {
    std::vector<SourceBias> out(s.begin(), s.end());
    for (auto& x : out) x.bias = std::abs(x.bias);
    return out;
}
inline std::vector<SourceBias> negated_bias(std::span<const SourceBias> s) {
    std::vector<SourceBias> out(s.begin(), s.end());
    for (auto& x : out) x.bias = -x.bias;
    return out;
}

/// Per-arm source biases zeta0^o(d) - theta(d).
inline std::vector<SourceBias> arm_biases(std::span<const SourcePrior> sources, std::span<const double> theta, Arm d) {
    std::vector<SourceBias> out;
    for (const auto& s : sources) out.push_back({s.zeta0.at(d) - theta[d], s.nu0.at(d)});
    return out;
}

struct EtaStarOptions {
    double x_step = 1e-4;    ///< resolution of the inner grid over x in [epsilon, 1]
    int eta_grid = 32;       ///< coarse points over [0, 0.99 epsilon] before bisection
    double eta_tol = 1e-10;
};

namespace detail {

/// sum_o max_x F^o(x) for one eta. `sign` is -1 for the best arm, +1 otherwise.
inline double eta_star_objective(double t, double gamma, double eta, double epsilon, double sign,
                                 std::span<const SourceBias> sources, const EtaStarOptions& opt) {
    const std::size_t L = sources.size();
    std::vector<double> best(L, -num::kInf);
    const auto nx = static_cast<std::size_t>(std::floor((1.0 - epsilon) / opt.x_step));
    for (std::size_t k = 0; k <= nx + 1; ++k) {
        const double x = k <= nx ? epsilon + static_cast<double>(k) * opt.x_step : 1.0;
        if (x > 1.0) break;
        const auto env = weight_envelopes(t, eta, gamma / (x - eta), x, sources);
        for (std::size_t o = 0; o < L; ++o) {
            const double s = sign * sources[o].bias;
            const double c = sources[o].nu0 / t;
            // alpha never exceeds one, so the upper envelope is clamped there.
            const double term = s <= 0.0 ? s * c / (x + eta + c) * env[o].alpha_lo
                                         : s * c / (x - eta + c) * std::min(env[o].alpha_hi, 1.0);
            best[o] = std::max(best[o], term);
        }
    }
    double acc = 0.0;
    for (double b : best) acc += b;
    return acc;
}

}  // namespace detail

/// Largest eta in [0, 0.99 epsilon] with sum_o F^o <= Delta / 2; zero if none,
/// +inf if every source's signed bias is non-positive (then the constraint
/// holds for every eta). `is_best` marks the arm with the largest truth.
inline double eta_star(double t, double gamma, double epsilon, double Delta, std::span<const SourceBias> sources,
                       bool is_best, const EtaStarOptions& opt = {}) {
    if (!(Delta > 0.0)) fail(ErrorCode::invalid_argument, "eta_star needs Delta > 0");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) fail(ErrorCode::invalid_argument, "eta_star needs epsilon in (0,1]");
    if (!(t > 0.0)) fail(ErrorCode::invalid_argument, "eta_star needs t > 0");
    if (!(opt.x_step > 0.0) || opt.eta_grid < 1) fail(ErrorCode::invalid_argument, "bad eta_star options");
    const double sign = is_best ? -1.0 : 1.0;
    if (std::all_of(sources.begin(), sources.end(), [&](const SourceBias& s) { return sign * s.bias <= 0.0; }))
        return num::kInf;

    auto feasible = [&](double eta) {
        return detail::eta_star_objective(t, gamma, eta, epsilon, sign, sources, opt) <= 0.5 * Delta;
    };
    const double cap = 0.99 * epsilon;
    if (!feasible(0.0)) return 0.0;
    if (feasible(cap)) return cap;
    // The objective is non-decreasing in eta: bracket on a coarse grid, then bisect.
    double lo = 0.0;
    double hi = cap;
    for (int k = 1; k < opt.eta_grid; ++k) {
        const double e = cap * k / opt.eta_grid;
        if (feasible(e)) {
            lo = e;
        } else {
            hi = e;
            break;
        }
    }
    while (hi - lo > opt.eta_tol) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
}

struct MistakeBoundSpec {
    StoppingSpec stopping;
    double epsilon = 0.05;
    std::optional<double> upsilon;
    std::vector<double> sigma;  ///< per-arm outcome standard deviation
    std::optional<double> C_eps;
    std::optional<double> B_eps;
    EtaStarOptions eta_options;
};

struct MistakeBoundTerm {
    Arm d = 0;
    std::uint64_t t = 0;
    double eta_star = 0.0;
    double concentration = 0.0;  ///< 2 exp(-0.5 t gamma_t^2 / (upsilon sigma^2))
    double frequency = 0.0;      ///< exp(-(t / log t) eta*^2 C)
};

struct MistakeBoundResult {
    double value = 1.0;  ///< clamped at one
    double raw = 0.0;    ///< unclamped partial sum
    bool truncated = false;  ///< summation stopped once the sum passed one
    std::vector<MistakeBoundTerm> terms;
    std::vector<std::string> warnings;
};

/// Upper bound on the probability of recommending a wrong arm:
/// sum_d sum_{t=B}^{T} [2 exp(-0.5 t gamma_t^2 / (upsilon sigma_d^2)) + exp(-(t / log t) eta*_d^2 C)],
/// clamped at one.
inline MistakeBoundResult mistake_bound(const MistakeBoundSpec& spec, std::span<const SourcePrior> sources,
                                        std::span<const double> theta) {
    if (!spec.upsilon) fail(ErrorCode::missing_constant, "mistake bound needs upsilon");
    if (!spec.C_eps) fail(ErrorCode::missing_constant, "mistake bound needs C(epsilon)");
    if (spec.sigma.size() != theta.size()) fail(ErrorCode::missing_constant, "mistake bound needs sigma per arm");
    BeliefBank::validate_sources(sources);
    const std::size_t A = theta.size();
    if (A < 2 || sources.front().arms() != A) fail(ErrorCode::invalid_argument, "arm count mismatch");
    const Arm best = num::argmax_last(theta);
    double runner = -num::kInf;
    for (Arm d = 0; d < A; ++d)
        if (d != best) runner = std::max(runner, theta[d]);
    const double Delta = theta[best] - runner;
    if (!(Delta > 0.0)) fail(ErrorCode::invalid_argument, "mistake bound needs a unique best arm");

    MistakeBoundResult res;
    const auto& st = spec.stopping;
    const double logB = std::log(static_cast<double>(st.burn_in));
    if (spec.B_eps && logB < std::max(2.0, 4.0 * spec.epsilon * *spec.B_eps))
        res.warnings.push_back("log B < max{2, 4 epsilon B(epsilon)}: the bound's burn-in condition fails");
    for (double s : spec.sigma)
        if (logB < 2.0 * *spec.upsilon * s * s) {
            res.warnings.push_back("log B < 2 upsilon sigma^2 for some arm");
            break;
        }

    const auto t0 = std::max<std::uint64_t>(st.burn_in, 2);
    for (Arm d = 0; d < A && !res.truncated; ++d) {
        const auto biases = arm_biases(sources, theta, d);
        const double var = *spec.upsilon * spec.sigma[d] * spec.sigma[d];
        for (std::uint64_t t = t0; t <= st.horizon; ++t) {
            const double tt = static_cast<double>(t);
            const double g = gamma_schedule(st, t);
            MistakeBoundTerm term;
            term.d = d;
            term.t = t;
            term.concentration = var > 0.0 ? 2.0 * std::exp(-0.5 * tt * g * g / var) : 0.0;
            term.eta_star = eta_star(tt, g, spec.epsilon, Delta, biases, d == best, spec.eta_options);
            term.frequency = std::isinf(term.eta_star)
                                 ? 0.0
                                 : std::exp(-(tt / std::log(tt)) * term.eta_star * term.eta_star * *spec.C_eps);
            res.raw += term.concentration + term.frequency;
            res.terms.push_back(term);
            if (res.raw > 1.0) {
                res.truncated = true;
                break;
            }
        }
    }
    res.value = std::min(res.raw, 1.0);
    return res;
}

}  // namespace mpb
