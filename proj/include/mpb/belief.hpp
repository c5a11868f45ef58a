#pragma once

// Gaussian multi-prior learning model.
//
// Each source o holds a Gaussian prior N(zeta0(d), 1/nu0(d)) per arm d over the
// mean of a unit-variance Gaussian outcome model. Posteriors are conjugate;
// sources are aggregated with weights equal to each model's posterior
// probability given the arm's data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpb/error.hpp"
#include "mpb/numeric.hpp"
#include "mpb/rng.hpp"

namespace mpb {

using Arm = std::size_t;

struct SourcePrior {
    std::size_t id = 0;
    std::vector<double> zeta0;  ///< prior mean per arm (outcome units)
    std::vector<double> nu0;    ///< prior conviction per arm (effective sample count, > 0)

    std::size_t arms() const { return zeta0.size(); }

    bool operator==(const SourcePrior&) const = default;
};

struct ArmStats {
    std::uint64_t n = 0;  ///< pull count N_t(d)
    double sum_y = 0.0;   ///< running outcome sum

    /// Sample mean m_t(d); only meaningful when n > 0.
    double mean() const { return n > 0 ? sum_y / static_cast<double>(n) : 0.0; }

    bool operator==(const ArmStats&) const = default;
};

struct Posterior {
    double mean = 0.0;
    double precision = 0.0;
};

/// Closed-form posterior of one source for one arm:
/// zeta_t = N/(N+nu0) * m_t + nu0/(N+nu0) * zeta0, nu_t = N + nu0.
inline Posterior batch_posterior(double zeta0, double nu0, const ArmStats& stats) {
    if (stats.n == 0) return {zeta0, nu0};
    const double n = static_cast<double>(stats.n);
    const double denom = n + nu0;
    return {(n / denom) * stats.mean() + (nu0 / denom) * zeta0, denom};
}

inline Posterior batch_posterior(const SourcePrior& prior, Arm arm, const ArmStats& stats) {
    return batch_posterior(prior.zeta0.at(arm), prior.nu0.at(arm), stats);
}

struct Weights {
    std::vector<double> alpha;
    bool prior_stage = false;  ///< arm never pulled: uniform by convention
};

/// Aggregation weights for one arm from its sufficient statistics. Computed in
/// log space: log phi(m_t - zeta0; 0, (N + nu0) / (N nu0)) normalized with
/// log-sum-exp, so far-away sources decay to exactly zero instead of 0/0.
inline Weights compute_weights(std::span<const SourcePrior> sources, Arm arm, const ArmStats& stats) {
    const std::size_t L = sources.size();
    Weights w;
    if (stats.n == 0) {
        w.alpha.assign(L, 1.0 / static_cast<double>(L));
        w.prior_stage = true;
        return w;
    }
    const double n = static_cast<double>(stats.n);
    const double m = stats.mean();
    std::vector<double> logw(L);
    for (std::size_t o = 0; o < L; ++o) {
        const double nu0 = sources[o].nu0[arm];
        const double var = 1.0 / n + 1.0 / nu0;
        logw[o] = num::log_normal_pdf(m, sources[o].zeta0[arm], var);
    }
    w.alpha = num::normalize_log_weights(logw);
    return w;
}

/// Per-source log predictive densities l^o_t(d) (before normalization). Empty
/// when the arm has not been pulled.
inline std::vector<double> log_evidence(std::span<const SourcePrior> sources, Arm arm, const ArmStats& stats) {
    std::vector<double> out;
    if (stats.n == 0) return out;
    const double n = static_cast<double>(stats.n);
    const double m = stats.mean();
    for (const auto& s : sources) out.push_back(num::log_normal_pdf(m, s.zeta0[arm], 1.0 / n + 1.0 / s.nu0[arm]));
    return out;
}

/// Sum_o alpha^o * zeta^o.
inline double aggregate_mean(std::span<const double> alpha, std::span<const double> zeta) {
    double acc = 0.0;
    for (std::size_t o = 0; o < alpha.size(); ++o) acc += alpha[o] * zeta[o];
    return acc;
}

class BeliefBank {
public:
    BeliefBank() = default;

    explicit BeliefBank(std::vector<SourcePrior> sources) : sources_(std::move(sources)) {
        validate_sources(sources_);
        const std::size_t A = sources_.front().arms();
        const std::size_t L = sources_.size();
        stats_.assign(A, ArmStats{});
        zeta_.assign(L, std::vector<double>(A));
        nu_.assign(L, std::vector<double>(A));
        alpha_.assign(L, std::vector<double>(A, 1.0 / static_cast<double>(L)));
        aggregate_.assign(A, 0.0);
        for (std::size_t o = 0; o < L; ++o) {
            zeta_[o] = sources_[o].zeta0;
            nu_[o] = sources_[o].nu0;
        }
        for (Arm d = 0; d < A; ++d) refresh_arm(d);
    }

    static void validate_sources(std::span<const SourcePrior> sources) {
        if (sources.empty()) fail(ErrorCode::invalid_argument, "at least one source is required");
        const std::size_t A = sources.front().arms();
        if (A < 1) fail(ErrorCode::invalid_argument, "sources must cover at least one arm");
        for (const auto& s : sources) {
            if (s.zeta0.size() != A || s.nu0.size() != A)
                fail(ErrorCode::invalid_argument, "all sources must share the same arm count");
            for (Arm d = 0; d < A; ++d) {
                if (!std::isfinite(s.zeta0[d])) fail(ErrorCode::invalid_argument, "zeta0 must be finite");
                if (!(s.nu0[d] > 0.0) || !std::isfinite(s.nu0[d]))
                    fail(ErrorCode::invalid_argument, "nu0 must be positive and finite");
            }
        }
    }

    std::size_t arms() const { return stats_.size(); }
    std::size_t num_sources() const { return sources_.size(); }
    const std::vector<SourcePrior>& sources() const { return sources_; }
    const ArmStats& stats(Arm d) const { return stats_.at(d); }
    const std::vector<ArmStats>& all_stats() const { return stats_; }

    double zeta(std::size_t o, Arm d) const { return zeta_[o][d]; }
    double nu(std::size_t o, Arm d) const { return nu_[o][d]; }
    double alpha(std::size_t o, Arm d) const { return alpha_[o][d]; }
    double aggregate(Arm d) const { return aggregate_[d]; }
    const std::vector<double>& aggregates() const { return aggregate_; }
    const std::vector<std::vector<double>>& zeta_matrix() const { return zeta_; }
    const std::vector<std::vector<double>>& nu_matrix() const { return nu_; }
    const std::vector<std::vector<double>>& alpha_matrix() const { return alpha_; }

    std::vector<double> alpha_column(Arm d) const {
        std::vector<double> out(num_sources());
        for (std::size_t o = 0; o < out.size(); ++o) out[o] = alpha_[o][d];
        return out;
    }
    std::vector<double> zeta_column(Arm d) const {
        std::vector<double> out(num_sources());
        for (std::size_t o = 0; o < out.size(); ++o) out[o] = zeta_[o][d];
        return out;
    }

    bool prior_stage(Arm d) const { return stats_.at(d).n == 0; }

    /// Stage index t (number of completed stages). Advanced by the caller.
    std::uint64_t stage() const { return stage_; }
    void advance_stage() { ++stage_; }

    /// Frequency of play f_t(d) = N_t(d) / t; zero at t = 0.
    double frequency(Arm d) const {
        return stage_ == 0 ? 0.0 : static_cast<double>(stats_.at(d).n) / static_cast<double>(stage_);
    }

    bool stopped() const { return stopped_; }
    void mark_stopped() { stopped_ = true; }

    /// In-place posterior recursion for one observation on `arm`. Other arms
    /// are left untouched.
    void observe(Arm arm, double outcome) {
        if (arm >= arms()) fail(ErrorCode::arm_out_of_range, "arm index out of range");
        if (!std::isfinite(outcome)) fail(ErrorCode::non_finite_outcome, "outcome must be finite");
        if (stopped_) fail(ErrorCode::experiment_stopped, "experiment already stopped");
        auto& st = stats_[arm];
        st.n += 1;
        st.sum_y += outcome;
        for (std::size_t o = 0; o < num_sources(); ++o) {
            // nu is recomputed from the count so that nu_t = N_t + nu0 holds exactly.
            const double prev_nu = nu_[o][arm];
            const double next_nu = static_cast<double>(st.n) + sources_[o].nu0[arm];
            zeta_[o][arm] = (1.0 / next_nu) * outcome + (prev_nu / next_nu) * zeta_[o][arm];
            nu_[o][arm] = next_nu;
        }
        refresh_arm(arm);
    }

    /// Restores a bank from stored state (snapshot loading). Performs shape
    /// checks only.
    static BeliefBank restore(std::vector<SourcePrior> sources, std::vector<ArmStats> stats,
                              std::vector<std::vector<double>> zeta, std::vector<std::vector<double>> nu,
                              std::vector<std::vector<double>> alpha, std::vector<double> aggregate,
                              std::uint64_t stage, bool stopped) {
        BeliefBank b(std::move(sources));
        const std::size_t L = b.num_sources();
        const std::size_t A = b.arms();
        auto shape_ok = [&](const std::vector<std::vector<double>>& m) {
            return m.size() == L && std::all_of(m.begin(), m.end(), [&](const auto& r) { return r.size() == A; });
        };
        if (stats.size() != A || !shape_ok(zeta) || !shape_ok(nu) || !shape_ok(alpha) || aggregate.size() != A)
            fail(ErrorCode::invalid_argument, "snapshot shape does not match sources");
        b.stats_ = std::move(stats);
        b.zeta_ = std::move(zeta);
        b.nu_ = std::move(nu);
        b.alpha_ = std::move(alpha);
        b.aggregate_ = std::move(aggregate);
        b.stage_ = stage;
        b.stopped_ = stopped;
        return b;
    }

    bool operator==(const BeliefBank&) const = default;

private:
    void refresh_arm(Arm d) {
        const Weights w = compute_weights(sources_, d, stats_[d]);
        double agg = 0.0;
        for (std::size_t o = 0; o < num_sources(); ++o) {
            alpha_[o][d] = w.alpha[o];
            agg += w.alpha[o] * zeta_[o][d];
        }
        aggregate_[d] = agg;
    }

    std::vector<SourcePrior> sources_;
    std::vector<ArmStats> stats_;
    std::vector<std::vector<double>> zeta_;   // [source][arm]
    std::vector<std::vector<double>> nu_;     // [source][arm]
    std::vector<std::vector<double>> alpha_;  // [source][arm]
    std::vector<double> aggregate_;           // [arm]
    std::uint64_t stage_ = 0;
    bool stopped_ = false;
};

/// Functional form of BeliefBank::observe.
inline BeliefBank update_posterior(BeliefBank bank, Arm arm, double outcome) {
    bank.observe(arm, outcome);
    return bank;
}

inline Weights compute_weights(const BeliefBank& bank, Arm arm) {
    if (arm >= bank.arms()) fail(ErrorCode::arm_out_of_range, "arm index out of range");
    return compute_weights(bank.sources(), arm, bank.stats(arm));
}

inline double aggregate_mean(const BeliefBank& bank, Arm arm) {
    const auto a = bank.alpha_column(arm);
    const auto z = bank.zeta_column(arm);
    return aggregate_mean(a, z);
}

/// One draw from the aggregated posterior of `arm`: pick source o with
/// probability alpha^o, then draw from N(zeta^o_t, 1/nu^o_t).
inline double sample_aggregate_posterior(const BeliefBank& bank, Arm arm, Rng& rng) {
    const std::size_t L = bank.num_sources();
    std::size_t pick = L - 1;
    if (L > 1) {
        const double u = rng.uniform();
        double cum = 0.0;
        for (std::size_t o = 0; o < L; ++o) {
            cum += bank.alpha(o, arm);
            if (u < cum) {
                pick = o;
                break;
            }
        }
    }
    return rng.normal(bank.zeta(pick, arm), 1.0 / std::sqrt(bank.nu(pick, arm)));
}

// ---------------------------------------------------------------------------
// External validity diagnostics

struct FullSupport {};
struct PointMass {};
/// Prior support restricted to [lo(d), hi(d)] per arm.
struct IntervalSupport {
    std::vector<double> lo;
    std::vector<double> hi;
};
using SupportRestriction = std::variant<FullSupport, PointMass, IntervalSupport>;

struct ExternalValidityReport {
    std::vector<std::vector<double>> kl;  ///< [source][arm] KL(N(theta,1) || N(zeta0,1)) in nats
    std::vector<std::vector<double>> u;   ///< [source][arm] external-invalidity index
    std::vector<std::vector<std::size_t>> ranking;  ///< per arm: source indices, ascending in u
};

inline ExternalValidityReport external_validity(std::span<const SourcePrior> sources,
                                                std::span<const SupportRestriction> support,
                                                std::span<const double> theta) {
    if (support.size() != sources.size()) fail(ErrorCode::invalid_argument, "one support restriction per source");
    BeliefBank::validate_sources(sources);
    const std::size_t A = sources.front().arms();
    if (theta.size() != A) fail(ErrorCode::invalid_argument, "truth must have one entry per arm");
    for (double th : theta)
        if (!std::isfinite(th)) fail(ErrorCode::invalid_argument, "truth must be finite");

    ExternalValidityReport rep;
    const std::size_t L = sources.size();
    rep.kl.assign(L, std::vector<double>(A));
    rep.u.assign(L, std::vector<double>(A));
    for (std::size_t o = 0; o < L; ++o) {
        for (std::size_t d = 0; d < A; ++d) {
            const double gap = theta[d] - sources[o].zeta0[d];
            rep.kl[o][d] = 0.5 * gap * gap;
            rep.u[o][d] = std::visit(
                [&](const auto& s) -> double {
                    using T = std::decay_t<decltype(s)>;
                    if constexpr (std::is_same_v<T, FullSupport>) {
                        return 0.0;
                    } else if constexpr (std::is_same_v<T, PointMass>) {
                        return 0.5 * gap * gap;
                    } else {
                        if (s.lo.size() != A || s.hi.size() != A)
                            fail(ErrorCode::invalid_argument, "interval support needs one bound pair per arm");
                        if (!(s.lo[d] <= s.hi[d])) fail(ErrorCode::invalid_argument, "empty support interval");
                        const double dist = std::max({s.lo[d] - theta[d], theta[d] - s.hi[d], 0.0});
                        return 0.5 * dist * dist;
                    }
                },
                support[o]);
        }
    }
    rep.ranking.assign(A, {});
    for (std::size_t d = 0; d < A; ++d) {
        auto& r = rep.ranking[d];
        r.resize(L);
        std::iota(r.begin(), r.end(), std::size_t{0});
        std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return rep.u[a][d] < rep.u[b][d]; });
    }
    return rep;
}

}  // namespace mpb
