#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace mpb::num {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// log of the Gaussian density N(y; mean, var).
inline double log_normal_pdf(double y, double mean, double var) {
    const double z = y - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * z * z / var;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double log_sum_exp(std::span<const double> xs) {
    double hi = -kInf;
    for (double x : xs) hi = std::max(hi, x);
    if (!std::isfinite(hi)) return hi;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

/// Softmax of log-weights; the result sums to one.
inline std::vector<double> normalize_log_weights(std::span<const double> logw) {
    const double lse = log_sum_exp(logw);
    std::vector<double> out(logw.size());
    for (std::size_t i = 0; i < logw.size(); ++i) out[i] = std::exp(logw[i] - lse);
    return out;
}

/// Index of the largest entry; ties go to the highest index.
inline std::size_t argmax_last(std::span<const double> xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] >= xs[best]) best = i;
    return best;
}

/// Type-7 (linear interpolation) sample quantile. Sorts a copy.
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return kNaN;
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace mpb::num
