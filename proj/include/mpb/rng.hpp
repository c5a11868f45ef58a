#pragma once

#include <cstdint>
#include <random>

namespace mpb {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stream splitting rule: stream `index` of master seed `master` is seeded with
/// mix64(mix64(master) + (index + 1) * golden_gamma). Distinct indices give
/// distinct seeds (the map index -> seed is a bijection for a fixed master).
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(mix64(master) + (index + 1) * kGoldenGamma);
}

/// Per-purpose substreams of one run.
enum class Stream : std::uint64_t { policy = 0, environment = 1 };

constexpr std::uint64_t substream_seed(std::uint64_t run_seed, Stream s) noexcept {
    return stream_seed(run_seed, static_cast<std::uint64_t>(s));
}

/// Random stream used by every stochastic operation. Draws are reproducible
/// given the seed and the call sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal(double mean, double sd) {
        return mean + sd * normal_(engine_);
    }

    double standard_normal() { return normal_(engine_); }

    bool operator==(const Rng& other) const {
        return engine_ == other.engine_ && normal_ == other.normal_;
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mpb
