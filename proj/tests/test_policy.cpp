#include <gtest/gtest.h>

#include <cmath>

#include "mpb/policy.hpp"

using namespace mpb;

namespace {

void expect_valid(const ActionDistribution& a, double eps) {
    double sum = 0.0;
    for (double p : a.probs) {
        EXPECT_GE(p, eps - 1e-12);
        sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

}  // namespace

TEST(EpsilonGreedy, Examples) {
    auto a = epsilon_greedy_probs(std::vector<double>{1.0, 1.3}, 0.1);
    EXPECT_NEAR(a.probs[0], 0.1, 1e-15);
    EXPECT_NEAR(a.probs[1], 0.9, 1e-15);
    a = epsilon_greedy_probs(std::vector<double>{2.0, 2.0}, 0.1);
    EXPECT_NEAR(a.probs[1], 0.9, 1e-15);
    a = epsilon_greedy_probs(std::vector<double>{5.0, -1.0, 3.0}, 1.0 / 3.0);
    for (double p : a.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(EpsilonGreedy, RejectsOutOfRangeFloor) {
    EXPECT_THROW(epsilon_greedy_probs(std::vector<double>{1, 2}, 0.6), Error);
    EXPECT_THROW(epsilon_greedy_probs(std::vector<double>{1, 2}, 0.0), Error);
}

TEST(EpsilonGreedy, ShiftInvariantAndPure) {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> z(2 + rng.next_u64() % 4);
        for (auto& v : z) v = rng.normal(0, 1);
        const double eps = rng.uniform() / static_cast<double>(z.size());
        if (eps <= 0.0) continue;
        auto shifted = z;
        const double c = rng.normal(0, 10);
        for (auto& v : shifted) v += c;
        const auto a = epsilon_greedy_probs(z, eps);
        EXPECT_EQ(a, epsilon_greedy_probs(z, eps));
        const auto b = epsilon_greedy_probs(shifted, eps);
        for (std::size_t d = 0; d < z.size(); ++d) EXPECT_NEAR(a.probs[d], b.probs[d], 1e-15);
    }
}

TEST(Softmax, Examples) {
    auto a = softmax_probs(std::vector<double>{0.3, 0.3, 0.3}, 2.5, 0.1);
    for (double p : a.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
    a = softmax_probs(std::vector<double>{0.0, 1.0}, 1e-12, 0.0);
    EXPECT_NEAR(a.probs[0], 0.5, 1e-12);
    a = softmax_probs(std::vector<double>{0.0, 1.0}, 1.0, 0.1);
    const double logistic = 1.0 / (1.0 + std::exp(-1.0));
    EXPECT_NEAR(a.probs[0], 0.1 + 0.8 * (1.0 - logistic), 1e-15);
    EXPECT_NEAR(a.probs[1], 0.1 + 0.8 * logistic, 1e-15);
    EXPECT_NEAR(a.probs[0], 0.31515, 1e-5);
    EXPECT_NEAR(a.probs[1], 0.68485, 1e-5);
}

TEST(Softmax, RejectsNonFinite) {
    EXPECT_THROW(softmax_probs(std::vector<double>{0.0, INFINITY}, 1.0, 0.1), Error);
    EXPECT_THROW(softmax_probs(std::vector<double>{0.0, NAN}, 1.0, 0.1), Error);
}

TEST(Floor, HoldsOnRandomInputs) {
    Rng rng(21);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t A = 2 + rng.next_u64() % 4;
        std::vector<double> z(A);
        for (auto& v : z) v = rng.normal(0, 50);
        const double eps = rng.uniform() / static_cast<double>(A);
        if (eps <= 0.0) continue;
        expect_valid(epsilon_greedy_probs(z, eps), eps);
        expect_valid(softmax_probs(z, 0.1 + 10 * rng.uniform(), eps), eps);
    }
}

TEST(Thompson, SymmetricAndSaturated) {
    BeliefBank b({SourcePrior{0, {1.0, 1.0}, {4.0, 4.0}}});
    Rng rng(1);
    auto a = thompson_probs(b, 10000, 0.0, rng);
    EXPECT_NEAR(a.probs[0], 0.5, 0.02);
    a = thompson_probs(b, 100, 0.5, rng);
    EXPECT_EQ(a.probs, (std::vector<double>{0.5, 0.5}));
}

TEST(Thompson, GaussianComparisonOracle) {
    const double z0 = 1.0, z1 = 1.2, n0 = 20.0, n1 = 35.0;
    BeliefBank b({SourcePrior{0, {z0, z1}, {n0, n1}}});
    Rng rng(2024);
    const auto a = thompson_probs(b, 100000, 0.0, rng);
    const double oracle = num::normal_cdf((z1 - z0) / std::sqrt(1.0 / n0 + 1.0 / n1));
    EXPECT_NEAR(a.probs[1], oracle, 0.01);
    expect_valid(thompson_probs(b, 500, 0.05, rng), 0.05);
}

TEST(SampleAction, Examples) {
    Rng rng(0);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_action({{1.0, 0.0}}, rng), 0u);
    int ones = 0;
    for (int i = 0; i < 100000; ++i) ones += sample_action({{0.5, 0.5}}, rng) == 1;
    EXPECT_NEAR(ones / 100000.0, 0.5, 0.01);
    Rng r1(77), r2(77);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_action({{0.1, 0.9}}, r1), sample_action({{0.1, 0.9}}, r2));
}

TEST(PolicyFamily, NamesRoundTrip) {
    for (auto f : {PolicyFamily::epsilon_greedy, PolicyFamily::perturbed_softmax, PolicyFamily::thompson_floored})
        EXPECT_EQ(policy_family_from_string(to_string(f)), f);
    EXPECT_THROW(policy_family_from_string("ucb"), Error);
}
