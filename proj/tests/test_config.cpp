#include <gtest/gtest.h>

#include <sstream>

#include "mpb/config.hpp"
#include "mpb/serialize.hpp"

using namespace mpb;

namespace {

const char* kBase = R"({
  "environment": {"theta": [1, 1.3], "sigma": [1, 1]},
  "sources": [{"zeta0": [1, 1.3], "nu0": [1, 1]}, {"zeta0": [1.3, 1.6], "nu0": [250, 250]}],
  "policy": {"family": "epsilon-greedy", "epsilon": 0.25},
  "horizon": 1000,
  "stopping": {"burn_in": 100, "beta": 0.01},
  "payoff": {"discount": 0.994, "c": 1.15},
  "seed": 7
})";

std::vector<std::string> fields_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_config);
        std::vector<std::string> out;
        for (const auto& f : e.fields()) out.push_back(f.field);
        return out;
    }
    return {};
}

bool has(const std::vector<std::string>& v, const std::string& f) {
    return std::find(v.begin(), v.end(), f) != v.end();
}

}  // namespace

TEST(Config, ParsesBase) {
    const auto c = parse_config_text(kBase);
    EXPECT_EQ(c.arms(), 2u);
    EXPECT_EQ(c.sources.size(), 2u);
    EXPECT_EQ(c.sources[1].nu0[0], 250.0);
    EXPECT_EQ(c.policy.epsilon, 0.25);
    ASSERT_TRUE(c.stopping);
    EXPECT_EQ(c.stopping->burn_in, 100u);
    EXPECT_EQ(c.stopping->horizon, 1000u);
    EXPECT_NEAR(c.stopping->gamma_A, 2.318366, 1e-6);
    ASSERT_TRUE(c.payoff);
    EXPECT_EQ(c.payoff->cost_experiment, 1.15);
    EXPECT_EQ(c.payoff->cost_deploy, 1.15);
    EXPECT_EQ(c.seed, 7u);
}

TEST(Config, ExplicitGammaSkipsCalibration) {
    auto j = json::parse(kBase);
    j["stopping"]["gamma_A"] = 3.5;
    EXPECT_EQ(parse_config(j).stopping->gamma_A, 3.5);
    j["stopping"].erase("gamma_A");
    j["stopping"]["gamma_override"] = 0.05;
    const auto c = parse_config(j);
    ASSERT_TRUE(c.stopping->gamma_override);
    EXPECT_EQ(c.stopping->gamma_override->values, std::vector<double>{0.05});
}

TEST(Config, StoppingDisabled) {
    auto j = json::parse(kBase);
    j["stopping"]["enabled"] = false;
    EXPECT_FALSE(parse_config(j).stopping);
    j.erase("stopping");
    EXPECT_FALSE(parse_config(j).stopping);
}

TEST(Config, FieldDiagnostics) {
    auto j = json::parse(kBase);
    j["policy"]["epsilon"] = 0.6;
    EXPECT_TRUE(has(fields_of(j.dump()), "policy.epsilon"));

    j = json::parse(kBase);
    j["sources"][1]["nu0"] = json::array({250, -1});
    EXPECT_TRUE(has(fields_of(j.dump()), "sources[1].nu0"));

    j = json::parse(kBase);
    j["sources"][0]["zeta0"] = json::array({1});
    EXPECT_TRUE(has(fields_of(j.dump()), "sources[0].zeta0"));

    j = json::parse(kBase);
    j["sources"] = json::array();
    EXPECT_TRUE(has(fields_of(j.dump()), "sources"));

    j = json::parse(kBase);
    j["stopping"]["burn_in"] = 5000;
    EXPECT_FALSE(fields_of(j.dump()).empty());

    j = json::parse(kBase);
    j["policy"]["family"] = "greedy";
    EXPECT_TRUE(has(fields_of(j.dump()), "policy.family"));

    j = json::parse(kBase);
    j["environment"]["theta"] = "high";
    EXPECT_TRUE(has(fields_of(j.dump()), "environment.theta"));

    j = json::parse(kBase);
    j["payoff"]["discount"] = 1.0;
    EXPECT_TRUE(has(fields_of(j.dump()), "payoff.discount"));

    EXPECT_FALSE(fields_of("{not json").empty());
    EXPECT_FALSE(fields_of("[]").empty());
}

TEST(Config, MultipleIssuesReportedTogether) {
    auto j = json::parse(kBase);
    j["policy"]["epsilon"] = "x";
    j["horizon"] = -3;
    const auto f = fields_of(j.dump());
    EXPECT_TRUE(has(f, "policy.epsilon"));
    EXPECT_TRUE(has(f, "horizon"));
}

TEST(Config, SupportRestrictions) {
    auto j = json::parse(kBase);
    j["sources"][0]["support"] = {{"type", "point"}};
    j["sources"][1]["support"] = {{"type", "interval"}, {"lo", {0, 0}}, {"hi", {2, 2}}};
    const auto c = parse_config(j);
    ASSERT_EQ(c.support.size(), 2u);
    EXPECT_TRUE(std::holds_alternative<PointMass>(c.support[0]));
    EXPECT_TRUE(std::holds_alternative<IntervalSupport>(c.support[1]));
    j["sources"][1]["support"] = {{"type", "interval"}, {"lo", {3, 0}}, {"hi", {2, 2}}};
    EXPECT_TRUE(has(fields_of(j.dump()), "sources[1].support"));
}

TEST(Config, RoundTrip) {
    auto j = json::parse(kBase);
    j["sources"][1]["support"] = {{"type", "interval"}, {"lo", {0, 0}}, {"hi", {2, 2}}};
    j["sources"][0]["support"] = {{"type", "full"}};
    const auto c = parse_config(j);
    const auto back = parse_config(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    EXPECT_EQ(back.stopping->gamma_A, c.stopping->gamma_A);
}

TEST(Config, MissingFile) {
    try {
        load_config("/nonexistent/config.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io_error);
    }
}

TEST(Serialize, BankSnapshotRoundTrip) {
    const auto c = parse_config_text(kBase);
    const auto r = run_experiment(c, 3);
    const auto back = bank_from_json(json::parse(to_json(r.final_bank).dump()));
    EXPECT_TRUE(back == r.final_bank);
}

TEST(Serialize, JsonlHasOneLinePerStagePlusSummary) {
    auto c = parse_config_text(kBase);
    c.horizon = 50;
    c.stopping.reset();
    const auto r = run_experiment(c, 3);
    std::ostringstream out;
    write_jsonl(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::size_t n = 0;
    json last;
    while (std::getline(in, line)) {
        last = json::parse(line);
        ++n;
    }
    EXPECT_EQ(n, r.log.size() + 1);
    EXPECT_EQ(last["type"], "summary");
    EXPECT_EQ(last["stop_time"], 50);
}

TEST(Serialize, MalformedSnapshot) { EXPECT_THROW(bank_from_json(json::parse(R"({"sources": 3})")), Error); }
