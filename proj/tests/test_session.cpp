#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mpb/session.hpp"

using namespace mpb;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("mpb_session_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

json base_config() {
    return json::parse(R"({
      "environment": {"theta": [1, 1.3], "sigma": [1, 1]},
      "sources": [{"zeta0": [1, 1.3], "nu0": [1, 1]}, {"zeta0": [1.3, 1.6], "nu0": [250, 250]}],
      "policy": {"family": "epsilon-greedy", "epsilon": 0.25},
      "horizon": 1000,
      "stopping": {"burn_in": 100, "beta": 0.01},
      "payoff": {"discount": 0.994, "c": 1.15},
      "seed": 11
    })");
}

/// Single near-flat source whose prior means equal the scripted outcomes, so
/// the aggregate is exactly (1, 2) once both arms are observed.
json scripted_stop_config(double gamma, std::uint64_t burn_in, std::uint64_t horizon) {
    json c = {{"environment", {{"theta", {1.0, 2.0}}, {"sigma", {1.0, 1.0}}}},
              {"sources", {{{"zeta0", {1.0, 2.0}}, {"nu0", {1e-9, 1e-9}}}}},
              {"policy", {{"family", "epsilon-greedy"}, {"epsilon", 0.25}}},
              {"horizon", horizon},
              {"stopping", {{"burn_in", burn_in}, {"beta", 0.01}, {"gamma_override", gamma}}},
              {"seed", 5}};
    return c;
}

double script(std::uint64_t t, Arm d) { return std::sin(0.7 * static_cast<double>(t) + 1.3 * d) + 1.1 * d; }

/// Drives a session with `script` until it halts or `max_stages` outcomes.
void drive(SessionManager& m, const std::string& id, std::uint64_t max_stages) {
    for (std::uint64_t k = 0; k < max_stages; ++k) {
        auto a = m.next_assignment(id);
        if (!a.arm) return;
        m.report_outcome(id, script(m.bank(id).stage(), *a.arm));
    }
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::invalid_argument;
}

}  // namespace

TEST(Session, FreshStateEchoesPriorsWithUniformWeights) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(base_config());
    const json s = m.state(id);
    EXPECT_EQ(s["status"], "live");
    EXPECT_EQ(s["t"], 0);
    EXPECT_TRUE(s["history"].empty());
    EXPECT_TRUE(s["pending"].is_null());
    const BeliefBank b = m.bank(id);
    for (std::size_t o = 0; o < 2; ++o)
        for (Arm d = 0; d < 2; ++d) {
            EXPECT_DOUBLE_EQ(b.alpha(o, d), 0.5);
            EXPECT_EQ(b.zeta(o, d), b.sources()[o].zeta0[d]);
        }
    EXPECT_EQ(id.size(), 16u);
}

TEST(Session, RejectsFloorAboveOneOverArms) {
    TempDir dir;
    SessionManager m(dir.path());
    json c = base_config();
    c["policy"]["epsilon"] = 0.6;
    try {
        m.create(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::invalid_config);
        ASSERT_FALSE(e.fields().empty());
        EXPECT_EQ(e.fields().front().field, "policy.epsilon");
    }
    EXPECT_TRUE(m.ids().empty());
    EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Session, SameSeedSameOutcomesGiveIdenticalLogs) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto a = m.create(base_config(), "a");
    const auto b = m.create(base_config(), "b");
    drive(m, a, 150);
    drive(m, b, 150);
    auto ea = m.log(a)["events"], eb = m.log(b)["events"];
    ea[0].erase("id");
    eb[0].erase("id");
    EXPECT_EQ(ea, eb);
    EXPECT_EQ(ea.size(), 1u + 2u * 150u);
}

TEST(Session, NoStopRecommendationBeforeBurnIn) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(scripted_stop_config(0.0, 30, 100));
    for (int k = 0; k < 30; ++k) {
        auto a = m.next_assignment(id);
        ASSERT_TRUE(a.arm);
        EXPECT_FALSE(a.stop_recommendation);
        m.report_outcome(id, *a.arm == 0 ? 1.0 : 2.0);
    }
    // gamma = 0 makes the rule fire at the first check once both arms are seen.
    const auto a = m.next_assignment(id);
    ASSERT_TRUE(a.stop_recommendation);
    EXPECT_TRUE(a.stop_recommendation->stop);
}

TEST(Session, ScriptedStopMatchesHandOracle) {
    const double gamma = 0.02;
    const std::uint64_t B = 10;
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(scripted_stop_config(gamma, B, 400));

    // Oracle: aggregate is (1, 2); arm 1 clears arm 0 once
    // 1 - gamma t / (n0 + nu0) - gamma t / (n1 + nu0) > 0.
    std::uint64_t n[2] = {0, 0};
    std::optional<std::uint64_t> expected;
    for (std::uint64_t t = 0; t < 400 && !expected; ++t) {
        if (t >= B) {
            const double tt = static_cast<double>(t);
            const double margin = 1.0 - gamma * tt / (n[0] + 1e-9) - gamma * tt / (n[1] + 1e-9);
            if (margin > 0.0) {
                expected = t;
                break;
            }
        }
        auto a = m.next_assignment(id);
        ASSERT_TRUE(a.arm) << "halted early at t=" << t;
        ++n[*a.arm];
        m.report_outcome(id, *a.arm == 0 ? 1.0 : 2.0);
    }
    ASSERT_TRUE(expected);
    const auto halt = m.next_assignment(id);
    EXPECT_FALSE(halt.arm);
    EXPECT_EQ(halt.status, RunStatus::stopped);
    EXPECT_EQ(halt.chosen_arm, Arm{1});
    const json s = m.state(id);
    EXPECT_EQ(s["status"], "stopped");
    EXPECT_EQ(s["chosen_arm"], 1);
    EXPECT_EQ(s["stop_stage"], *expected);
    EXPECT_EQ(s["history"].size(), *expected);
    EXPECT_GT(s["margin"].get<double>(), 0.0);

    EXPECT_EQ(code_of([&] { m.next_assignment(id); }), ErrorCode::session_stopped);
    EXPECT_EQ(code_of([&] { m.report_outcome(id, 1.0); }), ErrorCode::session_stopped);
}

TEST(Session, OverrideContinuesAndIsLogged) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(scripted_stop_config(0.0, 4, 50));
    std::uint64_t overrides = 0;
    for (int k = 0; k < 20; ++k) {
        auto a = m.next_assignment(id, true);
        ASSERT_TRUE(a.arm);
        if (a.overridden) ++overrides;
        m.report_outcome(id, *a.arm == 0 ? 1.0 : 2.0);
    }
    EXPECT_GT(overrides, 0u);
    EXPECT_EQ(m.state(id)["overrides"], overrides);
    std::uint64_t logged = 0;
    const json log = m.log(id);
    for (const auto& ev : log["events"])
        if (ev["type"] == "assignment" && ev["override"].get<bool>()) ++logged;
    EXPECT_EQ(logged, overrides);
    // Without the flag the firing rule halts the session.
    EXPECT_FALSE(m.next_assignment(id).arm);
}

TEST(Session, PendingContract) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(base_config());
    EXPECT_EQ(code_of([&] { m.report_outcome(id, 1.0); }), ErrorCode::no_pending_assignment);
    m.next_assignment(id);
    EXPECT_EQ(code_of([&] { m.next_assignment(id); }), ErrorCode::pending_assignment);
    EXPECT_EQ(code_of([&] { m.report_outcome(id, std::nan("")); }), ErrorCode::non_finite_outcome);
    EXPECT_EQ(code_of([&] { m.report_outcome(id, std::nullopt); }), ErrorCode::invalid_argument);
    // The rejected calls left the pending assignment intact.
    m.report_outcome(id, 1.0);
    EXPECT_EQ(m.state(id)["t"], 1);
}

TEST(Session, OutcomeOnlyMovesAssignedArm) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(base_config());
    for (int k = 0; k < 40; ++k) {
        const BeliefBank before = m.bank(id);
        const Arm d = *m.next_assignment(id).arm;
        m.report_outcome(id, 0.5 + k * 0.1);
        const BeliefBank after = m.bank(id);
        for (Arm e = 0; e < 2; ++e) {
            if (e == d) continue;
            EXPECT_EQ(after.stats(e), before.stats(e));
            for (std::size_t o = 0; o < 2; ++o) {
                EXPECT_EQ(after.zeta(o, e), before.zeta(o, e));
                EXPECT_EQ(after.nu(o, e), before.nu(o, e));
            }
        }
        EXPECT_EQ(after.stats(d).n, before.stats(d).n + 1);
    }
}

TEST(Session, ScriptedSessionEqualsEngineRun) {
    TempDir dir;
    SessionManager m(dir.path());
    json cfg = base_config();
    cfg["horizon"] = 300;
    cfg["stopping"] = {{"burn_in", 20}, {"beta", 0.01}, {"gamma_override", 0.02}};
    const auto id = m.create(cfg);
    drive(m, id, 1000);

    RunOptions opts;
    opts.outcomes = script;
    const ExperimentConfig c = parse_config(cfg);
    const RunResult run = run_experiment(c, c.seed, opts);

    EXPECT_TRUE(m.bank(id) == run.final_bank);
    const json s = m.state(id);
    EXPECT_EQ(s["stop_stage"], run.stop_time);
    EXPECT_EQ(s["chosen_arm"], run.chosen_arm);
    EXPECT_EQ(s["status"], run.forced ? "horizon-forced" : "stopped");
    ASSERT_EQ(s["history"].size() + 1, run.log.size());
    for (std::size_t k = 0; k + 1 < run.log.size(); ++k) {
        EXPECT_EQ(s["history"][k]["arm"], *run.log[k].assignment);
        EXPECT_EQ(s["history"][k]["outcome"], *run.log[k].outcome);
    }
    // Exactly-once accounting.
    std::size_t outcomes = 0;
    const json log = m.log(id);
    for (const auto& ev : log["events"]) outcomes += ev["type"] == "outcome";
    EXPECT_EQ(outcomes, run.stop_time);
}

TEST(Session, ReloadFromDiskReproducesState) {
    TempDir dir;
    std::vector<std::string> ids;
    std::vector<json> live;
    {
        SessionManager m(dir.path());
        ids.push_back(m.create(base_config(), "pending"));
        ids.push_back(m.create(base_config(), "simulated", true));
        json stop = scripted_stop_config(0.02, 10, 400);
        ids.push_back(m.create(stop, "halted"));
        drive(m, "pending", 37);
        m.next_assignment("pending");
        for (int k = 0; k < 60; ++k) {
            m.next_assignment("simulated", k % 7 == 0);
            m.report_outcome("simulated", std::nullopt);
        }
        for (int k = 0; k < 400; ++k) {
            auto a = m.next_assignment("halted");
            if (!a.arm) break;
            m.report_outcome("halted", *a.arm == 0 ? 1.0 : 2.0);
        }
        for (const auto& id : ids) live.push_back(m.state(id));
    }
    SessionManager reloaded(dir.path());
    ASSERT_EQ(reloaded.ids().size(), 3u);
    for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(reloaded.state(ids[i]), live[i]) << ids[i];
    EXPECT_EQ(live[2]["status"], "stopped");
    // The reloaded session keeps going from the same streams.
    reloaded.report_outcome("pending", 1.0);
    EXPECT_EQ(reloaded.state("pending")["t"], 38);
}

TEST(Session, TornFinalLineIsIgnored) {
    TempDir dir;
    json before;
    {
        SessionManager m(dir.path());
        m.create(base_config(), "s");
        drive(m, "s", 5);
        before = m.state("s");
    }
    {
        std::ofstream out(dir.path() / "s.jsonl", std::ios::app);
        out << R"({"type":"assignment","t":5,"ar)";
    }
    SessionManager m(dir.path());
    EXPECT_EQ(m.state("s"), before);
}

TEST(Session, TamperedLogIsRejected) {
    TempDir dir;
    {
        SessionManager m(dir.path());
        m.create(base_config(), "s");
        drive(m, "s", 5);
    }
    std::vector<std::string> lines;
    {
        std::ifstream in(dir.path() / "s.jsonl");
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    json ev = json::parse(lines[1]);
    ev["arm"] = 1 - ev["arm"].get<int>();
    lines[1] = ev.dump();
    {
        std::ofstream out(dir.path() / "s.jsonl", std::ios::trunc);
        for (const auto& l : lines) out << l << "\n";
    }
    EXPECT_EQ(code_of([&] { SessionManager m(dir.path()); }), ErrorCode::io_error);
}

TEST(Session, IdsAndLookups) {
    TempDir dir;
    SessionManager m(dir.path());
    m.create(base_config(), "trial-1");
    EXPECT_EQ(code_of([&] { m.create(base_config(), "trial-1"); }), ErrorCode::duplicate_id);
    EXPECT_EQ(code_of([&] { m.create(base_config(), "../x"); }), ErrorCode::invalid_argument);
    EXPECT_EQ(code_of([&] { m.state("missing"); }), ErrorCode::not_found);
    EXPECT_EQ(code_of([&] { m.next_assignment("missing"); }), ErrorCode::not_found);
    EXPECT_EQ(m.summary("trial-1")["status"], "live");
}

TEST(Session, HistoryStoresOnlyAssignedOutcome) {
    TempDir dir;
    SessionManager m(dir.path());
    const auto id = m.create(base_config(), "s", true);
    for (int k = 0; k < 25; ++k) {
        m.next_assignment(id);
        m.report_outcome(id, std::nullopt);
    }
    const json s = m.state(id);
    ASSERT_EQ(s["history"].size(), 25u);
    for (const auto& h : s["history"]) {
        EXPECT_TRUE(h["outcome"].is_number());
        EXPECT_TRUE(h["arm"].is_number());
    }
    const json log = m.log(id);
    for (const auto& ev : log["events"]) {
        if (ev["type"] == "outcome") {
            EXPECT_TRUE(ev["value"].is_number());
        }
    }
}

TEST(Session, DistinctSessionsRunConcurrently) {
    TempDir dir;
    SessionManager m(dir.path());
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(m.create(base_config(), "c" + std::to_string(i), true));
    std::vector<std::thread> threads;
    for (const auto& id : ids)
        threads.emplace_back([&m, id] {
            for (int k = 0; k < 50; ++k) {
                m.next_assignment(id);
                m.report_outcome(id, std::nullopt);
            }
        });
    for (auto& t : threads) t.join();
    for (std::size_t i = 1; i < ids.size(); ++i) {
        auto a = m.state(ids[0]), b = m.state(ids[i]);
        a.erase("id");
        b.erase("id");
        EXPECT_EQ(a, b);
    }
}
