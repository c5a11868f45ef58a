#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <thread>

#include "mpb/service.hpp"

using namespace mpb;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "environment": {"theta": [1, 1.3], "sigma": [1, 1]},
  "sources": [{"zeta0": [1, 1.3], "nu0": [1, 1]}, {"zeta0": [1.3, 1.6], "nu0": [250, 250]}],
  "policy": {"family": "epsilon-greedy", "epsilon": 0.25},
  "horizon": 1000,
  "stopping": {"burn_in": 100, "beta": 0.01},
  "payoff": {"discount": 0.994, "c": 1.15},
  "seed": 3
})";

class ServiceTest : public ::testing::Test {
protected:
    fs::path dir;
    std::unique_ptr<SessionManager> sessions;
    std::unique_ptr<Service> service;
    std::thread worker;
    int port = 0;

    void SetUp() override {
        static int counter = 0;
        dir = fs::temp_directory_path() / ("mpb_service_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(dir);
        start();
    }

    void start() {
        sessions = std::make_unique<SessionManager>(dir);
        service = std::make_unique<Service>(*sessions);
        port = service->bind_any_port("127.0.0.1");
        ASSERT_GT(port, 0);
        worker = std::thread([this] { service->listen_after_bind(); });
        service->wait_until_ready();
    }

    void stop() {
        service->stop();
        if (worker.joinable()) worker.join();
        service.reset();
        sessions.reset();
    }

    void TearDown() override {
        stop();
        fs::remove_all(dir);
    }

    httplib::Client client() { return httplib::Client("127.0.0.1", port); }

    std::pair<int, json> post(const std::string& path, const json& body) {
        auto c = client();
        auto r = c.Post(path, body.dump(), "application/json");
        if (!r) return {0, nullptr};
        return {r->status, r->body.empty() ? json() : json::parse(r->body)};
    }

    std::pair<int, json> get(const std::string& path) {
        auto c = client();
        auto r = c.Get(path);
        if (!r) return {0, nullptr};
        return {r->status, json::parse(r->body)};
    }
};

std::string code(const json& body) { return body["error"]["code"].get<std::string>(); }

}  // namespace

TEST_F(ServiceTest, FullCycle) {
    auto [st, created] = post("/sessions", {{"config", json::parse(kConfig)}, {"id", "trial"}});
    ASSERT_EQ(st, 201);
    EXPECT_EQ(created["id"], "trial");
    EXPECT_EQ(created["status"], "live");

    for (int k = 0; k < 10; ++k) {
        auto [s1, a] = post("/sessions/trial/assignment", json::object());
        ASSERT_EQ(s1, 200);
        ASSERT_TRUE(a["arm"].is_number());
        EXPECT_TRUE(a["stop_recommendation"].is_null());
        EXPECT_EQ(a["action_probs"].size(), 2u);
        auto [s2, snap] = post("/sessions/trial/outcome", {{"value", 1.0 + 0.1 * k}});
        ASSERT_EQ(s2, 200);
        EXPECT_EQ(snap["t"], k + 1);
        EXPECT_TRUE(snap["beliefs"].is_object());
    }
    auto [s3, state] = get("/sessions/trial/state");
    ASSERT_EQ(s3, 200);
    EXPECT_EQ(state["history"].size(), 10u);
    auto [s4, summary] = get("/sessions/trial");
    ASSERT_EQ(s4, 200);
    EXPECT_EQ(summary["t"], 10);
    auto [s5, log] = get("/sessions/trial/log");
    ASSERT_EQ(s5, 200);
    EXPECT_EQ(log["events"].size(), 21u);
}

TEST_F(ServiceTest, RawConfigBodyAndGeneratedId) {
    auto [st, created] = post("/sessions", json::parse(kConfig));
    ASSERT_EQ(st, 201);
    EXPECT_EQ(created["id"].get<std::string>().size(), 16u);
}

TEST_F(ServiceTest, ErrorCodes) {
    json bad = json::parse(kConfig);
    bad["policy"]["epsilon"] = 0.9;
    auto [s1, e1] = post("/sessions", {{"config", bad}});
    EXPECT_EQ(s1, 400);
    EXPECT_EQ(code(e1), "invalid_config");
    EXPECT_EQ(e1["error"]["fields"][0]["field"], "policy.epsilon");

    auto [s2, e2] = get("/sessions/nope/state");
    EXPECT_EQ(s2, 404);
    EXPECT_EQ(code(e2), "not_found");

    post("/sessions", {{"config", json::parse(kConfig)}, {"id", "s"}});
    auto [s3, e3] = post("/sessions/s/outcome", {{"value", 1.0}});
    EXPECT_EQ(s3, 409);
    EXPECT_EQ(code(e3), "no_pending_assignment");

    post("/sessions/s/assignment", json::object());
    auto [s4, e4] = post("/sessions/s/assignment", json::object());
    EXPECT_EQ(s4, 409);
    EXPECT_EQ(code(e4), "pending_assignment");

    auto [s5, e5] = post("/sessions", {{"config", json::parse(kConfig)}, {"id", "s"}});
    EXPECT_EQ(s5, 409);
    EXPECT_EQ(code(e5), "duplicate_id");

    auto [s6, e6] = post("/sessions/s/outcome", {{"value", "high"}});
    EXPECT_EQ(s6, 400);
    EXPECT_EQ(code(e6), "invalid_request");

    auto c = client();
    auto r = c.Post("/sessions/s/outcome", "{not json", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
}

TEST_F(ServiceTest, StoppedSessionRejects) {
    json cfg = json::parse(kConfig);
    cfg["horizon"] = 5;
    cfg.erase("stopping");
    post("/sessions", {{"config", cfg}, {"id", "short"}, {"simulated", true}});
    for (int k = 0; k < 5; ++k) {
        post("/sessions/short/assignment", json::object());
        auto [st, snap] = post("/sessions/short/outcome", json::object());
        ASSERT_EQ(st, 200);
    }
    auto [s1, halt] = post("/sessions/short/assignment", json::object());
    ASSERT_EQ(s1, 200);
    EXPECT_TRUE(halt["arm"].is_null());
    EXPECT_EQ(halt["status"], "horizon-forced");
    EXPECT_TRUE(halt["chosen_arm"].is_number());
    auto [s2, e2] = post("/sessions/short/outcome", {{"value", 1.0}});
    EXPECT_EQ(s2, 409);
    EXPECT_EQ(code(e2), "session_stopped");
    auto [s3, state] = get("/sessions/short/state");
    EXPECT_EQ(state["stop_stage"], 5);
}

TEST_F(ServiceTest, RestartReplaysState) {
    post("/sessions", {{"config", json::parse(kConfig)}, {"id", "keep"}, {"simulated", true}});
    for (int k = 0; k < 30; ++k) {
        post("/sessions/keep/assignment", json::object());
        post("/sessions/keep/outcome", json::object());
    }
    post("/sessions/keep/assignment", json::object());
    auto [s1, before] = get("/sessions/keep/state");
    ASSERT_EQ(s1, 200);
    stop();
    start();
    auto [s2, after] = get("/sessions/keep/state");
    ASSERT_EQ(s2, 200);
    EXPECT_EQ(before, after);
}
