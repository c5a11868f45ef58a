#pragma once

// Live experiment sessions. Every command is appended to <data>/<id>.jsonl and
// fsynced before the caller sees a result; loading a data directory replays
// those logs. Event records:
//   {"type":"create", "id", "config", "simulated"}
//   {"type":"assignment", "t", "arm", "probs", "stop_checked", "stop_decision", "override"}
//   {"type":"outcome", "t", "arm", "value", "simulated"}
//   {"type":"stop", "t", "chosen_arm", "forced", "stop_decision"}
// Assignment randomness is drawn server-side from the config seed, so replaying
// the log reproduces the random streams and the beliefs exactly.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpb/config.hpp"
#include "mpb/engine.hpp"
#include "mpb/error.hpp"
#include "mpb/serialize.hpp"

namespace mpb {

struct PendingAssignment {
    Arm arm = 0;
    std::uint64_t issued_at = 0;
    ActionDistribution probs;
};

struct Session {
    std::string id;
    ExperimentConfig config;
    bool simulated = false;
    BeliefBank bank;
    RunStatus status = RunStatus::live;
    std::optional<PendingAssignment> pending;
    std::optional<StageStart> pending_start;
    std::optional<StopDecision> last_decision;
    std::optional<Arm> chosen_arm;
    std::optional<std::uint64_t> stop_stage;
    std::vector<StageRecord> history;  ///< one record per accepted outcome
    std::vector<json> events;
    std::uint64_t overrides = 0;
    Rng policy_rng;
    Rng env_rng;
    mutable std::mutex mu;

    Session(std::string id_, ExperimentConfig cfg, bool sim)
        : id(std::move(id_)),
          config(std::move(cfg)),
          simulated(sim),
          bank(config.sources),
          policy_rng(substream_seed(config.seed, Stream::policy)),
          env_rng(substream_seed(config.seed, Stream::environment)) {}
};

struct AssignmentResult {
    std::optional<Arm> arm;  ///< absent when the session halted
    ActionDistribution probs;
    std::optional<StopDecision> stop_recommendation;  ///< absent before burn-in
    bool overridden = false;
    RunStatus status = RunStatus::live;
    std::optional<Arm> chosen_arm;
};

inline json to_json(const AssignmentResult& a) {
    json j = {{"arm", a.arm ? json(*a.arm) : json(nullptr)},
              {"action_probs", a.probs.probs},
              {"status", std::string(to_string(a.status))},
              {"overridden", a.overridden}};
    j["stop_recommendation"] = a.stop_recommendation ? to_json(*a.stop_recommendation) : json(nullptr);
    j["chosen_arm"] = a.chosen_arm ? json(*a.chosen_arm) : json(nullptr);
    return j;
}

namespace detail {

inline bool valid_session_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
    return true;
}

/// Appends one line and fsyncs it.
inline void append_durable(const std::filesystem::path& p, const std::string& line) {
    const int fd = ::open(p.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) fail(ErrorCode::io_error, "cannot open session log " + p.string());
    const std::string data = line + "\n";
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            fail(ErrorCode::io_error, "cannot write session log " + p.string());
        }
        done += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) fail(ErrorCode::io_error, "cannot sync session log " + p.string());
}

}  // namespace detail

class SessionManager {
public:
    /// Loads every *.jsonl session log under `data_dir` (created if missing).
    explicit SessionManager(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_)) fail(ErrorCode::io_error, "cannot use data dir " + dir_.string());
        std::vector<std::filesystem::path> logs;
        for (const auto& e : std::filesystem::directory_iterator(dir_))
            if (e.is_regular_file() && e.path().extension() == ".jsonl") logs.push_back(e.path());
        std::sort(logs.begin(), logs.end());
        for (const auto& p : logs) {
            auto s = replay_file(p);
            sessions_.emplace(s->id, std::move(s));
        }
    }

    /// Creates a session from a config document. `id` is optional; generated
    /// ids are 16 hex digits.
    std::string create(const json& config, std::optional<std::string> id = std::nullopt, bool simulated = false) {
        ExperimentConfig cfg = parse_config(config);
        std::unique_lock lock(map_mu_);
        std::string sid;
        if (id) {
            if (!detail::valid_session_id(*id))
                throw Error(ErrorCode::invalid_argument, "session id must be 1-64 characters of [A-Za-z0-9_-]");
            if (sessions_.count(*id) || std::filesystem::exists(log_path(*id)))
                fail(ErrorCode::duplicate_id, "session id already exists: " + *id);
            sid = *id;
        } else {
            do sid = fresh_id();
            while (sessions_.count(sid) || std::filesystem::exists(log_path(sid)));
        }
        auto s = std::make_unique<Session>(sid, std::move(cfg), simulated);
        json ev = {{"type", "create"}, {"id", sid}, {"config", to_json(s->config)}, {"simulated", simulated}};
        persist(*s, std::move(ev));
        sessions_.emplace(sid, std::move(s));
        return sid;
    }

    /// Evaluates the stopping rule, then either halts or issues an assignment.
    /// With `override_stop` a firing rule is reported and logged but the
    /// session continues.
    AssignmentResult next_assignment(const std::string& id, bool override_stop = false) {
        Session& s = get(id);
        std::lock_guard lock(s.mu);
        if (s.status != RunStatus::live) fail(ErrorCode::session_stopped, "session is not live");
        if (s.pending) fail(ErrorCode::pending_assignment, "an assignment is already pending");
        const Rng before = s.policy_rng;
        StageStart start = begin_stage(s.bank, s.config.policy, s.config.stopping, s.config.horizon, s.policy_rng,
                                       override_stop);
        json ev = start_event(start, override_stop);
        try {
            persist(s, ev);
        } catch (...) {
            s.policy_rng = before;
            throw;
        }
        return apply_start(s, std::move(start), override_stop);
    }

    /// Accepts the outcome of the pending assignment. In simulated mode a
    /// missing value is drawn from the configured environment.
    json report_outcome(const std::string& id, std::optional<double> value) {
        Session& s = get(id);
        std::lock_guard lock(s.mu);
        if (s.status != RunStatus::live) fail(ErrorCode::session_stopped, "session is not live");
        if (!s.pending) fail(ErrorCode::no_pending_assignment, "no assignment is pending");
        bool drawn = false;
        const Rng before = s.env_rng;
        if (!value) {
            if (!s.simulated) fail(ErrorCode::invalid_argument, "outcome value is required");
            value = s.config.environment.draw(s.pending->arm, s.env_rng);
            drawn = true;
        }
        if (!std::isfinite(*value)) {
            s.env_rng = before;
            fail(ErrorCode::non_finite_outcome, "outcome must be finite");
        }
        json ev = {{"type", "outcome"}, {"t", s.bank.stage()}, {"arm", s.pending->arm}, {"value", *value},
                   {"simulated", drawn}};
        try {
            persist(s, ev);
        } catch (...) {
            s.env_rng = before;
            throw;
        }
        apply_outcome(s, *value);
        return state_json(s);
    }

    json state(const std::string& id) const {
        const Session& s = get(id);
        std::lock_guard lock(s.mu);
        return state_json(s);
    }

    json summary(const std::string& id) const {
        const Session& s = get(id);
        std::lock_guard lock(s.mu);
        json j = {{"id", s.id},
                  {"status", std::string(to_string(s.status))},
                  {"t", s.bank.stage()},
                  {"simulated", s.simulated},
                  {"config", to_json(s.config)}};
        j["chosen_arm"] = s.chosen_arm ? json(*s.chosen_arm) : json(nullptr);
        return j;
    }

    json log(const std::string& id) const {
        const Session& s = get(id);
        std::lock_guard lock(s.mu);
        return {{"id", s.id}, {"events", s.events}};
    }

    std::vector<std::string> ids() const {
        std::shared_lock lock(map_mu_);
        std::vector<std::string> out;
        for (const auto& [k, v] : sessions_) out.push_back(k);
        return out;
    }

    BeliefBank bank(const std::string& id) const {
        const Session& s = get(id);
        std::lock_guard lock(s.mu);
        return s.bank;
    }

    const std::filesystem::path& data_dir() const { return dir_; }

    std::filesystem::path log_path(const std::string& id) const { return dir_ / (id + ".jsonl"); }

    /// Rebuilds a session from its log file alone.
    static std::unique_ptr<Session> replay_file(const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) fail(ErrorCode::io_error, "cannot read session log " + p.string());
        std::vector<json> events;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                events.push_back(json::parse(line));
            } catch (const json::parse_error&) {
                // A torn final line means the command never completed; anything
                // else is corruption.
                if (in.peek() == std::char_traits<char>::eof()) break;
                fail(ErrorCode::io_error, "corrupt session log " + p.string());
            }
        }
        return replay(events);
    }

    static std::unique_ptr<Session> replay(const std::vector<json>& events) {
        if (events.empty() || events.front().value("type", "") != "create")
            fail(ErrorCode::io_error, "session log does not start with a create event");
        const json& c = events.front();
        auto s = std::make_unique<Session>(c.at("id").get<std::string>(), parse_config(c.at("config")),
                                           c.value("simulated", false));
        s->events.push_back(c);
        for (std::size_t i = 1; i < events.size(); ++i) {
            const json& ev = events[i];
            const std::string type = ev.value("type", "");
            if (type == "assignment" || type == "stop") {
                const bool ov = ev.value("override", false);
                StageStart start = begin_stage(s->bank, s->config.policy, s->config.stopping, s->config.horizon,
                                               s->policy_rng, ov);
                if (start_event(start, ov) != ev) fail(ErrorCode::io_error, "session log diverges from replay");
                s->events.push_back(ev);
                apply_start(*s, std::move(start), ov);
            } else if (type == "outcome") {
                if (!s->pending) fail(ErrorCode::io_error, "outcome without assignment in session log");
                const double v = ev.at("value").get<double>();
                if (ev.value("simulated", false)) {
                    const double redraw = s->config.environment.draw(s->pending->arm, s->env_rng);
                    if (redraw != v) fail(ErrorCode::io_error, "simulated outcome diverges from replay");
                }
                s->events.push_back(ev);
                apply_outcome(*s, v);
            } else {
                fail(ErrorCode::io_error, "unknown session event: " + type);
            }
        }
        return s;
    }

    /// Full state document; identical for a live session and its replay.
    static json state_json(const Session& s) {
        json j = {{"id", s.id},
                  {"status", std::string(to_string(s.status))},
                  {"t", s.bank.stage()},
                  {"simulated", s.simulated},
                  {"beliefs", to_json(s.bank)},
                  {"overrides", s.overrides}};
        std::vector<double> freq(s.bank.arms());
        for (Arm d = 0; d < s.bank.arms(); ++d) freq[d] = s.bank.frequency(d);
        j["frequency"] = freq;
        if (s.pending)
            j["pending"] = {{"arm", s.pending->arm}, {"issued_at", s.pending->issued_at}, {"probs", s.pending->probs.probs}};
        else
            j["pending"] = nullptr;
        j["stop_decision"] = s.last_decision ? to_json(*s.last_decision) : json(nullptr);
        j["margin"] = s.last_decision && !std::isnan(s.last_decision->margin) ? json(s.last_decision->margin)
                                                                              : json(nullptr);
        j["chosen_arm"] = s.chosen_arm ? json(*s.chosen_arm) : json(nullptr);
        j["stop_stage"] = s.stop_stage ? json(*s.stop_stage) : json(nullptr);
        if (s.config.payoff) {
            double acc = 0.0, w = 1.0;
            for (const auto& r : s.history) {
                w *= s.config.payoff->discount;
                acc += w * (*r.outcome - s.config.payoff->cost_experiment);
            }
            j["payoff_to_date"] = acc;
        } else {
            j["payoff_to_date"] = nullptr;
        }
        json hist = json::array();
        for (const auto& r : s.history)
            hist.push_back({{"t", r.t + 1},
                            {"arm", *r.assignment},
                            {"outcome", *r.outcome},
                            {"action_probs", r.action_probs.probs},
                            {"stop_overridden", r.stop_overridden},
                            {"aggregate", r.snapshot.aggregate},
                            {"alpha", r.snapshot.alpha},
                            {"frequency", r.snapshot.frequency}});
        j["history"] = std::move(hist);
        return j;
    }

private:
    std::filesystem::path dir_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;

    Session& get(const std::string& id) const {
        std::shared_lock lock(map_mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) fail(ErrorCode::not_found, "no session " + id);
        return *it->second;
    }

    static std::string fresh_id() {
        static thread_local std::mt19937_64 gen{std::random_device{}()};
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
        return buf;
    }

    void persist(Session& s, json ev) {
        detail::append_durable(log_path(s.id), ev.dump());
        s.events.push_back(std::move(ev));
    }

    static json start_event(const StageStart& st, bool override_stop) {
        json j;
        if (st.halted) {
            j = {{"type", "stop"}, {"t", st.t}, {"chosen_arm", st.chosen_arm}, {"forced", st.forced}};
        } else {
            j = {{"type", "assignment"}, {"t", st.t}, {"arm", st.assignment}, {"probs", st.action_probs.probs}};
            j["override"] = override_stop && st.stop_decision && st.stop_decision->stop;
        }
        j["stop_checked"] = st.stop_checked;
        j["stop_decision"] = st.stop_decision ? to_json(*st.stop_decision) : json(nullptr);
        // Round trip through text so live and replayed events compare equal.
        return json::parse(j.dump());
    }

    static AssignmentResult apply_start(Session& s, StageStart start, bool override_stop) {
        AssignmentResult r;
        r.stop_recommendation = start.stop_decision;
        if (start.stop_decision) s.last_decision = start.stop_decision;
        if (start.halted) {
            s.status = start.forced ? RunStatus::horizon_forced : RunStatus::stopped;
            s.chosen_arm = start.chosen_arm;
            s.stop_stage = start.t;
            s.bank.mark_stopped();
            r.status = s.status;
            r.chosen_arm = start.chosen_arm;
            return r;
        }
        r.arm = start.assignment;
        r.probs = start.action_probs;
        r.overridden = override_stop && start.stop_decision && start.stop_decision->stop;
        if (r.overridden) ++s.overrides;
        s.pending = PendingAssignment{start.assignment, start.t, start.action_probs};
        s.pending_start = std::move(start);
        return r;
    }

    static void apply_outcome(Session& s, double value) {
        StageRecord rec = complete_stage(s.bank, *s.pending_start, value);
        s.history.push_back(std::move(rec));
        s.pending.reset();
        s.pending_start.reset();
    }
};

}  // namespace mpb
