#pragma once

// JSON snapshots of belief banks, stage records and run results. Doubles are
// written in shortest round-trip form, so a snapshot read back is
// bit-identical to the bank that produced it.
//
// Bank snapshot fields: sources[], stats[], zeta[][], nu[][], alpha[][],
// aggregate[], stage, stopped. Matrices are indexed [source][arm].

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpb/belief.hpp"
#include "mpb/engine.hpp"
#include "mpb/stopping.hpp"

namespace mpb {

using json = nlohmann::json;

inline json to_json(const BeliefBank& b) {
    json src = json::array();
    for (const auto& s : b.sources()) src.push_back({{"id", s.id}, {"zeta0", s.zeta0}, {"nu0", s.nu0}});
    json stats = json::array();
    for (const auto& st : b.all_stats()) stats.push_back({{"n", st.n}, {"sum_y", st.sum_y}});
    return {{"sources", std::move(src)},     {"stats", std::move(stats)},
            {"zeta", b.zeta_matrix()},       {"nu", b.nu_matrix()},
            {"alpha", b.alpha_matrix()},     {"aggregate", b.aggregates()},
            {"stage", b.stage()},            {"stopped", b.stopped()}};
}

inline BeliefBank bank_from_json(const json& j) {
    try {
        std::vector<SourcePrior> sources;
        for (const auto& s : j.at("sources"))
            sources.push_back({s.at("id").get<std::size_t>(), s.at("zeta0").get<std::vector<double>>(),
                               s.at("nu0").get<std::vector<double>>()});
        std::vector<ArmStats> stats;
        for (const auto& s : j.at("stats")) stats.push_back({s.at("n").get<std::uint64_t>(), s.at("sum_y").get<double>()});
        using Mat = std::vector<std::vector<double>>;
        return BeliefBank::restore(std::move(sources), std::move(stats), j.at("zeta").get<Mat>(), j.at("nu").get<Mat>(),
                                   j.at("alpha").get<Mat>(), j.at("aggregate").get<std::vector<double>>(),
                                   j.at("stage").get<std::uint64_t>(), j.at("stopped").get<bool>());
    } catch (const json::exception& e) {
        fail(ErrorCode::invalid_argument, std::string("malformed bank snapshot: ") + e.what());
    }
}

inline json to_json(const StopDecision& d) {
    json j = {{"stop", d.stop}, {"cutoffs", d.cutoffs}};
    j["margin"] = std::isnan(d.margin) ? json(nullptr) : json(d.margin);
    j["chosen_arm"] = d.chosen_arm ? json(*d.chosen_arm) : json(nullptr);
    return j;
}

inline json to_json(const BeliefSnapshot& s) {
    return {{"aggregate", s.aggregate}, {"alpha", s.alpha}, {"frequency", s.frequency}};
}

inline json to_json(const StageRecord& r) {
    json j = {{"type", "stage"}, {"t", r.t}, {"stop_checked", r.stop_checked}, {"snapshot", to_json(r.snapshot)}};
    j["stop_decision"] = r.stop_decision ? to_json(*r.stop_decision) : json(nullptr);
    if (r.stop_overridden) j["stop_overridden"] = true;
    j["action_probs"] = r.action_probs.probs;
    j["assignment"] = r.assignment ? json(*r.assignment) : json(nullptr);
    j["outcome"] = r.outcome ? json(*r.outcome) : json(nullptr);
    return j;
}

inline json summary_json(const RunResult& r) {
    json j = {{"type", "summary"},
              {"stop_time", r.stop_time},
              {"chosen_arm", r.chosen_arm},
              {"forced", r.forced},
              {"mistake", r.mistake},
              {"final_avg_outcome", r.avg_outcome_path.empty() ? json(nullptr) : json(r.avg_outcome_path.back())}};
    j["payoff"] = r.payoff ? json(*r.payoff) : json(nullptr);
    return j;
}

/// Line-delimited log: one record per stage, then a summary record.
inline void write_jsonl(std::ostream& out, const RunResult& r) {
    for (const auto& rec : r.log) out << to_json(rec).dump() << '\n';
    out << summary_json(r).dump() << '\n';
}

}  // namespace mpb
