#pragma once

// JSON form of the experiment config.
//
//   {
//     "environment": {"theta": [1, 1.3], "sigma": [1, 1], "family": "gaussian"},
//     "sources": [{"zeta0": [1, 1.3], "nu0": [1, 1], "support": {"type": "full"}}],
//     "policy": {"family": "epsilon-greedy", "epsilon": 0.25, "h": 1, "thompson_draws": 1024},
//     "horizon": 1000,
//     "stopping": {"burn_in": 100, "beta": 0.01, "gamma_A": 2.2, "gamma_override": 0.05},
//     "payoff": {"discount": 0.994, "c1": 1.15, "c2": 1.15},
//     "seed": 7
//   }
//
// Without "gamma_A" (and without "gamma_override") A is calibrated from beta.
// "payoff.c" sets both costs. Omitting "stopping" runs every experiment to the
// horizon.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpb/engine.hpp"
#include "mpb/error.hpp"
#include "mpb/stopping.hpp"

namespace mpb {

using json = nlohmann::json;

namespace detail {

class ConfigReader {
public:
    std::vector<FieldIssue> issues;

    void bad(const std::string& field, const std::string& msg) { issues.push_back({field, msg}); }

    const json* member(const json& obj, const char* key) {
        if (!obj.is_object()) return nullptr;
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    bool number(const json& obj, const char* key, const std::string& path, double& out, bool required) {
        const json* v = member(obj, key);
        if (!v) {
            if (required) bad(path, "is required");
            return false;
        }
        if (!v->is_number()) {
            bad(path, "must be a number");
            return false;
        }
        out = v->get<double>();
        return true;
    }

    bool count(const json& obj, const char* key, const std::string& path, std::uint64_t& out, bool required) {
        const json* v = member(obj, key);
        if (!v) {
            if (required) bad(path, "is required");
            return false;
        }
        if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
            out = v->get<std::uint64_t>();
            return true;
        }
        bad(path, "must be a non-negative integer");
        return false;
    }

    bool vector(const json& obj, const char* key, const std::string& path, std::vector<double>& out, bool required) {
        const json* v = member(obj, key);
        if (!v) {
            if (required) bad(path, "is required");
            return false;
        }
        if (!v->is_array()) {
            bad(path, "must be an array of numbers");
            return false;
        }
        out.clear();
        for (const auto& x : *v) {
            if (!x.is_number()) {
                bad(path, "must be an array of numbers");
                return false;
            }
            out.push_back(x.get<double>());
        }
        return true;
    }
};

inline SupportRestriction parse_support(ConfigReader& r, const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        r.bad(path + ".type", "must be one of full, point, interval");
        return FullSupport{};
    }
    const std::string type = j["type"].get<std::string>();
    if (type == "full") return FullSupport{};
    if (type == "point") return PointMass{};
    if (type == "interval") {
        IntervalSupport s;
        r.vector(j, "lo", path + ".lo", s.lo, true);
        r.vector(j, "hi", path + ".hi", s.hi, true);
        for (std::size_t d = 0; d < std::min(s.lo.size(), s.hi.size()); ++d)
            if (!(s.lo[d] <= s.hi[d])) r.bad(path, "empty support interval");
        return s;
    }
    r.bad(path + ".type", "must be one of full, point, interval");
    return FullSupport{};
}

}  // namespace detail

/// Parses and validates; throws invalid_config with per-field diagnostics.
inline ExperimentConfig parse_config(const json& j) {
    detail::ConfigReader r;
    ExperimentConfig c;
    if (!j.is_object()) {
        r.bad("", "config must be a JSON object");
        throw Error(ErrorCode::invalid_config, "invalid config: not an object", r.issues);
    }

    if (const json* env = r.member(j, "environment")) {
        r.vector(*env, "theta", "environment.theta", c.environment.theta, true);
        if (!r.vector(*env, "sigma", "environment.sigma", c.environment.sigma, false))
            c.environment.sigma.assign(c.environment.theta.size(), 1.0);
        if (const json* fam = r.member(*env, "family")) {
            const std::string f = fam->is_string() ? fam->get<std::string>() : "";
            if (f == "gaussian") c.environment.family = OutcomeFamily::gaussian;
            else if (f == "bounded-uniform") c.environment.family = OutcomeFamily::bounded_uniform;
            else r.bad("environment.family", "must be gaussian or bounded-uniform");
        }
    } else {
        r.bad("environment", "is required");
    }

    if (const json* src = r.member(j, "sources"); src && src->is_array()) {
        bool any_support = false;
        std::vector<SupportRestriction> support;
        for (std::size_t o = 0; o < src->size(); ++o) {
            const json& s = (*src)[o];
            const std::string p = "sources[" + std::to_string(o) + "]";
            SourcePrior sp;
            sp.id = o;
            r.vector(s, "zeta0", p + ".zeta0", sp.zeta0, true);
            r.vector(s, "nu0", p + ".nu0", sp.nu0, true);
            c.sources.push_back(std::move(sp));
            if (const json* sup = r.member(s, "support")) {
                any_support = true;
                support.push_back(detail::parse_support(r, *sup, p + ".support"));
            } else {
                support.push_back(FullSupport{});
            }
        }
        if (any_support) c.support = std::move(support);
    } else {
        r.bad("sources", "is required and must be an array");
    }

    if (const json* pol = r.member(j, "policy")) {
        if (const json* fam = r.member(*pol, "family")) {
            try {
                c.policy.family = policy_family_from_string(fam->is_string() ? fam->get<std::string>() : "");
            } catch (const Error&) {
                r.bad("policy.family", "must be epsilon-greedy, perturbed-softmax or thompson-floored");
            }
        }
        r.number(*pol, "epsilon", "policy.epsilon", c.policy.epsilon, false);
        r.number(*pol, "h", "policy.h", c.policy.h, false);
        std::uint64_t draws = static_cast<std::uint64_t>(c.policy.thompson_draws);
        if (r.count(*pol, "thompson_draws", "policy.thompson_draws", draws, false))
            c.policy.thompson_draws = static_cast<int>(std::min<std::uint64_t>(draws, 1u << 30));
    }

    bool horizon_given = r.count(j, "horizon", "horizon", c.horizon, false);

    if (const json* stp = r.member(j, "stopping"); stp && !stp->is_null()) {
        bool enabled = true;
        if (const json* en = r.member(*stp, "enabled")) enabled = en->is_boolean() ? en->get<bool>() : true;
        StoppingSpec s;
        r.count(*stp, "burn_in", "stopping.burn_in", s.burn_in, false);
        std::uint64_t h = 0;
        if (r.count(*stp, "horizon", "stopping.horizon", h, false)) {
            if (horizon_given && h != c.horizon) r.bad("stopping.horizon", "conflicts with top-level horizon");
            c.horizon = h;
            horizon_given = true;
        }
        s.horizon = c.horizon;
        r.number(*stp, "beta", "stopping.beta", s.beta, false);
        const bool has_A = r.number(*stp, "gamma_A", "stopping.gamma_A", s.gamma_A, false);
        if (const json* go = r.member(*stp, "gamma_override"); go && !go->is_null()) {
            GammaOverride ov;
            if (go->is_number()) {
                ov.values.push_back(go->get<double>());
            } else {
                r.vector(*stp, "gamma_override", "stopping.gamma_override", ov.values, true);
            }
            s.gamma_override = std::move(ov);
        } else if (!has_A && s.burn_in >= 2 && s.burn_in < c.horizon && s.beta > 0.0 && s.beta < 1.0 &&
                   c.environment.theta.size() >= 2) {
            try {
                s.gamma_A = calibrate(s.beta, s.burn_in, c.horizon, c.environment.theta.size());
            } catch (const Error& e) {
                r.bad("stopping.beta", e.what());
            }
        }
        if (enabled) c.stopping = s;
    }

    if (const json* pay = r.member(j, "payoff"); pay && !pay->is_null()) {
        PayoffSpec p;
        r.number(*pay, "discount", "payoff.discount", p.discount, false);
        double both = 0.0;
        if (r.number(*pay, "c", "payoff.c", both, false)) p.cost_experiment = p.cost_deploy = both;
        r.number(*pay, "c1", "payoff.c1", p.cost_experiment, false);
        r.number(*pay, "c2", "payoff.c2", p.cost_deploy, false);
        c.payoff = p;
    }

    r.count(j, "seed", "seed", c.seed, false);

    if (c.stopping) c.stopping->horizon = c.horizon;
    if (r.issues.empty()) {
        auto more = validate(c);
        r.issues.insert(r.issues.end(), more.begin(), more.end());
    }
    if (!r.issues.empty()) {
        std::string msg = "invalid config:";
        for (const auto& i : r.issues) msg += " " + i.field + " (" + i.message + ");";
        throw Error(ErrorCode::invalid_config, msg, r.issues);
    }
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::invalid_config, std::string("config is not valid JSON: ") + e.what(),
                    {FieldIssue{"", "not valid JSON"}});
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Canonical JSON of a validated config; parse_config(to_json(c)) == c.
/// Calibrated A is written out explicitly.
inline json to_json(const ExperimentConfig& c) {
    json j;
    j["environment"] = {{"theta", c.environment.theta},
                        {"sigma", c.environment.sigma},
                        {"family", c.environment.family == OutcomeFamily::gaussian ? "gaussian" : "bounded-uniform"}};
    json src = json::array();
    for (std::size_t o = 0; o < c.sources.size(); ++o) {
        json s = {{"zeta0", c.sources[o].zeta0}, {"nu0", c.sources[o].nu0}};
        if (!c.support.empty()) {
            std::visit(
                [&](const auto& sup) {
                    using T = std::decay_t<decltype(sup)>;
                    if constexpr (std::is_same_v<T, FullSupport>) s["support"] = {{"type", "full"}};
                    else if constexpr (std::is_same_v<T, PointMass>) s["support"] = {{"type", "point"}};
                    else s["support"] = {{"type", "interval"}, {"lo", sup.lo}, {"hi", sup.hi}};
                },
                c.support[o]);
        }
        src.push_back(std::move(s));
    }
    j["sources"] = std::move(src);
    j["policy"] = {{"family", std::string(to_string(c.policy.family))},
                   {"epsilon", c.policy.epsilon},
                   {"h", c.policy.h},
                   {"thompson_draws", c.policy.thompson_draws}};
    j["horizon"] = c.horizon;
    if (c.stopping) {
        json s = {{"burn_in", c.stopping->burn_in}, {"beta", c.stopping->beta}, {"gamma_A", c.stopping->gamma_A}};
        if (c.stopping->gamma_override) s["gamma_override"] = c.stopping->gamma_override->values;
        j["stopping"] = std::move(s);
    }
    if (c.payoff)
        j["payoff"] = {{"discount", c.payoff->discount}, {"c1", c.payoff->cost_experiment}, {"c2", c.payoff->cost_deploy}};
    j["seed"] = c.seed;
    return j;
}

}  // namespace mpb
