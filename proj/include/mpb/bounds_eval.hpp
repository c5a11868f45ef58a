#pragma once

// Tabular evaluation of the bound functions from a JSON parameter document.
// A document is either one parameter object or {"rows": [...]} where each row
// is merged over the top-level keys, so shared inputs are written once:
//
//   omega          {"a", "b", "c", "e"}
//   gamma          {"t", "gamma", "e_t", "sources": [{"bias", "nu0"}], "lower"?: "exact_min"|"displayed_sum"}
//   eta-star       {"t", "gamma", "epsilon", "Delta", "sources", "is_best"?, "x_step"?}
//   mistake-bound  {"config": {...experiment...}, "upsilon", "C_eps", "B_eps"?, "epsilon"?, "x_step"?}
//
// mistake-bound reads sources, theta, sigma and the stopping rule from the
// embedded experiment config; epsilon defaults to the config's floor.

#include <string>
#include <vector>

#include <json.hpp>

#include "mpb/bounds.hpp"
#include "mpb/config.hpp"
#include "mpb/montecarlo.hpp"

namespace mpb {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> notes;  ///< warnings, printed as comment lines
};

inline void write_table(std::ostream& out, const Table& t) {
    for (const auto& n : t.notes) out << "# " << n << '\n';
    detail::write_tsv_row(out, t.columns);
    for (const auto& r : t.rows) detail::write_tsv_row(out, r);
}

namespace detail {

inline std::vector<json> param_rows(const json& doc) {
    if (!doc.is_object()) fail(ErrorCode::invalid_argument, "bound parameters must be a JSON object");
    if (!doc.contains("rows")) return {doc};
    if (!doc["rows"].is_array() || doc["rows"].empty())
        fail(ErrorCode::invalid_argument, "rows must be a non-empty array");
    json shared = doc;
    shared.erase("rows");
    std::vector<json> out;
    for (const auto& r : doc["rows"]) {
        if (!r.is_object()) fail(ErrorCode::invalid_argument, "each row must be an object");
        json merged = shared;
        merged.update(r);
        out.push_back(std::move(merged));
    }
    return out;
}

inline double num_field(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number())
        fail(ErrorCode::invalid_argument, std::string("bound parameter '") + key + "' must be a number");
    return j[key].get<double>();
}

inline std::vector<SourceBias> bias_field(const json& j) {
    if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty())
        fail(ErrorCode::invalid_argument, "bound parameter 'sources' must be a non-empty array");
    std::vector<SourceBias> out;
    for (const auto& s : j["sources"]) out.push_back({num_field(s, "bias"), num_field(s, "nu0")});
    return out;
}

inline LowerEnvelope lower_field(const json& j) {
    const std::string s = j.value("lower", "exact_min");
    if (s == "exact_min") return LowerEnvelope::exact_min;
    if (s == "displayed_sum") return LowerEnvelope::displayed_sum;
    fail(ErrorCode::invalid_argument, "lower must be exact_min or displayed_sum");
}

}  // namespace detail

inline Table eval_omega(const json& doc) {
    Table t{{"a", "b", "c", "e", "omega"}, {}, {}};
    for (const auto& r : detail::param_rows(doc)) {
        const double a = detail::num_field(r, "a"), b = detail::num_field(r, "b");
        const double c = detail::num_field(r, "c"), e = detail::num_field(r, "e");
        t.rows.push_back({fmt(a), fmt(b), fmt(c), fmt(e), fmt(omega(a, b, c, e))});
    }
    return t;
}

inline Table eval_gamma(const json& doc) {
    const auto rows = detail::param_rows(doc);
    const std::size_t L = detail::bias_field(rows.front()).size();
    Table t{{"t", "gamma", "e_t", "Gamma"}, {}, {}};
    for (std::size_t o = 0; o < L; ++o) {
        t.columns.push_back("alpha_lo_" + std::to_string(o));
        t.columns.push_back("alpha_hi_" + std::to_string(o));
    }
    for (const auto& r : rows) {
        const double tt = detail::num_field(r, "t"), g = detail::num_field(r, "gamma"), e = detail::num_field(r, "e_t");
        const auto src = detail::bias_field(r);
        if (src.size() != L) fail(ErrorCode::invalid_argument, "every row needs the same number of sources");
        const auto form = detail::lower_field(r);
        const double G = gamma_bound(tt, g, e, src, form);
        const auto env = weight_envelopes(tt, g, g / (e - g), e, abs_bias(src), form);
        std::vector<std::string> cells = {fmt(tt), fmt(g), fmt(e), fmt(G)};
        for (const auto& w : env) {
            cells.push_back(fmt(w.alpha_lo));
            cells.push_back(fmt(w.alpha_hi));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline Table eval_eta_star(const json& doc) {
    Table t{{"t", "gamma", "epsilon", "Delta", "is_best", "eta_star"}, {}, {}};
    for (const auto& r : detail::param_rows(doc)) {
        const double tt = detail::num_field(r, "t"), g = detail::num_field(r, "gamma");
        const double eps = detail::num_field(r, "epsilon"), D = detail::num_field(r, "Delta");
        const bool best = r.value("is_best", false);
        EtaStarOptions opt;
        if (r.contains("x_step")) opt.x_step = detail::num_field(r, "x_step");
        const double v = eta_star(tt, g, eps, D, detail::bias_field(r), best, opt);
        t.rows.push_back({fmt(tt), fmt(g), fmt(eps), fmt(D), best ? "1" : "0", std::isinf(v) ? "inf" : fmt(v)});
    }
    return t;
}

inline Table eval_mistake_bound(const json& doc) {
    Table t{{"label", "epsilon", "burn_in", "horizon", "bound", "raw", "truncated"}, {}, {}};
    std::size_t k = 0;
    for (const auto& r : detail::param_rows(doc)) {
        if (!r.contains("config")) fail(ErrorCode::invalid_argument, "mistake-bound needs an experiment config");
        const ExperimentConfig c = parse_config(r["config"]);
        if (!c.stopping) fail(ErrorCode::invalid_argument, "mistake-bound needs a stopping rule in the config");
        MistakeBoundSpec spec;
        spec.stopping = *c.stopping;
        spec.epsilon = r.contains("epsilon") ? detail::num_field(r, "epsilon") : c.policy.epsilon;
        spec.sigma = c.environment.sigma;
        if (r.contains("upsilon")) spec.upsilon = detail::num_field(r, "upsilon");
        if (r.contains("C_eps")) spec.C_eps = detail::num_field(r, "C_eps");
        if (r.contains("B_eps")) spec.B_eps = detail::num_field(r, "B_eps");
        if (r.contains("x_step")) spec.eta_options.x_step = detail::num_field(r, "x_step");
        const auto res = mistake_bound(spec, c.sources, c.environment.theta);
        const std::string label = r.value("label", "row" + std::to_string(k++));
        for (const auto& w : res.warnings) t.notes.push_back(label + ": " + w);
        t.rows.push_back({label, fmt(spec.epsilon), std::to_string(spec.stopping.burn_in),
                          std::to_string(spec.stopping.horizon), fmt(res.value), fmt(res.raw),
                          res.truncated ? "1" : "0"});
    }
    return t;
}

inline Table eval_bound(const std::string& fn, const json& doc) {
    if (fn == "omega") return eval_omega(doc);
    if (fn == "gamma") return eval_gamma(doc);
    if (fn == "eta-star") return eval_eta_star(doc);
    if (fn == "mistake-bound") return eval_mistake_bound(doc);
    fail(ErrorCode::invalid_argument, "unknown bound function: " + fn);
}

}  // namespace mpb
