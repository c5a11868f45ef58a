// mpb: simulation, sweeps, figure tables, bound evaluation and the session server.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpb/bounds_eval.hpp"
#include "mpb/config.hpp"
#include "mpb/figures.hpp"
#include "mpb/montecarlo.hpp"
#include "mpb/service.hpp"

using namespace mpb;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_values(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        for (std::string tok; std::getline(ss, tok, ',');) {
            if (tok.empty()) continue;
            // lo:hi:step expands to an inclusive range.
            if (std::count(tok.begin(), tok.end(), ':') == 2) {
                const auto a = tok.find(':'), b = tok.rfind(':');
                const double lo = std::stod(tok.substr(0, a));
                const double hi = std::stod(tok.substr(a + 1, b - a - 1));
                const double step = std::stod(tok.substr(b + 1));
                if (!(step > 0.0)) fail(ErrorCode::invalid_argument, "range step must be positive: " + tok);
                for (double v : presets::steps(lo, hi, step)) out.push_back(v);
            } else {
                std::size_t used = 0;
                out.push_back(std::stod(tok, &used));
                if (used != tok.size()) fail(ErrorCode::invalid_argument, "bad value: " + tok);
            }
        }
    }
    if (out.empty()) fail(ErrorCode::invalid_argument, "--values is empty");
    return out;
}

void write_runs(const MetricsFrame& f, const fs::path& dir) {
    std::ofstream out(dir / "runs.tsv", std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io_error, "cannot write runs.tsv");
    const std::size_t A = f.points.front().theta.size();
    std::vector<std::string> head = {"label", "rep", "seed", "ok", "stop_time", "chosen_arm", "forced",
                                     "mistake", "earnings", "payoff"};
    for (std::size_t d = 0; d < A; ++d) head.push_back("pulls_" + std::to_string(d));
    detail::write_tsv_row(out, head);
    for (const auto& pt : f.points)
        for (const auto& r : pt.reps) {
            std::vector<std::string> cells = {pt.label,
                                              std::to_string(r.index),
                                              std::to_string(r.seed),
                                              r.ok ? "1" : "0",
                                              std::to_string(r.stop_time),
                                              std::to_string(r.chosen_arm),
                                              r.forced ? "1" : "0",
                                              r.mistake ? "1" : "0",
                                              fmt(r.earnings),
                                              r.payoff ? fmt(*r.payoff) : "nan"};
            for (std::size_t d = 0; d < A; ++d)
                cells.push_back(d < r.pulls.size() ? std::to_string(r.pulls[d]) : "0");
            detail::write_tsv_row(out, cells);
        }
}

void report(const std::vector<fs::path>& files) {
    for (const auto& p : files) std::cout << p.string() << '\n';
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-prior Gaussian bandit experiments"};
    app.require_subcommand(1);

    std::size_t reps = 1000;
    std::uint64_t seed = 0;
    bool seed_set = false;
    unsigned threads = 0;
    std::uint64_t thin = 1;
    double tau_c = 0.1;
    std::string config_path, out_dir;

    auto* sim = app.add_subcommand("simulate", "Replicate one configuration");
    sim->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
    auto* sim_seed = sim->add_option("--seed", seed, "Master seed (defaults to the config seed)");
    sim->add_option("--out", out_dir, "Output directory")->required();
    sim->add_option("--threads", threads, "Worker threads (0: all cores)");
    sim->add_option("--thin", thin, "Record every k-th stage")->check(CLI::PositiveNumber);
    sim->add_option("--tau", tau_c, "Exceedance threshold for the stage table");

    std::string param;
    std::vector<std::string> values;
    auto* sweep = app.add_subcommand("sweep", "Replicate a configuration over a parameter grid");
    sweep->add_option("--config", config_path, "Base experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param,
                      "epsilon | floor | h | burn_in | beta | gamma_A | horizon | discount | cost | nu:<o> | "
                      "shift:<o> | reverse:<o>")
        ->required();
    sweep->add_option("--values", values, "Comma list or lo:hi:step ranges")->required();
    sweep->add_option("--reps", reps, "Replications per point")->check(CLI::PositiveNumber);
    auto* sweep_seed = sweep->add_option("--seed", seed, "Master seed (defaults to the config seed)");
    sweep->add_option("--out", out_dir, "Output directory")->required();
    sweep->add_option("--threads", threads, "Worker threads (0: all cores)");
    sweep->add_option("--thin", thin, "Record every k-th stage")->check(CLI::PositiveNumber);
    sweep->add_option("--tau", tau_c, "Exceedance threshold for the stage table");
    bool no_series = false;
    sweep->add_flag("--no-series", no_series, "Skip per-stage tables");

    std::string which;
    FigureOptions fopt;
    auto* fig = app.add_subcommand("figure", "Reproduce a figure's data table from built-in presets");
    fig->add_option("--which", which, "Figure")
        ->required()
        ->check(CLI::IsMember({"weights", "beliefs", "concentration", "priors", "stopping", "bias", "earnings",
                               "payoff", "all"}));
    fig->add_option("--out", out_dir, "Output directory")->required();
    fig->add_option("--reps", fopt.reps, "Replications per point")->check(CLI::PositiveNumber);
    fig->add_option("--seed", fopt.seed, "Master seed");
    fig->add_option("--beliefs-bias", fopt.beliefs_bias, "Stubborn bias for the beliefs figure (0.3 or 0.5)");
    fig->add_option("--threads", fopt.threads, "Worker threads (0: all cores)");

    auto* bounds = app.add_subcommand("bounds", "Bound functions");
    bounds->require_subcommand(1);
    auto* beval = bounds->add_subcommand("eval", "Evaluate a bound function into a table");
    std::string fn, params_path, table_out;
    beval->add_option("--fn", fn, "Function")
        ->required()
        ->check(CLI::IsMember({"omega", "gamma", "eta-star", "mistake-bound"}));
    beval->add_option("--params", params_path, "Parameter document (JSON)")->required()->check(CLI::ExistingFile);
    beval->add_option("--out", table_out, "Write the table here instead of stdout");

    std::string addr = "127.0.0.1:8080", data_dir, static_dir;
    auto* serve = app.add_subcommand("serve", "Run the session HTTP service");
    serve->add_option("--addr", addr, "HOST:PORT");
    serve->add_option("--data", data_dir, "Session log directory")->required();
    serve->add_option("--static", static_dir, "Serve console assets from this directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim || *sweep) {
            const bool is_sim = sim->parsed();
            seed_set = is_sim ? sim_seed->count() > 0 : sweep_seed->count() > 0;
            const ExperimentConfig base = load_config(config_path);
            SweepSpec s;
            s.base = base;
            s.reps = reps;
            s.seed = seed_set ? seed : base.seed;
            s.threads = threads;
            s.thin = thin;
            s.tau_c = tau_c;
            if (is_sim) {
                s.param = "config";
                s.column = "point";
                s.grid = {{"config", 0.0, base}};
            } else {
                s.param = param;
                s.stage_series = !no_series;
                s.grid = make_grid(base, param, parse_values(values));
            }
            const MetricsFrame f = run_sweep(s);
            auto files = emit_results(f, out_dir);
            write_runs(f, out_dir);
            files.push_back(fs::path(out_dir) / "runs.tsv");
            report(files);
        } else if (*fig) {
            std::vector<Figure> figs;
            if (which == "all")
                figs.assign(std::begin(kAllFigures), std::end(kAllFigures));
            else
                figs.push_back(figure_from_string(which));
            for (Figure f : figs) {
                const FigurePreset p = figure_preset(f, fopt);
                const fs::path dir = figs.size() > 1 ? fs::path(out_dir) / std::string(to_string(f)) : fs::path(out_dir);
                std::cerr << "figure " << to_string(f) << ": " << p.sweep.grid.size() << " points x "
                          << p.sweep.reps << " reps\n";
                report(emit_results(run_sweep(p.sweep), dir, p.tables));
            }
        } else if (beval->parsed()) {
            std::ifstream in(params_path);
            json doc;
            try {
                doc = json::parse(in);
            } catch (const json::parse_error& e) {
                fail(ErrorCode::invalid_argument, std::string("params: ") + e.what());
            }
            const Table t = eval_bound(fn, doc);
            if (table_out.empty()) {
                write_table(std::cout, t);
            } else {
                std::ofstream out(table_out, std::ios::binary | std::ios::trunc);
                if (!out) fail(ErrorCode::io_error, "cannot write " + table_out);
                write_table(out, t);
            }
        } else if (*serve) {
            const auto colon = addr.rfind(':');
            if (colon == std::string::npos) fail(ErrorCode::invalid_argument, "--addr must be HOST:PORT");
            const std::string host = addr.substr(0, colon);
            const int port = std::stoi(addr.substr(colon + 1));
            SessionManager sessions(data_dir);
            Service service(sessions);
            if (!static_dir.empty() && !service.mount_static(static_dir))
                fail(ErrorCode::invalid_argument, "cannot serve static files from " + static_dir);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << host << ':' << port << " with " << sessions.ids().size()
                      << " session(s) loaded from " << data_dir << '\n';
            if (!service.listen(host, port)) fail(ErrorCode::io_error, "cannot listen on " + addr);
            g_service = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        for (const auto& f : e.fields()) std::cerr << "  " << f.field << ": " << f.message << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
