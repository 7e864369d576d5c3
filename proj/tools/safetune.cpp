// safetune: calibrate, run, grid, plot, compare.
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "safetune/experiment.hpp"
#include "safetune/plot.hpp"

namespace fs = std::filesystem;
using namespace safetune;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
    std::string config;
    std::string scenario;
    std::string seeds;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> budget;
    std::string out;
    std::string calibration;
    std::string method;
    std::string run_dir;
    bool no_task_model = false;
    std::vector<double> x;
    std::size_t repeats = 20;
};

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

ExperimentConfig load(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config " + o.config);
    std::stringstream text;
    text << in.rdbuf();
    std::string body = text.str();
    // --scenario swaps the scenario before defaults are applied
    if (!o.scenario.empty()) body = "[experiment]\nscenario = " + o.scenario + "\n" + body;
    std::istringstream is(body);
    ExperimentConfig cfg;
    try {
        cfg = parse_config(is, fs::path(o.config).parent_path().string());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (!o.seeds.empty()) {
        std::istringstream s("[experiment]\nseeds = " + o.seeds + "\n");
        cfg.seeds = parse_config(s).seeds;
    }
    if (o.seed) cfg.seeds = {*o.seed};
    if (o.budget) cfg.budget = *o.budget;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.calibration.empty()) cfg.calibration_file = o.calibration;
    if (!o.method.empty()) cfg.method = o.method;
    if (o.no_task_model) cfg.task_model = false;
    cfg.validate();
    return cfg;
}

Calibration calibration_for(ExperimentConfig& cfg) {
    Calibration cal = cfg.calibration_file.empty() ? calibrate(cfg) : read_calibration(cfg.calibration_file);
    apply_calibration(cfg, cal);
    return cal;
}

void write_run(const fs::path& dir, const RunLog& log) {
    auto os = open_out(dir / "iterations.csv");
    write_iterations_csv(os, log);
}

int cmd_calibrate(const Options& o) {
    ExperimentConfig cfg = load(o);
    const Calibration cal = calibrate(cfg);
    const fs::path out = o.out.empty() ? fs::path(cfg.output_dir) / "calibration.ini" : fs::path(o.out);
    auto os = open_out(out);
    write_calibration(os, cal);
    std::cout << "kappa1 = " << cal.kappa[0] << ", kappa2 = " << cal.kappa[1] << " -> " << out.string() << '\n';
    return 0;
}

nlohmann::json run_seeds(ExperimentConfig cfg, const std::string& method, const fs::path& out) {
    cfg.method = method;
    nlohmann::json runs = nlohmann::json::array();
    for (auto seed : cfg.seeds) {
        spdlog::info("{} {} seed {}", method, cfg.scenario_name, seed);
        const RunLog log = run_method(cfg, seed);
        const fs::path dir = out / (method + "_seed" + std::to_string(seed));
        write_run(dir, log);
        if (!log.grid_dump.empty()) {
            auto gs = open_out(dir / "grid.csv");
            gs << log.grid_dump;
        }
        runs.push_back(summarize(log));
    }
    return runs;
}

void write_summary(const fs::path& out, const ExperimentConfig& cfg, const nlohmann::json& runs) {
    nlohmann::json s;
    s["schema"] = "safetune summary v1";
    s["scenario"] = cfg.scenario_name;
    s["budget"] = cfg.budget;
    s["kappa"] = cfg.kappa;
    s["runs"] = runs;
    std::size_t total = 0;
    for (const auto& r : runs) total += r["violations"].get<std::size_t>();
    s["total_violations"] = total;
    auto os = open_out(out / "summary.json");
    os << s.dump(2) << '\n';
}

int cmd_run(const Options& o) {
    ExperimentConfig cfg = load(o);
    const Calibration cal = calibration_for(cfg);
    const fs::path out(cfg.output_dir);
    {
        auto os = open_out(out / "calibration.ini");
        Calibration used = cal;
        used.kappa = cfg.kappa;
        write_calibration(os, used);
    }
    const auto runs = run_seeds(cfg, cfg.method, out);
    write_summary(out, cfg, runs);
    std::size_t total = 0;
    for (const auto& r : runs) total += r["violations"].get<std::size_t>();
    std::cout << cfg.seeds.size() << " run(s) of " << cfg.method << " on " << cfg.scenario_name
              << ", violations: " << total << " -> " << out.string() << '\n';
    return 0;
}

int cmd_grid(const Options& o) {
    ExperimentConfig cfg = load(o);
    calibration_for(cfg);
    const GridOracleResult r = run_grid_oracle(cfg);
    const fs::path out = fs::path(cfg.output_dir) / "grid_oracle.csv";
    auto os = open_out(out);
    write_grid_oracle_csv(os, r);
    const Point& b = r.cells[r.best];
    std::cout << "feasible " << r.feasible_count() << "/" << r.cells.size() << ", best (" << b[0] << ", " << b[1] << ", "
              << b[2] << ") f = " << r.best_f << " -> " << out.string() << '\n';
    return 0;
}

int cmd_evaluate(const Options& o) {
    ExperimentConfig cfg = load(o);
    calibration_for(cfg);
    if (o.x.size() != kDims) throw ConfigError("--x needs Kp,Kv,Ti");
    if (o.repeats == 0) throw ConfigError("--repeats must be positive");
    const Point x{o.x[0], o.x[1], o.x[2]};
    const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, 0);
    const EpisodeMetrics m = mean_metrics(x, plant, make_reference(cfg.reference, plant), cfg.metrics, o.repeats,
                                          cfg.grid_oracle_seed, std::uint64_t{1} << 40);
    nlohmann::json j{{"x", o.x}, {"repeats", o.repeats}, {"f", m.f},       {"q1", m.q1},
                     {"q2", m.q2}, {"tau_m", m.tau_m}, {"tau_b", m.tau_b}, {"feasible", m.q1 <= cfg.kappa[0] && m.q2 <= cfg.kappa[1]}};
    std::cout << j.dump() << '\n';
    return 0;
}

std::vector<double> kappa_from(const fs::path& dir, const std::string& calibration) {
    const fs::path cal = calibration.empty() ? dir / "calibration.ini" : fs::path(calibration);
    if (!fs::exists(cal)) {
        spdlog::warn("no calibration file at {}, plotting without kappa lines", cal.string());
        return {};
    }
    return read_calibration(cal.string()).kappa;
}

int cmd_plot(const Options& o) {
    if (o.run_dir.empty()) throw ConfigError("--run is required");
    const fs::path dir(o.run_dir);
    const fs::path out = o.out.empty() ? dir : fs::path(o.out);
    const auto kappa = kappa_from(dir, o.calibration);
    std::map<std::string, std::vector<RunSeries>> by_seed;
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const fs::path csv = entry.path() / "iterations.csv";
        if (!entry.is_directory() || !fs::exists(csv)) continue;
        const std::string name = entry.path().filename().string();
        RunSeries run{name, read_csv(csv.string())};
        auto os = open_out(out / (name + ".svg"));
        plot_run(os, run, kappa);
        const auto pos = name.find("_seed");
        if (pos != std::string::npos) by_seed[name.substr(pos + 1)].push_back(std::move(run));
        ++n;
    }
    if (n == 0) throw ConfigError("no run directories with iterations.csv under " + dir.string());
    for (auto& [seed, runs] : by_seed) {
        if (runs.size() < 2) continue;
        std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
        auto os = open_out(out / ("compare_" + seed + ".svg"));
        plot_comparison(os, runs, kappa);
    }
    std::cout << "plotted " << n << " run(s) -> " << out.string() << '\n';
    return 0;
}

int cmd_compare(const Options& o) {
    ExperimentConfig cfg = load(o);
    const Calibration cal = calibration_for(cfg);
    const fs::path out(cfg.output_dir);
    {
        auto os = open_out(out / "calibration.ini");
        Calibration used = cal;
        used.kappa = cfg.kappa;
        write_calibration(os, used);
    }
    nlohmann::json runs = nlohmann::json::array();
    for (const char* method : {"goose", "cbo"})
        for (auto& r : run_seeds(cfg, method, out)) runs.push_back(r);
    write_summary(out, cfg, runs);
    Options p = o;
    p.run_dir = out.string();
    p.out = out.string();
    p.calibration.clear();
    cmd_plot(p);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safe multi-task controller tuning on a simulated axis drive"};
    app.require_subcommand(1);
    Options o;
    std::string log_level = "warn";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

    auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "experiment config (INI)")->required();
        c->add_option("--scenario", o.scenario, "override the scenario");
        c->add_option("--out", o.out, "output directory (file for calibrate)");
        c->add_option("--calibration", o.calibration, "calibration file to use instead of recalibrating");
    };
    auto* calibrate_cmd = app.add_subcommand("calibrate", "calibrate kappa and noise variances at the safe seed");
    common(calibrate_cmd);
    auto* run_cmd = app.add_subcommand("run", "run the configured method for every seed");
    common(run_cmd);
    auto* compare_cmd = app.add_subcommand("compare", "run GoOSE and CBO on the same seeds and plot both");
    common(compare_cmd);
    for (auto* c : {run_cmd, compare_cmd}) {
        c->add_option("--seeds", o.seeds, "seed list, e.g. 1,2,5-8");
        c->add_option("--seed", o.seed, "single seed");
        c->add_option("--budget", o.budget, "iterations per run");
    }
    run_cmd->add_option("--method", o.method, "goose or cbo");
    run_cmd->add_flag("--no-task-model", o.no_task_model, "disable the task kernel (ablation)");
    auto* grid_cmd = app.add_subcommand("grid", "exhaustive grid oracle");
    common(grid_cmd);
    auto* eval_cmd = app.add_subcommand("evaluate", "mean metrics of one controller over repeated episodes");
    common(eval_cmd);
    eval_cmd->add_option("--x", o.x, "controller Kp,Kv,Ti")->required()->delimiter(',');
    eval_cmd->add_option("--repeats", o.repeats, "episodes to average");
    auto* plot_cmd = app.add_subcommand("plot", "SVG figures from a run directory");
    plot_cmd->add_option("--run", o.run_dir, "directory written by run or compare")->required();
    plot_cmd->add_option("--out", o.out, "figure directory (defaults to the run directory)");
    plot_cmd->add_option("--calibration", o.calibration, "calibration file with kappa");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*calibrate_cmd) return cmd_calibrate(o);
        if (*run_cmd) return cmd_run(o);
        if (*grid_cmd) return cmd_grid(o);
        if (*plot_cmd) return cmd_plot(o);
        if (*compare_cmd) return cmd_compare(o);
        if (*eval_cmd) return cmd_evaluate(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SimulationError& e) {
        std::cerr << "runtime failure at iteration " << e.iteration << ": " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
