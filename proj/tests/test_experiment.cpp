#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "safetune/experiment.hpp"
#include "safetune/plot.hpp"

using namespace safetune;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = SAFETUNE_SOURCE_DIR "/configs/";

ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

// a stationary config with calibration applied, kept short
ExperimentConfig short_stationary(std::size_t budget) {
    ExperimentConfig cfg = load_config(kConfigs + "stationary.ini");
    cfg.budget = budget;
    cfg.calibration_episodes = 8;
    cfg.pso.iterations = 15;
    apply_calibration(cfg, calibrate(cfg));
    return cfg;
}

}  // namespace

TEST_CASE("shipped configs load") {
    for (const char* name : {"stationary", "inertia-switch", "damping-drift", "kff-switch", "friction-switch"}) {
        const ExperimentConfig c = load_config(kConfigs + name + ".ini");
        CHECK(c.scenario_name == name);
        CHECK(c.seeds.size() == 10);
    }
    CHECK(load_config(kConfigs + "inertia-switch.ini").task_source == TaskSource::tau_m);
    CHECK(load_config(kConfigs + "damping-drift.ini").task_source == TaskSource::time);
    CHECK(load_config(kConfigs + "stationary.ini").task_source == TaskSource::none);
}

TEST_CASE("scenario defaults") {
    CHECK(scenario_defaults("stationary").task_source == TaskSource::none);
    CHECK(scenario_defaults("inertia-switch").task_source == TaskSource::tau_m);
    CHECK(scenario_defaults("damping-drift").task_source == TaskSource::time);
    CHECK(scenario_defaults("damping-drift").window == 30);
    CHECK(scenario_defaults("kff-switch").task_source == TaskSource::kff);
    CHECK(scenario_defaults("friction-switch").task_source == TaskSource::tau_b);
    CHECK_THROWS_AS(scenario_defaults("nope"), ConfigError);

    const ExperimentConfig c = parse("[experiment]\nscenario = inertia-switch\n[safety]\neps_tol = 0.01\n");
    CHECK(c.eps_tol == 0.01);
    CHECK(c.task_source == TaskSource::tau_m);
    CHECK(c.budget == 300);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse("[experiment]\nbudgett = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nbudget = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nbudget = ten\n"), ConfigError);
    CHECK_THROWS_AS(parse("[experiment]\nmethod = random\n"), ConfigError);
    CHECK_THROWS_AS(parse("[domain]\nseed_kp = 60\n"), ConfigError);
    CHECK_THROWS_AS(parse("[gp]\nbeta = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[safety]\nkappa_mode = fixed\n"), ConfigError);
    CHECK_THROWS_AS(parse("budget = 3\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);

    const ExperimentConfig c = parse("[experiment]\nseeds = 1-3,7\n");
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3, 7});
    CHECK_THROWS_AS(parse("[experiment]\nseeds = 5-2\n"), ConfigError);
}

TEST_CASE("task sources") {
    for (auto s : {TaskSource::none, TaskSource::tau_m, TaskSource::tau_b, TaskSource::kff, TaskSource::time})
        CHECK(task_source_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(task_source_from_string("mass"), ConfigError);
}

TEST_CASE("calibration is reproducible and matches its episodes") {
    ExperimentConfig cfg = load_config(kConfigs + "stationary.ini");
    cfg.calibration_episodes = 6;
    const Calibration a = calibrate(cfg), b = calibrate(cfg);
    CHECK(a.kappa == b.kappa);
    CHECK(a.noise_variance_q1 == b.noise_variance_q1);

    const Reference ref = make_reference(cfg);
    double max_q1 = 0.0, max_q2 = 0.0, mean_f = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
        const auto m = evaluate_episode(
            simulate(cfg.seed_controller, cfg.plant, ref, split_seed(cfg.calibration_seed, Stream::calibration, k)),
            cfg.metrics);
        max_q1 = std::max(max_q1, m.q1);
        max_q2 = std::max(max_q2, m.q2);
        mean_f += m.f / 6.0;
    }
    CHECK(a.kappa[0] == doctest::Approx(1.5 * max_q1).epsilon(1e-12));
    CHECK(a.kappa[1] == doctest::Approx(1.5 * max_q2).epsilon(1e-12));
    CHECK(a.seed_mean.f == doctest::Approx(mean_f).epsilon(1e-12));

    // round trip through the file format
    const std::string path = "calibration_roundtrip_test.ini";
    {
        std::ofstream os(path);
        write_calibration(os, a);
    }
    const Calibration back = read_calibration(path);
    fs::remove(path);
    CHECK(back.kappa == a.kappa);
    CHECK(back.log_noise_variance_q2 == a.log_noise_variance_q2);
    CHECK(back.episodes == 6);

    apply_calibration(cfg, a);
    CHECK(cfg.kappa == a.kappa);
    CHECK(cfg.seed_f == doctest::Approx(a.seed_mean.f));
}

TEST_CASE("iteration csv is byte-identical for the same seed") {
    const ExperimentConfig cfg = short_stationary(8);
    const RunLog a = run_goose(cfg, 3), b = run_goose(cfg, 3);
    std::ostringstream sa, sb;
    write_iterations_csv(sa, a);
    write_iterations_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().rfind(kIterationsHeader, 0) == 0);
    CHECK(a.rows.size() == 8);

    const RunLog c = run_goose(cfg, 4);
    std::ostringstream sc;
    write_iterations_csv(sc, c);
    CHECK(sc.str() != sa.str());

    const nlohmann::json s = summarize(a);
    CHECK(s["violations"].get<std::size_t>() == a.violations());
    CHECK(s.contains("stopping_rule_fired"));
    CHECK(s.contains("best_feasible_f"));
}

TEST_CASE("run log counters") {
    RunLog log;
    CHECK(log.best_feasible_row() == nullptr);
    CHECK(log.best_feasible_f() == kInf);
    IterationRow r;
    r.metrics.f = 0.4;
    log.rows.push_back(r);
    r.metrics.f = 0.2;
    r.violated_q1 = true;
    log.rows.push_back(r);
    r.metrics.f = 0.3;
    r.violated_q1 = false;
    r.kind = ActionKind::apply_incumbent;
    r.reason = ActionReason::stop;
    log.rows.push_back(r);
    CHECK(log.violations() == 1);
    CHECK(log.stop_count() == 1);
    CHECK(log.best_feasible_f() == 0.3);
    CHECK(log.best_feasible_row() == &log.rows[2]);
}

TEST_CASE("running per-bin minimum") {
    const std::vector<double> f{3, 2, 5, 1, 4, 0.5};
    const std::vector<std::size_t> bin{0, 0, 1, 1, 0, 1};
    const std::vector<char> ok{1, 1, 1, 0, 1, 1};
    const auto m = running_bin_minimum(f, bin, ok);
    CHECK(m[0] == 3);
    CHECK(m[1] == 2);
    CHECK(m[2] == 5);
    CHECK(m[3] == 5);  // infeasible row ignored
    CHECK(m[4] == 2);
    CHECK(m[5] == 0.5);
    CHECK(std::isnan(running_bin_minimum({1.0}, {0}, {0})[0]));
    CHECK(running_bin_minimum({}, {}, {}).empty());
}

TEST_CASE("plots render from a run table") {
    const ExperimentConfig cfg = short_stationary(5);
    const RunLog log = run_goose(cfg, 1);
    const std::string path = "plot_test_iterations.csv";
    {
        std::ofstream os(path);
        write_iterations_csv(os, log);
    }
    RunSeries run{"goose", read_csv(path)};
    fs::remove(path);
    std::ostringstream svg;
    plot_run(svg, run, cfg.kappa);
    CHECK(svg.str().find("<svg") != std::string::npos);
    CHECK(svg.str().find("</svg>") != std::string::npos);
    std::ostringstream cmp;
    plot_comparison(cmp, {run, run}, cfg.kappa);
    CHECK(cmp.str().find("</svg>") != std::string::npos);
}

#ifdef SAFETUNE_CLI
TEST_CASE("command line exit codes") {
    const std::string exe = SAFETUNE_CLI;
    auto code = [](const std::string& cmd) {
        const int rc = std::system((cmd + " > cli_test.log 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    CHECK(code(exe + " --help") == 0);
    CHECK(code(exe + " calibrate --config " + kConfigs + "stationary.ini --out cli_test_cal.ini") == 0);
    CHECK(fs::exists("cli_test_cal.ini"));
    CHECK(code(exe + " calibrate --config /nonexistent.ini") == 2);
    CHECK(code(exe + " run --config " + kConfigs + "stationary.ini --method random") == 2);
    CHECK(code(exe + " bogus") == 2);
    {
        std::ofstream blocker("cli_test_blocker");
        blocker << "x";
    }
    CHECK(code(exe + " calibrate --config " + kConfigs + "stationary.ini --out cli_test_blocker/cal.ini") == 3);
    fs::remove("cli_test_blocker");
    fs::remove("cli_test_cal.ini");
    fs::remove("cli_test.log");
}
#endif
