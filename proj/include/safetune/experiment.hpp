#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "safetune/baselines.hpp"
#include "safetune/goose.hpp"
#include "safetune/metrics.hpp"
#include "safetune/plant.hpp"

namespace safetune {

enum class TaskSource { none, tau_m, tau_b, kff, time };

const char* to_string(TaskSource s);
TaskSource task_source_from_string(const std::string& s);

struct ExperimentConfig {
    std::string scenario_name = "stationary";
    Scenario scenario;
    std::string method = "goose";  // goose | cbo
    std::size_t budget = 100;
    std::vector<std::uint64_t> seeds{1};
    bool task_model = true;
    bool reseed_on_switch = true;
    std::string output_dir = "out";
    std::string calibration_file;

    PlantConfig plant;
    ReferenceProfile reference;
    MetricsConfig metrics;
    Ranges domain{Interval{5.0, 50.0}, Interval{0.01, 0.11}, Interval{1.0, 10.0}};
    Point seed_controller{15.0, 0.05, 3.0};

    // GP
    Point lengthscales{30.0, 0.03, 3.0};
    double task_lengthscale = 0.5;
    double beta = 3.0;
    double temporal_epsilon = 1e-4;
    // All three models share one output transform. Signal stds, prior means,
    // noise variances and epsilon are in model units (log units under log).
    OutputTransform output_transform = OutputTransform::log;
    double signal_std_f = 1.0;
    // constraint prior std: absolute under log, fraction of kappa under identity
    double signal_std_q = 0.4;
    double signal_kappa_ratio = 0.385;
    // auto: log of the seed cost under log, 0 under identity
    std::optional<double> prior_mean_f;
    std::optional<double> noise_variance_f, noise_variance_q1, noise_variance_q2;
    double seed_f = 0.0;  // calibrated mean cost at the seed
    // log only: constraint prior mean at log kappa ("kappa") or at the log of
    // the calibrated seed mean ("seed")
    std::string constraint_prior = "kappa";
    std::vector<double> seed_q{0.0, 0.0};

    // safety
    bool kappa_auto = true;
    std::vector<double> kappa{kInf, kInf};
    double kappa_factor = 1.5;
    std::size_t calibration_episodes = 20;
    std::uint64_t calibration_seed = 0;
    std::optional<double> epsilon_q1, epsilon_q2;  // default 2 sigma_noise
    double eps_tol = 0.001;
    std::size_t window = 0;
    double rejection_radius = 0.16;
    std::size_t max_requeries = 5;
    std::size_t max_expander_steps = 10;
    double noise_margin = 0.0;  // in noise standard deviations

    TaskSource task_source = TaskSource::none;
    double task_half_width = 0.15;

    PsoConfig pso;
    CboConfig cbo;
    GridSpec grid_oracle;
    std::uint64_t grid_oracle_seed = 0;

    void validate() const;
};

// Defaults that depend on the scenario (task source, bin width, eps_tol,
// window, task lengthscale). Keys present in the file override them.
ExperimentConfig scenario_defaults(const std::string& scenario);

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(std::istream& in, const std::string& base_dir = ".");

struct Calibration {
    std::vector<double> kappa;
    double noise_variance_f = 0.0;
    double noise_variance_q1 = 0.0;
    double noise_variance_q2 = 0.0;
    // sample variances of log f, log q1, log q2
    double log_noise_variance_f = 0.0;
    double log_noise_variance_q1 = 0.0;
    double log_noise_variance_q2 = 0.0;
    double kappa_factor = 1.5;
    std::size_t episodes = 0;
    EpisodeMetrics seed_mean;
};

Calibration calibrate(const ExperimentConfig& cfg);
void write_calibration(std::ostream& os, const Calibration& cal);
Calibration read_calibration(const std::string& path);
// Fills kappa (auto mode), the seed cost and any noise variance not set
// explicitly (in the units of the configured output transform).
void apply_calibration(ExperimentConfig& cfg, const Calibration& cal);

struct IterationRow {
    std::size_t iter = 0;
    double scenario_time = 0.0;
    Point x{};
    double tau = 0.0;
    std::size_t bin = 0;
    EpisodeMetrics metrics;
    bool violated_q1 = false;
    bool violated_q2 = false;
    ActionKind kind = ActionKind::evaluate;
    ActionReason reason = ActionReason::suggestion;
    double incumbent_f = kInf;
};

struct RunLog {
    std::string method;
    std::string scenario;
    std::uint64_t seed = 0;
    std::vector<double> kappa;
    std::vector<IterationRow> rows;
    std::size_t bound_resets = 0;
    std::string grid_dump;  // final flags of the current bin, GoOSE only

    std::size_t violations() const;
    std::size_t stop_count() const;
    double best_feasible_f() const;
    // nullptr when every row violated
    const IterationRow* best_feasible_row() const;
};

struct RunHooks {
    std::function<void(const GooseState&, const IterationRow&)> after_iteration;
};

GooseState make_goose_state(const ExperimentConfig& cfg, std::uint64_t seed);
Reference make_reference(const ExperimentConfig& cfg);
double task_value(TaskSource source, const EpisodeMetrics& m, const PlantConfig& plant);

// Throws SimulationError carrying the iteration index on plant failures.
RunLog run_goose(const ExperimentConfig& cfg, std::uint64_t seed, const RunHooks& hooks = {});
RunLog run_cbo(const ExperimentConfig& cfg, std::uint64_t seed);
RunLog run_method(const ExperimentConfig& cfg, std::uint64_t seed);

GridOracleResult run_grid_oracle(const ExperimentConfig& cfg);

inline constexpr const char* kIterationsHeader = "# safetune iterations v1";
void write_iterations_csv(std::ostream& os, const RunLog& log);
nlohmann::json summarize(const RunLog& log);

}  // namespace safetune
