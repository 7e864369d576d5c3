#include "safetune/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "safetune/csv.hpp"

namespace safetune {

namespace pt = boost::property_tree;

const char* to_string(TaskSource s) {
    switch (s) {
        case TaskSource::none: return "none";
        case TaskSource::tau_m: return "tau_m";
        case TaskSource::tau_b: return "tau_b";
        case TaskSource::kff: return "kff";
        case TaskSource::time: return "time";
    }
    return "?";
}

TaskSource task_source_from_string(const std::string& s) {
    for (auto t : {TaskSource::none, TaskSource::tau_m, TaskSource::tau_b, TaskSource::kff, TaskSource::time})
        if (s == to_string(t)) return t;
    throw ConfigError("unknown task source '" + s + "'");
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("seed list is empty");
    if (budget == 0) throw ConfigError("budget must be positive");
    if (method != "goose" && method != "cbo") throw ConfigError("method must be goose or cbo");
    plant.validate();
    for (std::size_t d = 0; d < kDims; ++d) {
        if (!(domain[d].lo <= domain[d].hi)) throw ConfigError("domain ranges must be ordered");
        if (seed_controller[d] < domain[d].lo || seed_controller[d] > domain[d].hi)
            throw ConfigError("safe seed lies outside the domain");
        if (!(lengthscales[d] > 0.0)) throw ConfigError("lengthscales must be positive");
    }
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (!(signal_std_f > 0.0) || !(signal_std_q > 0.0) || !(signal_kappa_ratio > 0.0))
        throw ConfigError("signal scales must be positive");
    if (constraint_prior != "kappa" && constraint_prior != "seed")
        throw ConfigError("constraint_prior must be kappa or seed");
    if (!(kappa_factor > 0.0)) throw ConfigError("kappa factor must be positive");
    if (!(eps_tol >= 0.0)) throw ConfigError("eps_tol must be nonnegative");
    if (!(noise_margin >= 0.0)) throw ConfigError("noise_margin must be nonnegative");
    if (calibration_episodes < 2) throw ConfigError("calibration needs at least two episodes");
    if (task_source == TaskSource::time && scenario.kind != ScenarioKind::damping_drift)
        spdlog::warn("time task source outside the drift scenario");
    pso.validate();
}

ExperimentConfig scenario_defaults(const std::string& scenario) {
    ExperimentConfig c;
    c.scenario_name = scenario;
    c.scenario.kind = scenario_from_string(scenario);
    switch (c.scenario.kind) {
        case ScenarioKind::stationary:
            c.task_source = TaskSource::none;
            c.eps_tol = 0.001;
            c.budget = 100;
            break;
        case ScenarioKind::inertia_switch:
            c.task_source = TaskSource::tau_m;
            c.task_half_width = 0.15;
            c.task_lengthscale = 0.5;
            c.eps_tol = 0.002;
            c.budget = 300;
            break;
        case ScenarioKind::damping_drift:
            c.task_source = TaskSource::time;
            c.eps_tol = 0.001;
            c.window = 30;
            c.budget = 300;
            break;
        case ScenarioKind::kff_switch:
            c.task_source = TaskSource::kff;
            c.task_lengthscale = 0.3;
            c.eps_tol = 0.001;
            c.budget = 250;
            break;
        case ScenarioKind::friction_switch:
            c.task_source = TaskSource::tau_b;
            c.task_half_width = 0.1;
            c.task_lengthscale = 5.0;
            c.eps_tol = 0.001;
            c.budget = 200;
            break;
    }
    return c;
}

namespace {

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    template <class T>
    void get(const std::string& key, T& out) {
        used_.insert(key);
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return;
        out = convert<T>(key, boost::trim_copy(*v));
    }
    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        used_.insert(key);
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return;
        const std::string s = boost::trim_copy(*v);
        if (s == "auto") {
            out.reset();
            return;
        }
        out = convert<T>(key, s);
    }

    void check_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty() && !body.data().empty())
                throw ConfigError("key '" + section + "' must live inside a section");
            for (const auto& [key, _] : body) {
                const std::string full = section + "." + key;
                if (!used_.count(full)) throw ConfigError("unknown config key '" + full + "'");
            }
        }
    }

private:
    template <class T>
    static T convert(const std::string& key, const std::string& s) {
        try {
            if constexpr (std::is_same_v<T, std::string>) {
                return s;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
                if (s == "false" || s == "0" || s == "no" || s == "off") return false;
                throw ConfigError("");
            } else if constexpr (std::is_same_v<T, double>) {
                std::size_t pos = 0;
                const double v = std::stod(s, &pos);
                if (pos != s.size()) throw ConfigError("");
                return v;
            } else if constexpr (std::is_unsigned_v<T>) {
                std::size_t pos = 0;
                if (!s.empty() && s[0] == '-') throw ConfigError("");
                const auto v = std::stoull(s, &pos);
                if (pos != s.size()) throw ConfigError("");
                return static_cast<T>(v);
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
                std::vector<std::string> parts;
                boost::split(parts, s, boost::is_any_of(","));
                std::vector<double> out;
                for (auto& p : parts) out.push_back(convert<double>(key, boost::trim_copy(p)));
                return out;
            } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
                // "1,2,5-8"
                std::vector<std::string> parts;
                boost::split(parts, s, boost::is_any_of(","));
                std::vector<std::uint64_t> out;
                for (auto& raw : parts) {
                    const std::string p = boost::trim_copy(raw);
                    const auto dash = p.find('-', 1);
                    if (dash == std::string::npos) {
                        out.push_back(convert<std::uint64_t>(key, p));
                    } else {
                        const auto a = convert<std::uint64_t>(key, p.substr(0, dash));
                        const auto b = convert<std::uint64_t>(key, p.substr(dash + 1));
                        if (b < a) throw ConfigError("");
                        for (auto i = a; i <= b; ++i) out.push_back(i);
                    }
                }
                return out;
            } else {
                static_assert(sizeof(T) == 0, "unsupported config type");
            }
        } catch (const std::exception&) {
            throw ConfigError("bad value '" + s + "' for " + key);
        }
    }

    const pt::ptree& tree_;
    std::set<std::string> used_;
};

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    Reader r(tree);
    std::string scenario = "stationary";
    r.get("experiment.scenario", scenario);
    ExperimentConfig c = scenario_defaults(scenario);

    r.get("experiment.method", c.method);
    r.get("experiment.budget", c.budget);
    r.get("experiment.seeds", c.seeds);
    r.get("experiment.task_model", c.task_model);
    r.get("experiment.reseed_on_switch", c.reseed_on_switch);
    r.get("experiment.output", c.output_dir);
    r.get("experiment.calibration", c.calibration_file);

    auto& p = c.plant;
    r.get("plant.m", p.m);
    r.get("plant.b", p.b);
    r.get("plant.torque_noise_variance", p.torque_noise_variance);
    r.get("plant.torque_limit", p.torque_limit);
    r.get("plant.velocity_limit_rpm", p.velocity_limit_rpm);
    r.get("plant.dt", p.dt);
    r.get("plant.velocity_gain_scale", p.velocity_gain_scale);
    r.get("plant.integral_time_unit", p.integral_time_unit);
    r.get("plant.actuation_delay", p.actuation_delay);
    r.get("plant.kff", p.kff);
    r.get("plant.cogging_c1", p.cogging.c1);
    r.get("plant.cogging_c2", p.cogging.c2);
    r.get("plant.cogging_c3", p.cogging.c3);
    r.get("plant.cogging_c4", p.cogging.c4);
    r.get("plant.cogging_c5", p.cogging.c5);
    p.compensation = p.cogging;
    double comp_scale = 1.0;
    r.get("plant.compensation_scale", comp_scale);
    p.compensation.c1 *= comp_scale;
    p.compensation.c2 *= comp_scale;
    p.compensation.c4 *= comp_scale;

    r.get("reference.amplitude_deg", c.reference.amplitude_deg);
    r.get("reference.cruise_deg_s", c.reference.cruise_deg_s);
    r.get("reference.accel_time", c.reference.accel_time);
    r.get("reference.start_time", c.reference.start_time);
    r.get("reference.samples", c.reference.samples);

    r.get("metrics.q1_window_lo", c.metrics.window_lo);
    r.get("metrics.q1_window_hi", c.metrics.window_hi);

    r.get("domain.kp_min", c.domain[0].lo);
    r.get("domain.kp_max", c.domain[0].hi);
    r.get("domain.kv_min", c.domain[1].lo);
    r.get("domain.kv_max", c.domain[1].hi);
    r.get("domain.ti_min", c.domain[2].lo);
    r.get("domain.ti_max", c.domain[2].hi);
    r.get("domain.seed_kp", c.seed_controller[0]);
    r.get("domain.seed_kv", c.seed_controller[1]);
    r.get("domain.seed_ti", c.seed_controller[2]);

    r.get("gp.lengthscale_kp", c.lengthscales[0]);
    r.get("gp.lengthscale_kv", c.lengthscales[1]);
    r.get("gp.lengthscale_ti", c.lengthscales[2]);
    r.get("gp.task_lengthscale", c.task_lengthscale);
    r.get("gp.beta", c.beta);
    r.get("gp.temporal_epsilon", c.temporal_epsilon);
    std::string transform = to_string(c.output_transform);
    r.get("gp.output_transform", transform);
    c.output_transform = output_transform_from_string(transform);
    r.get("gp.signal_std_f", c.signal_std_f);
    r.get("gp.signal_std_q", c.signal_std_q);
    r.get("gp.constraint_prior", c.constraint_prior);
    r.get("gp.signal_kappa_ratio", c.signal_kappa_ratio);
    r.get("gp.prior_mean_f", c.prior_mean_f);
    r.get("gp.noise_variance_f", c.noise_variance_f);
    r.get("gp.noise_variance_q1", c.noise_variance_q1);
    r.get("gp.noise_variance_q2", c.noise_variance_q2);

    std::string kappa_mode = "auto";
    r.get("safety.kappa_mode", kappa_mode);
    if (kappa_mode != "auto" && kappa_mode != "fixed") throw ConfigError("safety.kappa_mode must be auto or fixed");
    c.kappa_auto = kappa_mode == "auto";
    r.get("safety.kappa1", c.kappa[0]);
    r.get("safety.kappa2", c.kappa[1]);
    r.get("safety.kappa_factor", c.kappa_factor);
    r.get("safety.calibration_episodes", c.calibration_episodes);
    r.get("safety.calibration_seed", c.calibration_seed);
    r.get("safety.epsilon_q1", c.epsilon_q1);
    r.get("safety.epsilon_q2", c.epsilon_q2);
    r.get("safety.eps_tol", c.eps_tol);
    r.get("safety.window", c.window);
    r.get("safety.rejection_radius", c.rejection_radius);
    r.get("safety.max_requeries", c.max_requeries);
    r.get("safety.max_expander_steps", c.max_expander_steps);
    r.get("safety.noise_margin", c.noise_margin);

    std::string source = to_string(c.task_source);
    r.get("task.source", source);
    c.task_source = task_source_from_string(source);
    r.get("task.half_width", c.task_half_width);

    r.get("scenario.switch_period", c.scenario.switch_period);
    r.get("scenario.inertia_factor", c.scenario.inertia_factor);
    r.get("scenario.drift_horizon", c.scenario.drift_horizon);
    r.get("scenario.kff_period", c.scenario.kff_period);
    r.get("scenario.kff_sequence", c.scenario.kff_sequence);
    r.get("scenario.friction_switch_at", c.scenario.friction_switch_at);
    r.get("scenario.friction_factor", c.scenario.friction_factor);

    r.get("pso.particles", c.pso.particles);
    r.get("pso.iterations", c.pso.iterations);
    r.get("pso.inertia_start", c.pso.inertia_start);
    r.get("pso.inertia_end", c.pso.inertia_end);
    r.get("pso.velocity_clamp", c.pso.velocity_clamp);

    r.get("cbo.starts", c.cbo.starts);
    r.get("cbo.rounds", c.cbo.rounds);

    std::vector<double> counts;
    r.get("grid_oracle.counts", counts);
    if (!counts.empty()) {
        if (counts.size() != kDims) throw ConfigError("grid_oracle.counts needs three entries");
        for (std::size_t d = 0; d < kDims; ++d) {
            if (!(counts[d] >= 1.0) || counts[d] != std::floor(counts[d]))
                throw ConfigError("grid_oracle.counts must be positive integers");
            c.grid_oracle.counts[d] = static_cast<std::size_t>(counts[d]);
        }
    }
    r.get("grid_oracle.repeats", c.grid_oracle.repeats);
    r.get("grid_oracle.seed", c.grid_oracle_seed);
    c.grid_oracle.domain = c.domain;

    r.check_unknown();

    if (!c.calibration_file.empty() && std::filesystem::path(c.calibration_file).is_relative())
        c.calibration_file = (std::filesystem::path(base_dir) / c.calibration_file).string();
    if (!c.kappa_auto && (!std::isfinite(c.kappa[0]) || !std::isfinite(c.kappa[1])))
        throw ConfigError("fixed kappa mode needs safety.kappa1 and safety.kappa2");
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_config(in, std::filesystem::path(path).parent_path().string());
}

Reference make_reference(const ExperimentConfig& cfg) { return make_reference(cfg.reference, cfg.plant); }

Calibration calibrate(const ExperimentConfig& cfg) {
    const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, 0);
    const Reference ref = make_reference(cfg.reference, plant);
    const std::size_t n = cfg.calibration_episodes;
    std::vector<EpisodeMetrics> ms;
    for (std::size_t k = 0; k < n; ++k) {
        const auto tr = simulate(cfg.seed_controller, plant, ref, split_seed(cfg.calibration_seed, Stream::calibration, k));
        const auto m = evaluate_episode(tr, cfg.metrics);
        if (tr.aborted || !std::isfinite(m.f)) throw SimulationError("calibration episode aborted", k);
        ms.push_back(m);
    }
    auto stats = [&](auto get) {
        double mean = 0.0, mx = -kInf;
        for (const auto& m : ms) {
            mean += get(m);
            mx = std::max(mx, get(m));
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& m : ms) var += (get(m) - mean) * (get(m) - mean);
        var /= static_cast<double>(n - 1);
        return std::array<double, 3>{mean, var, mx};
    };
    const auto sf = stats([](const EpisodeMetrics& m) { return m.f; });
    const auto s1 = stats([](const EpisodeMetrics& m) { return m.q1; });
    const auto s2 = stats([](const EpisodeMetrics& m) { return m.q2; });
    const auto lf = stats([](const EpisodeMetrics& m) { return std::log(m.f); });
    const auto l1 = stats([](const EpisodeMetrics& m) { return std::log(m.q1); });
    const auto l2 = stats([](const EpisodeMetrics& m) { return std::log(m.q2); });
    const auto stm = stats([](const EpisodeMetrics& m) { return m.tau_m; });
    const auto stb = stats([](const EpisodeMetrics& m) { return m.tau_b; });

    Calibration cal;
    cal.kappa_factor = cfg.kappa_factor;
    cal.episodes = n;
    cal.kappa = {cfg.kappa_factor * s1[2], cfg.kappa_factor * s2[2]};
    cal.noise_variance_f = sf[1];
    cal.noise_variance_q1 = s1[1];
    cal.noise_variance_q2 = s2[1];
    cal.log_noise_variance_f = lf[1];
    cal.log_noise_variance_q1 = l1[1];
    cal.log_noise_variance_q2 = l2[1];
    cal.seed_mean = {sf[0], s1[0], s2[0], stm[0], stb[0]};
    return cal;
}

void write_calibration(std::ostream& os, const Calibration& cal) {
    os << "# safetune calibration v1\n";
    os << "[calibration]\n";
    os << "kappa1 = " << format_number(cal.kappa.at(0)) << '\n';
    os << "kappa2 = " << format_number(cal.kappa.at(1)) << '\n';
    os << "kappa_factor = " << format_number(cal.kappa_factor) << '\n';
    os << "episodes = " << cal.episodes << '\n';
    os << "noise_variance_f = " << format_number(cal.noise_variance_f) << '\n';
    os << "noise_variance_q1 = " << format_number(cal.noise_variance_q1) << '\n';
    os << "noise_variance_q2 = " << format_number(cal.noise_variance_q2) << '\n';
    os << "log_noise_variance_f = " << format_number(cal.log_noise_variance_f) << '\n';
    os << "log_noise_variance_q1 = " << format_number(cal.log_noise_variance_q1) << '\n';
    os << "log_noise_variance_q2 = " << format_number(cal.log_noise_variance_q2) << '\n';
    os << "seed_f = " << format_number(cal.seed_mean.f) << '\n';
    os << "seed_q1 = " << format_number(cal.seed_mean.q1) << '\n';
    os << "seed_q2 = " << format_number(cal.seed_mean.q2) << '\n';
    os << "seed_tau_m = " << format_number(cal.seed_mean.tau_m) << '\n';
    os << "seed_tau_b = " << format_number(cal.seed_mean.tau_b) << '\n';
}

Calibration read_calibration(const std::string& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("calibration file: ") + e.what());
    }
    auto num = [&](const char* key) {
        auto v = tree.get_optional<std::string>(std::string("calibration.") + key);
        if (!v) throw ConfigError(std::string("calibration file lacks ") + key);
        try {
            return std::stod(*v);
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad calibration value for ") + key);
        }
    };
    Calibration cal;
    cal.kappa = {num("kappa1"), num("kappa2")};
    cal.kappa_factor = num("kappa_factor");
    cal.episodes = static_cast<std::size_t>(num("episodes"));
    cal.noise_variance_f = num("noise_variance_f");
    cal.noise_variance_q1 = num("noise_variance_q1");
    cal.noise_variance_q2 = num("noise_variance_q2");
    cal.log_noise_variance_f = num("log_noise_variance_f");
    cal.log_noise_variance_q1 = num("log_noise_variance_q1");
    cal.log_noise_variance_q2 = num("log_noise_variance_q2");
    cal.seed_mean = {num("seed_f"), num("seed_q1"), num("seed_q2"), num("seed_tau_m"), num("seed_tau_b")};
    return cal;
}

void apply_calibration(ExperimentConfig& cfg, const Calibration& cal) {
    if (cfg.kappa_auto) cfg.kappa = cal.kappa;
    cfg.seed_f = cal.seed_mean.f;
    cfg.seed_q = {cal.seed_mean.q1, cal.seed_mean.q2};
    const bool log = cfg.output_transform == OutputTransform::log;
    if (!cfg.noise_variance_f) cfg.noise_variance_f = log ? cal.log_noise_variance_f : cal.noise_variance_f;
    if (!cfg.noise_variance_q1) cfg.noise_variance_q1 = log ? cal.log_noise_variance_q1 : cal.noise_variance_q1;
    if (!cfg.noise_variance_q2) cfg.noise_variance_q2 = log ? cal.log_noise_variance_q2 : cal.noise_variance_q2;
}

namespace {

void require_calibrated(const ExperimentConfig& cfg) {
    if (!cfg.noise_variance_f || !cfg.noise_variance_q1 || !cfg.noise_variance_q2 || !std::isfinite(cfg.kappa[0]) ||
        !std::isfinite(cfg.kappa[1]))
        throw ConfigError("kappa and noise variances are unset; run calibration first");
}

KernelMode kernel_mode_for(const ExperimentConfig& cfg) {
    if (!cfg.task_model) return KernelMode::se_ard;
    switch (cfg.task_source) {
        case TaskSource::none: return KernelMode::se_ard;
        case TaskSource::time: return KernelMode::multitask_temporal;
        default: return KernelMode::multitask_product;
    }
}

TaskSpec task_spec_for(const ExperimentConfig& cfg) {
    TaskSpec t;
    t.half_width = cfg.task_half_width;
    if (!cfg.task_model) {
        t.mode = TaskMode::none;
        return t;
    }
    switch (cfg.task_source) {
        case TaskSource::none: t.mode = TaskMode::none; break;
        case TaskSource::time: t.mode = TaskMode::temporal; break;
        case TaskSource::kff: t.mode = TaskMode::exact; break;
        default: t.mode = TaskMode::binned; break;
    }
    return t;
}

GpModel make_model(const ExperimentConfig& cfg, double signal_std, double noise_variance, double prior_mean) {
    KernelConfig k;
    k.lengthscales = cfg.lengthscales;
    k.task_lengthscale = cfg.task_lengthscale;
    k.signal_variance = signal_std * signal_std;
    k.temporal_epsilon = cfg.temporal_epsilon;
    k.mode = kernel_mode_for(cfg);
    // a zero sample variance would make the likelihood degenerate
    const double nv = std::max(noise_variance, 1e-12 * k.signal_variance);
    return GpModel(GaussianProcess(k, nv, prior_mean), cfg.beta, k.mode != KernelMode::multitask_temporal,
                   cfg.output_transform);
}

GpModel objective_model(const ExperimentConfig& cfg) {
    double mean = 0.0;
    if (cfg.prior_mean_f)
        mean = *cfg.prior_mean_f;
    else if (cfg.output_transform == OutputTransform::log && cfg.seed_f > 0.0)
        mean = std::log(cfg.seed_f);
    return make_model(cfg, cfg.signal_std_f, *cfg.noise_variance_f, mean);
}

std::vector<GpModel> constraint_models(const ExperimentConfig& cfg) {
    std::vector<GpModel> q;
    const double nv[2] = {*cfg.noise_variance_q1, *cfg.noise_variance_q2};
    const bool at_seed = cfg.constraint_prior == "seed";
    for (std::size_t j = 0; j < 2; ++j) {
        if (at_seed && !(cfg.seed_q[j] > 0.0)) throw ConfigError("seed prior needs a calibrated seed mean");
        if (cfg.output_transform == OutputTransform::log)
            q.push_back(make_model(cfg, cfg.signal_std_q, nv[j], std::log(at_seed ? cfg.seed_q[j] : cfg.kappa[j])));
        else
            q.push_back(make_model(cfg, cfg.signal_kappa_ratio * cfg.kappa[j], nv[j], 0.0));
    }
    return q;
}

IterationRow make_row(const ExperimentConfig& cfg, std::size_t it, const Reference& ref, const Point& x, double tau,
                      const EpisodeMetrics& m) {
    IterationRow row;
    row.iter = it;
    row.scenario_time = static_cast<double>(it) * static_cast<double>(ref.p.size()) * ref.dt;
    row.x = x;
    row.tau = tau;
    row.metrics = m;
    row.violated_q1 = !(m.q1 <= cfg.kappa[0]);
    row.violated_q2 = !(m.q2 <= cfg.kappa[1]);
    return row;
}

}  // namespace

double task_value(TaskSource source, const EpisodeMetrics& m, const PlantConfig& plant) {
    switch (source) {
        case TaskSource::tau_m: return m.tau_m;
        case TaskSource::tau_b: return m.tau_b;
        case TaskSource::kff: return plant.kff;
        case TaskSource::time:
        case TaskSource::none: break;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

GooseState make_goose_state(const ExperimentConfig& cfg, std::uint64_t seed) {
    require_calibrated(cfg);
    GooseConfig g;
    g.expansion.kappa = cfg.kappa;
    g.expansion.epsilon = {cfg.epsilon_q1 ? *cfg.epsilon_q1 : 2.0 * std::sqrt(*cfg.noise_variance_q1),
                           cfg.epsilon_q2 ? *cfg.epsilon_q2 : 2.0 * std::sqrt(*cfg.noise_variance_q2)};
    g.eps_tol = cfg.eps_tol;
    g.window = cfg.window;
    g.pso = cfg.pso;
    g.rejection_radius = cfg.rejection_radius;
    g.max_requeries = cfg.max_requeries;
    g.max_expander_steps = cfg.max_expander_steps;
    g.noise_margin = cfg.noise_margin;
    g.seed = cfg.seed_controller;
    return GooseState(build_grid(cfg.domain, cfg.lengthscales),
                      objective_model(cfg), constraint_models(cfg), g, task_spec_for(cfg), seed);
}

RunLog run_goose(const ExperimentConfig& cfg, std::uint64_t seed, const RunHooks& hooks) {
    GooseState st = make_goose_state(cfg, seed);
    const Reference ref = make_reference(cfg);
    RunLog log;
    log.method = "goose";
    log.scenario = cfg.scenario_name;
    log.seed = seed;
    log.kappa = cfg.kappa;
    for (std::size_t it = 0; it < cfg.budget; ++it) {
        const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, it);
        st.set_time(it);
        GooseAction a;
        if (cfg.reseed_on_switch && scenario_switches_at(cfg.plant, cfg.scenario, it))
            a = {ActionKind::evaluate, ActionReason::bootstrap, cfg.seed_controller};
        else
            a = st.step();

        TrajectoryRecord tr;
        EpisodeMetrics m;
        try {
            tr = simulate(a.x, plant, ref, split_seed(seed, Stream::plant_noise, it));
            m = evaluate_episode(tr, cfg.metrics);
        } catch (const ContractViolation& e) {
            throw SimulationError(e.what(), it);
        }
        const double tau_raw = task_value(cfg.task_source, m, plant);
        const double tau_used = cfg.task_model ? tau_raw : std::numeric_limits<double>::quiet_NaN();
        if (a.kind == ActionKind::apply_incumbent)
            st.record_monitoring(m, tau_used);
        else
            st.record_evaluation(a, m, tau_used);

        IterationRow row = make_row(cfg, it, ref, a.x, tau_raw, m);
        row.bin = st.current_bin().id;
        row.kind = a.kind;
        row.reason = a.reason;
        row.incumbent_f = st.current_bin().incumbent ? st.current_bin().incumbent->f : kInf;
        log.rows.push_back(row);
        if (hooks.after_iteration) hooks.after_iteration(st, row);
    }
    if (st.current_bin().seeded) {
        std::ostringstream os;
        SafeSets sets = st.current_sets();
        for (std::size_t j = 0; j < sets.bounds.size(); ++j)
            for (auto& b : sets.bounds[j]) b = {st.constraints()[j].decode(b.lo), st.constraints()[j].decode(b.hi)};
        write_grid_csv(os, st.grid(), sets, st.current_bin().id);
        log.grid_dump = os.str();
    }
    log.bound_resets = st.bound_resets();
    return log;
}

RunLog run_cbo(const ExperimentConfig& cfg, std::uint64_t seed) {
    require_calibrated(cfg);
    ExperimentConfig plain = cfg;
    plain.task_model = false;
    GpModel f = objective_model(plain);
    std::vector<GpModel> q = constraint_models(plain);
    const std::vector<const GaussianProcess*> qp{&q[0].gp(), &q[1].gp()};
    const std::vector<double> model_kappa{q[0].encode(cfg.kappa[0]), q[1].encode(cfg.kappa[1])};
    Rng rng = make_rng(seed, Stream::cbo);
    const Reference ref = make_reference(cfg);

    RunLog log;
    log.method = "cbo";
    log.scenario = cfg.scenario_name;
    log.seed = seed;
    log.kappa = cfg.kappa;
    double best = kInf;
    for (std::size_t it = 0; it < cfg.budget; ++it) {
        const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, it);
        const bool first = it == 0;
        const Point x = first ? cfg.seed_controller : cbo_step(f.gp(), qp, model_kappa, cfg.domain, cfg.cbo, rng);
        TrajectoryRecord tr;
        EpisodeMetrics m;
        try {
            tr = simulate(x, plant, ref, split_seed(seed, Stream::plant_noise, it));
            m = evaluate_episode(tr, cfg.metrics);
        } catch (const ContractViolation& e) {
            throw SimulationError(e.what(), it);
        }
        if (std::isfinite(m.f) && std::isfinite(m.q1) && std::isfinite(m.q2)) {
            const ExtendedInput in{x, 0.0};
            f.add_observation(in, m.f);
            q[0].add_observation(in, m.q1);
            q[1].add_observation(in, m.q2);
        }
        IterationRow row = make_row(cfg, it, ref, x, task_value(cfg.task_source, m, plant), m);
        row.kind = ActionKind::evaluate;
        row.reason = first ? ActionReason::bootstrap : ActionReason::suggestion;
        if (!row.violated_q1 && !row.violated_q2) best = std::min(best, m.f);
        row.incumbent_f = best;
        log.rows.push_back(row);
    }
    return log;
}

RunLog run_method(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.method == "cbo" ? run_cbo(cfg, seed) : run_goose(cfg, seed);
}

GridOracleResult run_grid_oracle(const ExperimentConfig& cfg) {
    if (!std::isfinite(cfg.kappa[0]) || !std::isfinite(cfg.kappa[1]))
        throw ConfigError("grid oracle needs kappa; run calibration first");
    const PlantConfig plant = apply_scenario(cfg.plant, cfg.scenario, 0);
    GridSpec spec = cfg.grid_oracle;
    spec.domain = cfg.domain;
    return grid_search(spec, plant, make_reference(cfg.reference, plant), cfg.metrics, cfg.kappa, cfg.grid_oracle_seed);
}

std::size_t RunLog::violations() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const IterationRow& r) { return r.violated_q1 || r.violated_q2; }));
}

std::size_t RunLog::stop_count() const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const IterationRow& r) { return r.reason == ActionReason::stop; }));
}

const IterationRow* RunLog::best_feasible_row() const {
    const IterationRow* best = nullptr;
    for (const auto& r : rows)
        if (!r.violated_q1 && !r.violated_q2 && (!best || r.metrics.f < best->metrics.f)) best = &r;
    return best;
}

double RunLog::best_feasible_f() const {
    const IterationRow* r = best_feasible_row();
    return r ? r->metrics.f : kInf;
}

void write_iterations_csv(std::ostream& os, const RunLog& log) {
    os << kIterationsHeader << '\n';
    os << "iter,scenario_time,Kp,Kv,Ti,tau,bin_id,f,q1,q2,violated_q1,violated_q2,action_kind,incumbent_f\n";
    for (const auto& r : log.rows) {
        os << r.iter << ',' << format_number(r.scenario_time) << ',' << format_number(r.x[0]) << ','
           << format_number(r.x[1]) << ',' << format_number(r.x[2]) << ',' << format_number(r.tau) << ',' << r.bin
           << ',' << format_number(r.metrics.f) << ',' << format_number(r.metrics.q1) << ','
           << format_number(r.metrics.q2) << ',' << int(r.violated_q1) << ',' << int(r.violated_q2) << ','
           << to_string(r.kind) << ',' << format_number(r.incumbent_f) << '\n';
    }
}

nlohmann::json summarize(const RunLog& log) {
    using nlohmann::json;
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json j;
    j["method"] = log.method;
    j["scenario"] = log.scenario;
    j["seed"] = log.seed;
    j["iterations"] = log.rows.size();
    j["kappa"] = log.kappa;
    j["violations"] = log.violations();
    std::size_t v1 = 0, v2 = 0, evals = 0, exhausted = 0;
    double max1 = 0.0, max2 = 0.0;
    std::map<std::size_t, double> best_per_bin;
    for (const auto& r : log.rows) {
        v1 += r.violated_q1;
        v2 += r.violated_q2;
        if (r.violated_q1) max1 = std::max(max1, r.metrics.q1 - log.kappa[0]);
        if (r.violated_q2) max2 = std::max(max2, r.metrics.q2 - log.kappa[1]);
        if (r.kind != ActionKind::apply_incumbent) ++evals;
        if (r.reason == ActionReason::exhausted) ++exhausted;
        auto [it, inserted] = best_per_bin.try_emplace(r.bin, kInf);
        if (!r.violated_q1 && !r.violated_q2) it->second = std::min(it->second, r.metrics.f);
    }
    j["violations_q1"] = v1;
    j["violations_q2"] = v2;
    j["max_violation_q1"] = max1;
    j["max_violation_q2"] = max2;
    j["evaluations"] = evals;
    j["stopping_rule_fired"] = log.stop_count();
    j["exhausted"] = exhausted;
    j["bound_resets"] = log.bound_resets;
    const double best = log.best_feasible_f();
    j["best_feasible_f"] = num(best);
    if (const IterationRow* b = log.best_feasible_row())
        j["best_feasible_x"] = {b->x[0], b->x[1], b->x[2]};
    else
        j["best_feasible_x"] = nullptr;
    // first iteration whose feasible cost is within 1% of the run's best
    json conv = nullptr;
    for (const auto& r : log.rows)
        if (!r.violated_q1 && !r.violated_q2 && std::isfinite(best) && r.metrics.f <= 1.01 * best) {
            conv = r.iter;
            break;
        }
    j["iterations_to_convergence"] = conv;
    json bins = json::array();
    for (const auto& [bin, f] : best_per_bin) bins.push_back({{"bin_id", bin}, {"best_feasible_f", num(f)}});
    j["bins"] = bins;
    return j;
}

}  // namespace safetune
