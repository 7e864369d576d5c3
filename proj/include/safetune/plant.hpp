#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "safetune/common.hpp"

namespace safetune {

// f_c(p) = c1 + c2 p + c4 sin(2 pi p / c3 + c5)
struct Cogging {
    double c1 = 1.78e-3;
    double c2 = 0.0295;
    double c3 = 0.372;
    double c4 = 8.99e-3;
    double c5 = 0.11;

    double operator()(double p) const;
};

struct PlantConfig {
    double m = 0.0191;  // kg m^2
    double b = 30.08;   // kg m^2 / s
    Cogging cogging{};
    Cogging compensation{};  // controller's estimate
    double torque_noise_variance = 6.09e-3;  // Nm^2
    double torque_limit = 3.48;              // Nm
    double velocity_limit_rpm = 50.0;
    double dt = 1.25e-4;  // s
    // Controller scaling: T = Kv * velocity_gain_scale * (...), Ti in units of integral_time_unit s.
    double velocity_gain_scale = 1250.0;
    double integral_time_unit = 0.01;
    // Controller output reaches the motor this many samples later.
    std::size_t actuation_delay = 1;
    double kff = 1.0;

    void validate() const;
};

struct ReferenceProfile {
    double amplitude_deg = 2.0;
    double cruise_deg_s = 2.0;
    double accel_time = 0.2;  // s, each ramp
    double start_time = 0.2;  // s at rest before the move
    std::size_t samples = 16384;
};

struct Reference {
    std::vector<double> p;  // rad
    std::vector<double> v;  // rad/s
    double dt = 0.0;
};

// Trapezoidal point-to-point move; p is the running integral of v.
Reference make_reference(const ReferenceProfile& profile, const PlantConfig& cfg);

struct TrajectoryRecord {
    std::vector<double> p_ref, v_ref, p, v, torque_cmd, torque_applied;
    double dt = 0.0;
    double kff = 1.0;
    bool aborted = false;

    std::size_t size() const { return p.size(); }
};

struct PlantState {
    double p = 0.0;
    double v = 0.0;
};

// Exact zero-order-hold step of m v' = T - b v, p' = v.
PlantState zoh_step(PlantState s, double torque, double m, double b, double dt);

TrajectoryRecord simulate(const ControllerParams& x, const PlantConfig& cfg, const Reference& ref,
                          std::uint64_t seed);

enum class ScenarioKind { stationary, inertia_switch, damping_drift, kff_switch, friction_switch };

const char* to_string(ScenarioKind kind);
ScenarioKind scenario_from_string(const std::string& s);

struct Scenario {
    ScenarioKind kind = ScenarioKind::stationary;
    std::size_t switch_period = 100;  // inertia switch
    double inertia_factor = 2.0;
    double drift_horizon = 1000.0;  // b = b0 (1 + t / horizon)
    std::size_t kff_period = 50;
    std::vector<double> kff_sequence{1.0, 0.95, 1.05, 0.9, 1.1};
    std::size_t friction_switch_at = 100;
    double friction_factor = 1.66;
};

PlantConfig apply_scenario(const PlantConfig& base, const Scenario& scenario, std::size_t iteration);

// True when the scheduled plant parameters change at this iteration.
bool scenario_switches_at(const PlantConfig& base, const Scenario& scenario, std::size_t iteration);

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& traj);

}  // namespace safetune
