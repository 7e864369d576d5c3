#include "safetune/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "safetune/csv.hpp"
#include "safetune/rng.hpp"

namespace safetune {

double Cogging::operator()(double p) const {
    return c1 + c2 * p + c4 * std::sin(2.0 * std::numbers::pi * p / c3 + c5);
}

void PlantConfig::validate() const {
    if (!(m > 0.0) || !(b > 0.0) || !(dt > 0.0)) throw ConfigError("plant m, b and dt must be positive");
    if (!(torque_limit > 0.0) || !(velocity_limit_rpm > 0.0)) throw ConfigError("plant limits must be positive");
    if (!(torque_noise_variance >= 0.0)) throw ConfigError("torque noise variance must be nonnegative");
    if (!(velocity_gain_scale > 0.0) || !(integral_time_unit > 0.0))
        throw ConfigError("controller scaling must be positive");
}

Reference make_reference(const ReferenceProfile& prof, const PlantConfig& cfg) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double rpm_to_deg_s = 6.0;
    if (std::abs(prof.cruise_deg_s) > cfg.velocity_limit_rpm * rpm_to_deg_s)
        throw ConfigError("cruise velocity exceeds the velocity limit");
    if (prof.samples < 2) throw ConfigError("reference needs at least two samples");
    if (!(prof.accel_time > 0.0) || !(prof.cruise_deg_s > 0.0) || prof.start_time < 0.0)
        throw ConfigError("reference timing must be positive");

    Reference ref;
    ref.dt = cfg.dt;
    ref.p.assign(prof.samples, 0.0);
    ref.v.assign(prof.samples, 0.0);
    const double amp = std::abs(prof.amplitude_deg) * deg;
    if (amp == 0.0) return ref;
    const double sign = prof.amplitude_deg < 0.0 ? -1.0 : 1.0;

    const double acc = prof.cruise_deg_s * deg / prof.accel_time;
    double vpk = prof.cruise_deg_s * deg;
    double ta = prof.accel_time;
    double tc = amp / vpk - ta;
    if (tc < 0.0) {  // too short to reach cruise: triangular profile
        ta = std::sqrt(amp / acc);
        vpk = acc * ta;
        tc = 0.0;
    }
    const double t_end = 2.0 * ta + tc;
    if (prof.start_time + t_end > cfg.dt * static_cast<double>(prof.samples - 1))
        throw ConfigError("reference move does not fit in the episode");

    // closed-form position so that p(end) equals the amplitude exactly
    for (std::size_t k = 0; k < prof.samples; ++k) {
        const double t = static_cast<double>(k) * cfg.dt - prof.start_time;
        double v = 0.0, p = 0.0;
        if (t <= 0.0) {
        } else if (t < ta) {
            v = acc * t;
            p = 0.5 * acc * t * t;
        } else if (t < ta + tc) {
            v = vpk;
            p = 0.5 * vpk * ta + vpk * (t - ta);
        } else if (t < t_end) {
            const double r = t_end - t;
            v = acc * r;
            p = amp - 0.5 * acc * r * r;
        } else {
            p = amp;
        }
        ref.v[k] = sign * v;
        ref.p[k] = sign * p;
    }
    return ref;
}

PlantState zoh_step(PlantState s, double torque, double m, double b, double dt) {
    const double a = b / m;
    const double e = std::exp(-a * dt);
    const double g = -std::expm1(-a * dt) / a;  // (1 - e) / a
    PlantState n;
    n.p = s.p + g * s.v + torque / b * (dt - g);
    n.v = e * s.v + (1.0 - e) / b * torque;
    return n;
}

TrajectoryRecord simulate(const ControllerParams& x, const PlantConfig& cfg, const Reference& ref,
                          std::uint64_t seed) {
    cfg.validate();
    if (!(x[2] > 0.0)) throw ContractViolation("integral time must be positive");
    const std::size_t n = ref.p.size();
    TrajectoryRecord tr;
    tr.dt = cfg.dt;
    tr.kff = cfg.kff;
    tr.p_ref = ref.p;
    tr.v_ref = ref.v;
    tr.p.resize(n);
    tr.v.resize(n);
    tr.torque_cmd.resize(n);
    tr.torque_applied.resize(n);

    Rng rng(seed);
    boost::random::normal_distribution<double> noise(0.0, std::sqrt(cfg.torque_noise_variance));

    const double kp = x[0];
    const double kv = x[1] * cfg.velocity_gain_scale;
    const double ti = x[2] * cfg.integral_time_unit;
    const double lim = cfg.torque_limit;

    PlantState s;
    double integ = 0.0;
    // motor torques in flight; the drive starts out holding the compensation torque
    std::vector<double> pipeline(cfg.actuation_delay, std::clamp(cfg.compensation(s.p), -lim, lim));
    std::size_t head = 0;

    for (std::size_t k = 0; k < n; ++k) {
        tr.p[k] = s.p;
        tr.v[k] = s.v;
        const double ep = ref.p[k] - s.p;
        const double vcmd = kp * ep + cfg.kff * ref.v[k];
        const double ev = vcmd - s.v;
        const double integ_next = integ + ev * cfg.dt;
        const double tctrl = kv * (ev + integ_next / ti) + cfg.compensation(s.p);
        if (std::abs(tctrl) < lim) integ = integ_next;
        const double nk = cfg.torque_noise_variance > 0.0 ? noise(rng) : 0.0;
        const double motor = std::clamp(tctrl + nk, -lim, lim);

        double acting = motor;
        if (!pipeline.empty()) {
            acting = pipeline[head];
            pipeline[head] = motor;
            head = (head + 1) % pipeline.size();
        }
        tr.torque_cmd[k] = tctrl;
        tr.torque_applied[k] = acting;

        s = zoh_step(s, acting - cfg.cogging(s.p), cfg.m, cfg.b, cfg.dt);
        if (!std::isfinite(s.p) || !std::isfinite(s.v)) {
            tr.aborted = true;
            break;
        }
    }
    return tr;
}

const char* to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::stationary: return "stationary";
        case ScenarioKind::inertia_switch: return "inertia-switch";
        case ScenarioKind::damping_drift: return "damping-drift";
        case ScenarioKind::kff_switch: return "kff-switch";
        case ScenarioKind::friction_switch: return "friction-switch";
    }
    return "?";
}

ScenarioKind scenario_from_string(const std::string& s) {
    for (auto k : {ScenarioKind::stationary, ScenarioKind::inertia_switch, ScenarioKind::damping_drift,
                   ScenarioKind::kff_switch, ScenarioKind::friction_switch})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown scenario '" + s + "'");
}

PlantConfig apply_scenario(const PlantConfig& base, const Scenario& sc, std::size_t it) {
    PlantConfig c = base;
    switch (sc.kind) {
        case ScenarioKind::stationary: break;
        case ScenarioKind::inertia_switch:
            if (sc.switch_period == 0) throw ConfigError("switch period must be positive");
            if ((it / sc.switch_period) % 2 == 1) c.m = base.m * sc.inertia_factor;
            break;
        case ScenarioKind::damping_drift:
            c.b = base.b * (1.0 + static_cast<double>(it) / sc.drift_horizon);
            break;
        case ScenarioKind::kff_switch:
            if (sc.kff_period == 0 || sc.kff_sequence.empty()) throw ConfigError("kff schedule is empty");
            c.kff = sc.kff_sequence[std::min(it / sc.kff_period, sc.kff_sequence.size() - 1)];
            break;
        case ScenarioKind::friction_switch:
            if (it >= sc.friction_switch_at) c.b = base.b * sc.friction_factor;
            break;
    }
    return c;
}

bool scenario_switches_at(const PlantConfig& base, const Scenario& sc, std::size_t it) {
    if (it == 0) return false;
    switch (sc.kind) {
        case ScenarioKind::stationary:
        case ScenarioKind::damping_drift: return false;
        default: break;
    }
    const PlantConfig a = apply_scenario(base, sc, it - 1);
    const PlantConfig b = apply_scenario(base, sc, it);
    return a.m != b.m || a.b != b.b || a.kff != b.kff;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& tr) {
    os << "# safetune trajectory v1\n";
    os << "t,p_ref,v_ref,p,v,torque_cmd,torque_applied\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << format_number(static_cast<double>(k) * tr.dt) << ',' << format_number(tr.p_ref[k]) << ','
           << format_number(tr.v_ref[k]) << ',' << format_number(tr.p[k]) << ',' << format_number(tr.v[k]) << ','
           << format_number(tr.torque_cmd[k]) << ',' << format_number(tr.torque_applied[k]) << '\n';
    }
}

}  // namespace safetune
