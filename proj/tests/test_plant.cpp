#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "safetune/plant.hpp"
#include "safetune/rng.hpp"

using namespace safetune;

namespace {

// classic RK4 on m v' = T - b v, p' = v
PlantState rk4(PlantState s, double T, double m, double b, double dt, int steps) {
    const double h = dt / steps;
    auto f = [&](const PlantState& x) { return PlantState{x.v, (T - b * x.v) / m}; };
    for (int i = 0; i < steps; ++i) {
        const PlantState k1 = f(s);
        const PlantState k2 = f({s.p + 0.5 * h * k1.p, s.v + 0.5 * h * k1.v});
        const PlantState k3 = f({s.p + 0.5 * h * k2.p, s.v + 0.5 * h * k2.v});
        const PlantState k4 = f({s.p + h * k3.p, s.v + h * k3.v});
        s.p += h / 6.0 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p);
        s.v += h / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
    }
    return s;
}

PlantConfig quiet_plant() {
    PlantConfig c;
    c.dt = 5e-4;
    c.velocity_gain_scale = 430;
    c.torque_noise_variance = 0.0;
    return c;
}

ReferenceProfile small_move() {
    ReferenceProfile r;
    r.amplitude_deg = 0.05;
    r.cruise_deg_s = 0.05;
    r.samples = 4096;
    return r;
}

}  // namespace

TEST_CASE("DC gain") {
    const double m = 0.0191, b = 30.08;
    PlantState s;
    for (int k = 0; k < 20000; ++k) s = zoh_step(s, 1.0, m, b, 1e-3);
    CHECK(s.v == doctest::Approx(0.033245).epsilon(1e-4));
    CHECK(s.v == doctest::Approx(1.0 / b).epsilon(1e-12));
}

TEST_CASE("ZOH step against a fine RK4 integration") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        const PlantState s{u(rng), u(rng)};
        const double T = 3.0 * u(rng), dt = 5e-4 * (1.5 + u(rng));
        const double m = 0.0191 * (1.5 + u(rng)), b = 30.08 * (1.5 + u(rng));
        const PlantState a = zoh_step(s, T, m, b, dt), o = rk4(s, T, m, b, dt, 1000);
        CHECK(std::abs(a.p - o.p) <= 1e-8 * std::max(1.0, std::abs(o.p)));
        CHECK(std::abs(a.v - o.v) <= 1e-8 * std::max(1.0, std::abs(o.v)));
    }
}

TEST_CASE("ZOH first-order limit") {
    const double m = 0.0191, b = 30.08, dt = 1e-9;
    const PlantState s{0.2, 0.7};
    const PlantState n = zoh_step(s, 1.5, m, b, dt);
    CHECK((n.v - s.v) / dt == doctest::Approx((1.5 - b * s.v) / m).epsilon(1e-5));
    CHECK((n.p - s.p) / dt == doctest::Approx(s.v).epsilon(1e-5));
}

TEST_CASE("zero torque only dissipates") {
    PlantState s{0.0, 2.0};
    double e = 0.5 * 0.0191 * s.v * s.v;
    for (int k = 0; k < 500; ++k) {
        s = zoh_step(s, 0.0, 0.0191, 30.08, 5e-4);
        const double e2 = 0.5 * 0.0191 * s.v * s.v;
        CHECK(e2 <= e);
        e = e2;
    }
}

TEST_CASE("perfect compensation at rest stays at rest") {
    PlantConfig c = quiet_plant();
    ReferenceProfile r = small_move();
    r.amplitude_deg = 0.0;
    const Reference ref = make_reference(r, c);
    for (std::size_t delay : {0, 1, 2}) {
        c.actuation_delay = delay;
        const TrajectoryRecord tr = simulate({15.0, 0.05, 3.0}, c, ref, 1);
        for (std::size_t k = 0; k < tr.size(); ++k) {
            CHECK(tr.p[k] == 0.0);
            CHECK(tr.v[k] == 0.0);
        }
    }
}

TEST_CASE("reference profile") {
    PlantConfig c = quiet_plant();
    ReferenceProfile r = small_move();
    r.amplitude_deg = 0.0;
    for (double v : make_reference(r, c).p) CHECK(v == 0.0);

    r = small_move();
    const Reference ref = make_reference(r, c);
    const double amp = 0.05 * std::numbers::pi / 180.0;
    CHECK(std::abs(ref.p.back() - amp) < 1e-9);
    double area = 0.0;
    for (std::size_t k = 1; k < ref.v.size(); ++k) area += 0.5 * (ref.v[k] + ref.v[k - 1]) * ref.dt;
    CHECK(area == doctest::Approx(amp).epsilon(1e-3));
    for (std::size_t k = 1; k < ref.p.size(); ++k) CHECK(ref.p[k] >= ref.p[k - 1]);

    r.samples = 100;
    CHECK_THROWS_AS(make_reference(r, c), ConfigError);
    r = small_move();
    r.cruise_deg_s = 1e4;
    CHECK_THROWS_AS(make_reference(r, c), ConfigError);
}

TEST_CASE("torque saturation and determinism") {
    PlantConfig c = quiet_plant();
    c.torque_noise_variance = 6.09e-3;
    c.torque_limit = 0.05;
    const Reference ref = make_reference(small_move(), c);
    const TrajectoryRecord a = simulate({50.0, 0.11, 1.0}, c, ref, 42);
    const TrajectoryRecord b = simulate({50.0, 0.11, 1.0}, c, ref, 42);
    for (double t : a.torque_applied) CHECK(std::abs(t) <= c.torque_limit);
    CHECK(a.p == b.p);
    CHECK(a.torque_applied == b.torque_applied);
    CHECK(a.p_ref.size() == a.size());
    CHECK(a.torque_cmd.size() == a.size());
    const TrajectoryRecord d = simulate({50.0, 0.11, 1.0}, c, ref, 43);
    CHECK(d.torque_applied != a.torque_applied);
}

TEST_CASE("plant validation") {
    PlantConfig c = quiet_plant();
    c.m = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = quiet_plant();
    const Reference ref = make_reference(small_move(), c);
    CHECK_THROWS_AS(simulate({15.0, 0.05, 0.0}, c, ref, 1), ContractViolation);
}

TEST_CASE("scenario schedules") {
    PlantConfig base;
    Scenario s;
    s.kind = ScenarioKind::inertia_switch;
    CHECK(apply_scenario(base, s, 0).m == 0.0191);
    CHECK(apply_scenario(base, s, 99).m == 0.0191);
    CHECK(apply_scenario(base, s, 100).m == 0.0382);
    CHECK(apply_scenario(base, s, 200).m == 0.0191);
    CHECK(scenario_switches_at(base, s, 100));
    CHECK_FALSE(scenario_switches_at(base, s, 101));
    CHECK_FALSE(scenario_switches_at(base, s, 0));

    s.kind = ScenarioKind::damping_drift;
    CHECK(apply_scenario(base, s, 1000).b == doctest::Approx(60.16));
    CHECK(apply_scenario(base, s, 0).b == 30.08);
    CHECK_FALSE(scenario_switches_at(base, s, 500));

    s.kind = ScenarioKind::kff_switch;
    const double want[] = {1.0, 0.95, 1.05, 0.9, 1.1};
    for (int i = 0; i < 5; ++i) CHECK(apply_scenario(base, s, 50 * i + 10).kff == want[i]);
    CHECK(apply_scenario(base, s, 400).kff == 1.1);

    s.kind = ScenarioKind::friction_switch;
    CHECK(apply_scenario(base, s, 99).b == 30.08);
    CHECK(apply_scenario(base, s, 100).b == doctest::Approx(30.08 * 1.66));

    for (auto k : {ScenarioKind::stationary, ScenarioKind::inertia_switch, ScenarioKind::damping_drift,
                   ScenarioKind::kff_switch, ScenarioKind::friction_switch})
        CHECK(scenario_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(scenario_from_string("inertia_switch"), ConfigError);
}

TEST_CASE("rng streams are independent and reproducible") {
    CHECK(split_seed(1, Stream::pso) == split_seed(1, Stream::pso));
    CHECK(split_seed(1, Stream::pso) != split_seed(1, Stream::cbo));
    CHECK(split_seed(1, Stream::plant_noise, 0) != split_seed(1, Stream::plant_noise, 1));
    CHECK(split_seed(1, Stream::pso) != split_seed(2, Stream::pso));
}
