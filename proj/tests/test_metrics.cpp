#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "safetune/experiment.hpp"
#include "safetune/metrics.hpp"

using namespace safetune;

namespace {

constexpr double kMdeg = std::numbers::pi / 180.0 / 1e3;  // rad per mdeg

TrajectoryRecord record(std::size_t n, double dt = 5e-4) {
    TrajectoryRecord tr;
    tr.dt = dt;
    tr.p_ref.assign(n, 0.0);
    tr.v_ref.assign(n, 0.0);
    tr.p.assign(n, 0.0);
    tr.v.assign(n, 0.0);
    tr.torque_cmd.assign(n, 0.0);
    tr.torque_applied.assign(n, 0.0);
    return tr;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("transform matches the naive DFT") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    std::vector<double> x(256);
    for (auto& v : x) v = nd(rng);
    const auto fast = forward_transform(x);
    const auto slow = oracle::naive_dft(x);
    REQUIRE(fast.size() == slow.size());
    double scale = 0.0;
    for (const auto& c : slow) scale = std::max(scale, std::abs(c));
    for (std::size_t k = 0; k < fast.size(); ++k) CHECK(std::abs(fast[k] - slow[k]) <= 1e-8 * scale);
}

TEST_CASE("q1 of a sinusoid at a bin centre") {
    const std::size_t n = 4096;
    TrajectoryRecord tr = record(n);
    const double df = 1.0 / (n * tr.dt);
    const std::size_t k = 100;  // about 48.8 Hz
    const double amp = 0.3;
    for (std::size_t i = 0; i < n; ++i)
        tr.torque_applied[i] = amp * std::sin(2.0 * std::numbers::pi * k * df * i * tr.dt) + 0.7;
    MetricsConfig mc{10.0, 100.0};
    CHECK(constraint_q1(tr, mc) == doctest::Approx(n * amp / 2.0).epsilon(1e-9));

    // shifting the whole series leaves q1 alone
    TrajectoryRecord shifted = tr;
    for (auto& t : shifted.torque_applied) t += 5.0;
    CHECK(constraint_q1(shifted, mc) == doctest::Approx(constraint_q1(tr, mc)).epsilon(1e-12));

    // outside the window
    MetricsConfig far{100.0, 200.0};
    CHECK(constraint_q1(tr, far) < 1e-6 * n * amp);
}

TEST_CASE("q1 of a constant torque is zero") {
    TrajectoryRecord tr = record(1024);
    for (auto& t : tr.torque_applied) t = 1.3;
    CHECK(constraint_q1(tr, MetricsConfig{10.0, 100.0}) < 1e-9);
}

TEST_CASE("q1 window validation") {
    TrajectoryRecord tr = record(1024);
    CHECK_THROWS_AS(constraint_q1(tr, MetricsConfig{0.0, 100.0}), ConfigError);
    CHECK_THROWS_AS(constraint_q1(tr, MetricsConfig{10.0, 5000.0}), ConfigError);
    CHECK_THROWS_AS(constraint_q1(tr, MetricsConfig{100.0, 100.5}), ConfigError);
}

TEST_CASE("cost and max error") {
    TrajectoryRecord tr = record(500);
    CHECK(cost_f(tr) == 0.0);
    CHECK(constraint_q2(tr) == 0.0);
    for (auto& p : tr.p) p = -1.0 * kMdeg;
    CHECK(cost_f(tr) == doctest::Approx(1.0).epsilon(1e-12));
    tr.p.assign(500, 0.0);
    tr.p[250] = 5.0 * kMdeg;
    CHECK(constraint_q2(tr) == doctest::Approx(5.0).epsilon(1e-12));

    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 1e-4);
    for (auto& p : tr.p) p = nd(rng);
    double s = 0.0;
    for (double p : tr.p) s += std::fabs(p) / kMdeg;
    CHECK(std::abs(cost_f(tr) - s / 500.0) <= 1e-12 * s / 500.0);
    CHECK(cost_f(tr) <= constraint_q2(tr));

    tr.aborted = true;
    CHECK(cost_f(tr) == kInf);
    CHECK(constraint_q2(tr) == kInf);
}

TEST_CASE("tau_m homogeneity and floor") {
    TrajectoryRecord tr = record(2048);
    CHECK(tau_inertia(tr) == doctest::Approx(std::log10(kTauFloor)));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (auto& v : tr.v) v = nd(rng);
    const double t1 = tau_inertia(tr);
    for (auto& v : tr.v) v *= 2.0;
    CHECK(tau_inertia(tr) - t1 == doctest::Approx(0.30103).epsilon(1e-5));

    // the two-sided mean agrees with the full naive spectrum
    const auto full = [&] {
        double s = 0.0;
        const std::size_t n = tr.v.size();
        for (std::size_t k = 0; k < n; ++k) {
            std::complex<double> acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / n;
                acc += tr.v[t] * std::complex<double>(std::cos(a), std::sin(a));
            }
            s += std::abs(acc);
        }
        return std::log10(s / n);
    }();
    CHECK(tau_inertia(tr) == doctest::Approx(full).epsilon(1e-9));
}

TEST_CASE("tau_m uses the feed-forward scaled reference") {
    TrajectoryRecord tr = record(1024);
    for (std::size_t k = 0; k < 1024; ++k) tr.v_ref[k] = std::sin(0.01 * k);
    tr.kff = 0.9;
    for (std::size_t k = 0; k < 1024; ++k) tr.v[k] = 0.9 * tr.v_ref[k];
    CHECK(tau_inertia(tr) == doctest::Approx(std::log10(kTauFloor)));
}

TEST_CASE("tau_b") {
    TrajectoryRecord tr = record(300);
    CHECK(tau_friction(tr) == 0.0);
    for (auto& t : tr.torque_applied) t = 0.42;
    CHECK(tau_friction(tr) == doctest::Approx(0.42));
}

TEST_CASE("episode metrics on a real episode") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/stationary.ini");
    const Reference ref = make_reference(cfg);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const EpisodeMetrics m = evaluate_episode(simulate({15.0, 0.05, 3.0}, cfg.plant, ref, s), cfg.metrics);
        CHECK(std::isfinite(m.f));
        CHECK(std::isfinite(m.q1));
        CHECK(m.f <= m.q2);
    }
}

TEST_CASE("tau_m separates nominal and doubled inertia at the seed") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/inertia-switch.ini");
    const Reference ref = make_reference(cfg);
    PlantConfig heavy = cfg.plant;
    heavy.m *= 2.0;
    std::vector<double> a, b;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const std::uint64_t seed = split_seed(17, Stream::plant_noise, k);
        a.push_back(tau_inertia(simulate({15.0, 0.05, 3.0}, cfg.plant, ref, seed)));
        b.push_back(tau_inertia(simulate({15.0, 0.05, 3.0}, heavy, ref, seed)));
    }
    const double ma = median(a), mb = median(b);
    MESSAGE("tau_m nominal " << ma << ", heavy " << mb);
    CHECK(std::abs(ma - mb) > cfg.task_half_width);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(a[k] - ma) < std::abs(a[k] - mb));
        CHECK(std::abs(b[k] - mb) < std::abs(b[k] - ma));
    }
}

TEST_CASE("tau_m bin assignment is stable across noise") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/inertia-switch.ini");
    const Reference ref = make_reference(cfg);
    for (const Point& x : {Point{15.0, 0.05, 3.0}, Point{50.0, 0.11, 1.0}}) {
        std::vector<double> t;
        for (std::uint64_t k = 0; k < 100; ++k)
            t.push_back(tau_inertia(simulate(x, cfg.plant, ref, split_seed(23, Stream::plant_noise, k))));
        const double c = median(t);
        const auto inside = std::count_if(t.begin(), t.end(), [&](double v) { return std::abs(v - c) <= cfg.task_half_width; });
        CHECK(inside >= 95);
    }
}

TEST_CASE("tau_b separates nominal and scaled damping at the seed") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/friction-switch.ini");
    const Reference ref = make_reference(cfg);
    PlantConfig rough = cfg.plant;
    rough.b *= cfg.scenario.friction_factor;
    std::vector<double> a, b;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const std::uint64_t seed = split_seed(29, Stream::plant_noise, k);
        a.push_back(tau_friction(simulate({15.0, 0.05, 3.0}, cfg.plant, ref, seed)));
        b.push_back(tau_friction(simulate({15.0, 0.05, 3.0}, rough, ref, seed)));
    }
    const double ma = median(a), mb = median(b);
    CHECK(std::abs(ma - mb) > 2.0 * cfg.task_half_width);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(std::abs(a[k] - ma) < cfg.task_half_width);
        CHECK(std::abs(b[k] - mb) < cfg.task_half_width);
    }
}
