#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "oracles.hpp"
#include "safetune/baselines.hpp"
#include "safetune/experiment.hpp"

using namespace safetune;

namespace {

const Ranges kDomain{Interval{5.0, 50.0}, Interval{0.01, 0.11}, Interval{1.0, 10.0}};

double ei_by_quadrature(double mean, double sd, double best) {
    boost::math::normal_distribution<double> n(mean, sd);
    auto f = [&](double y) { return (best - y) * boost::math::pdf(n, y); };
    // integrand vanishes for y > best
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, mean - 12.0 * sd, best, 10, 1e-12);
}

}  // namespace

TEST_CASE("grid oracle cells") {
    GridSpec s;
    CHECK(s.size() == 550);
    CHECK(s.cell(0) == Point{5.0, 0.01, 1.0});
    CHECK(s.cell(549) == Point{50.0, 0.11, 10.0});
    const Point p1 = s.cell(1);
    CHECK(p1[2] == doctest::Approx(2.0));
    CHECK(p1[0] == 5.0);
    const Point p10 = s.cell(10);
    CHECK(p10[1] == doctest::Approx(0.02));
    CHECK(p10[2] == 1.0);
    const Point p110 = s.cell(110);
    CHECK(p110[0] == doctest::Approx(16.25));
}

TEST_CASE("select_best matches a brute-force scan") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> small(0, 5);
    for (int rep = 0; rep < 200; ++rep) {
        GridOracleResult r;
        const std::size_t n = 30;
        r.cells.resize(n);
        r.mean.resize(n);
        r.feasible.resize(n);
        for (std::size_t c = 0; c < n; ++c) {
            r.mean[c].f = small(rng);  // lots of ties
            r.feasible[c] = small(rng) < 2;
        }
        std::size_t want = n;
        for (std::size_t c = 0; c < n; ++c)
            if (r.feasible[c] && (want == n || r.mean[c].f < r.mean[want].f)) want = c;
        if (want == n) {
            CHECK_THROWS_AS(select_best(r), EmptyFeasibleSet);
            continue;
        }
        select_best(r);
        CHECK(r.best == want);
        CHECK(r.best_f == r.mean[want].f);
    }
}

TEST_CASE("expected improvement against quadrature") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 100; ++rep) {
        const double mean = u(rng), sd = 0.05 + std::abs(u(rng)), best = u(rng);
        CHECK(expected_improvement(mean, sd, best) == doctest::Approx(ei_by_quadrature(mean, sd, best)).epsilon(1e-8));
    }
    CHECK(expected_improvement(1.0, 0.0, 3.0) == 2.0);
    CHECK(expected_improvement(3.0, 0.0, 1.0) == 0.0);
    CHECK(expected_improvement(0.0, 1.0, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
}

TEST_CASE("constrained acquisition is EI times the feasibility probabilities") {
    std::mt19937_64 rng(12);
    KernelConfig k;
    k.lengthscales = {30.0, 0.03, 3.0};
    GaussianProcess f(k, 0.01), q1(k, 0.02), q2(k, 0.03);
    std::vector<oracle::Dataset> data(3);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 12; ++i) {
        const ExtendedInput in{oracle::random_point(rng, kDomain), 0.0};
        const double a = nd(rng), b = nd(rng), c = nd(rng);
        f.add_observation(in, a);
        q1.add_observation(in, b);
        q2.add_observation(in, c);
        data[0].x.push_back(in), data[0].y.push_back(a);
        data[1].x.push_back(in), data[1].y.push_back(b);
        data[2].x.push_back(in), data[2].y.push_back(c);
    }
    const std::vector<double> kappa{0.3, -0.2};
    const std::vector<const GaussianProcess*> qs{&q1, &q2};
    std::vector<Point> ps;
    for (int i = 0; i < 50; ++i) ps.push_back(oracle::random_point(rng, kDomain));
    std::vector<double> got;
    cbo_acquisition(ps, f, qs, kappa, -0.5, got);
    const double noise[3] = {0.01, 0.02, 0.03};
    boost::math::normal_distribution<double> std_normal;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        double want = 1.0;
        for (int m = 0; m < 3; ++m) {
            const auto [mu, var] = oracle::posterior(data[m], {ps[i], 0.0}, k, noise[m], 0.0);
            const double sd = std::sqrt(var);
            want *= m == 0 ? ei_by_quadrature(mu, sd, -0.5) : boost::math::cdf(std_normal, (kappa[m - 1] - mu) / sd);
        }
        CHECK(got[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("CBO incumbent") {
    KernelConfig k;
    GaussianProcess f(k, 0.01), q(k, 0.01);
    const ExtendedInput a{{10.0, 0.05, 3.0}, 0.0}, b{{30.0, 0.05, 3.0}, 0.0}, c{{45.0, 0.1, 8.0}, 0.0};
    f.add_observation(a, 2.0), q.add_observation(a, 0.0);
    f.add_observation(b, 1.0), q.add_observation(b, 5.0);  // best cost but infeasible
    f.add_observation(c, 1.5), q.add_observation(c, 0.5);
    CHECK(cbo_incumbent(f, {&q}, {1.0}) == 1.5);

    // nothing feasible: lowest posterior mean at an observed input
    std::vector<double> mean;
    f.posterior_mean(f.inputs(), mean);
    CHECK(cbo_incumbent(f, {&q}, {-1.0}) == *std::min_element(mean.begin(), mean.end()));
}

TEST_CASE("CBO step lands near the dense argmax of the acquisition") {
    std::mt19937_64 drng(31);
    KernelConfig k;
    k.lengthscales = {30.0, 0.03, 3.0};
    for (int rep = 0; rep < 5; ++rep) {
        GaussianProcess f(k, 0.01), q(k, 0.01);
        std::normal_distribution<double> nd;
        for (int i = 0; i < 8; ++i) {
            const ExtendedInput in{oracle::random_point(drng, kDomain), 0.0};
            f.add_observation(in, nd(drng));
            q.add_observation(in, nd(drng));
        }
        const std::vector<const GaussianProcess*> qs{&q};
        const std::vector<double> kappa{0.5};
        const double best = cbo_incumbent(f, qs, kappa);
        std::vector<Point> dense;
        for (int i = 0; i < 20000; ++i) dense.push_back(oracle::random_point(drng, kDomain));
        std::vector<double> dv;
        cbo_acquisition(dense, f, qs, kappa, best, dv);
        const double top = *std::max_element(dv.begin(), dv.end());

        Rng rng = make_rng(rep + 1, Stream::cbo);
        const Point x = cbo_step(f, qs, kappa, kDomain, CboConfig{}, rng);
        for (int d = 0; d < 3; ++d) CHECK((x[d] >= kDomain[d].lo && x[d] <= kDomain[d].hi));
        std::vector<double> v;
        cbo_acquisition(std::vector<Point>{x}, f, qs, kappa, best, v);
        CHECK(v[0] >= 0.95 * top);
    }
    GaussianProcess empty(k, 0.01);
    Rng rng = make_rng(1, Stream::cbo);
    CHECK_THROWS_AS(cbo_step(empty, {}, {}, kDomain, CboConfig{}, rng), ContractViolation);
}

TEST_CASE("mean_metrics averages independent episodes") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/stationary.ini");
    const Reference ref = make_reference(cfg);
    const Point x{20.0, 0.06, 4.0};
    const EpisodeMetrics a = mean_metrics(x, cfg.plant, ref, cfg.metrics, 4, 9, 100);
    const EpisodeMetrics b = mean_metrics(x, cfg.plant, ref, cfg.metrics, 4, 9, 100);
    CHECK(a.f == b.f);
    CHECK(a.q1 == b.q1);
    double f = 0.0, q2 = 0.0;
    for (std::uint64_t k = 0; k < 4; ++k) {
        const auto m = evaluate_episode(simulate(x, cfg.plant, ref, split_seed(9, Stream::oracle, 100 + k)), cfg.metrics);
        f += m.f / 4.0;
        q2 += m.q2 / 4.0;
    }
    CHECK(a.f == doctest::Approx(f).epsilon(1e-12));
    CHECK(a.q2 == doctest::Approx(q2).epsilon(1e-12));
    CHECK_THROWS_AS(mean_metrics(x, cfg.plant, ref, cfg.metrics, 0, 9, 0), ContractViolation);
}

TEST_CASE("small grid search and its csv round trip") {
    ExperimentConfig cfg = load_config(SAFETUNE_SOURCE_DIR "/configs/stationary.ini");
    const Reference ref = make_reference(cfg);
    GridSpec spec;
    spec.counts = {2, 2, 2};
    spec.repeats = 2;
    const std::vector<double> kappa{14.5, 2.36};
    const GridOracleResult r = grid_search(spec, cfg.plant, ref, cfg.metrics, kappa, 3);
    REQUIRE(r.cells.size() == 8);
    for (std::size_t c = 0; c < 8; ++c)
        CHECK(static_cast<bool>(r.feasible[c]) == (r.mean[c].q1 <= kappa[0] && r.mean[c].q2 <= kappa[1]));
    CHECK(r.feasible[r.best]);

    std::ostringstream os;
    write_grid_oracle_csv(os, r);
    const std::string path = "grid_roundtrip_test.csv";
    {
        std::ofstream out(path);
        out << os.str();
    }
    const GridOracleResult back = read_grid_oracle_csv(path);
    std::remove(path.c_str());
    REQUIRE(back.cells.size() == 8);
    CHECK(back.best == r.best);
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(back.mean[c].f == r.mean[c].f);
        CHECK(back.feasible[c] == r.feasible[c]);
    }

    GridSpec none = spec;
    none.repeats = 0;
    CHECK_THROWS_AS(grid_search(none, cfg.plant, ref, cfg.metrics, kappa, 3), ConfigError);
    CHECK_THROWS_AS(grid_search(spec, cfg.plant, ref, cfg.metrics, {0.0, 0.0}, 3), EmptyFeasibleSet);
}
