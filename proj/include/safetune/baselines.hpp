#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "safetune/gp.hpp"
#include "safetune/metrics.hpp"
#include "safetune/plant.hpp"
#include "safetune/rng.hpp"
#include "safetune/safe_set.hpp"

namespace safetune {

struct GridSpec {
    Ranges domain{Interval{5.0, 50.0}, Interval{0.01, 0.11}, Interval{1.0, 10.0}};
    std::array<std::size_t, kDims> counts{5, 11, 10};
    std::size_t repeats = 5;

    std::size_t size() const { return counts[0] * counts[1] * counts[2]; }
    // row-major over (Kp, Kv, Ti), endpoints included
    Point cell(std::size_t idx) const;
};

struct GridOracleResult {
    std::vector<Point> cells;
    std::vector<EpisodeMetrics> mean;
    std::vector<char> feasible;
    std::size_t best = 0;
    double best_f = kInf;

    std::size_t feasible_count() const;
};

// Feasible argmin of mean f; ties go to the lower cell index.
// Throws EmptyFeasibleSet when no cell satisfies both constraints.
void select_best(GridOracleResult& r);

// Mean metrics of `repeats` episodes at x; episode k draws oracle stream index
// first_index + k.
EpisodeMetrics mean_metrics(const Point& x, const PlantConfig& plant, const Reference& ref,
                            const MetricsConfig& metrics, std::size_t repeats, std::uint64_t seed,
                            std::uint64_t first_index);

GridOracleResult grid_search(const GridSpec& spec, const PlantConfig& plant, const Reference& ref,
                             const MetricsConfig& metrics, const std::vector<double>& kappa, std::uint64_t seed);

void write_grid_oracle_csv(std::ostream& os, const GridOracleResult& r);
GridOracleResult read_grid_oracle_csv(const std::string& path);

struct CboConfig {
    std::size_t starts = 64;
    std::size_t rounds = 25;
    double initial_step = 0.1;  // fraction of each range
    double min_step = 1e-3;
};

double expected_improvement(double mean, double sd, double best);

// EI(x) * prod_j P[q_j(x) <= kappa_j] at each point, objective minimised.
void cbo_acquisition(std::span<const Point> ps, const GaussianProcess& f, const std::vector<const GaussianProcess*>& q,
                     const std::vector<double>& kappa, double best, std::vector<double>& out);

// EI reference: best feasible observation, else the lowest posterior mean at
// an observed input.
double cbo_incumbent(const GaussianProcess& f, const std::vector<const GaussianProcess*>& q,
                     const std::vector<double>& kappa);

Point cbo_step(const GaussianProcess& f, const std::vector<const GaussianProcess*>& q, const std::vector<double>& kappa,
               const Ranges& domain, const CboConfig& cfg, Rng& rng);

}  // namespace safetune
