#pragma once

#include <span>
#include <vector>

#include "safetune/common.hpp"
#include "safetune/rng.hpp"
#include "safetune/safe_set.hpp"

namespace safetune {

// What the optimizer and the safe-set logic need to know about the
// objective and constraints for one task bin. Backed by GPs in the real
// loop, by scripted tables in tests.
class Belief {
public:
    virtual ~Belief() = default;
    virtual std::size_t constraint_count() const = 0;
    // Cached (possibly intersected) bounds at every grid cell, [j][cell].
    virtual BoundTable cell_bounds() = 0;
    // ||diag(l) grad mu_j||_inf at a grid cell.
    virtual double gradient_norm(std::size_t j, std::size_t cell) const = 0;
    // Raw upper bounds at arbitrary points, [j][i].
    virtual void constraint_upper(std::span<const Point> ps, std::vector<std::vector<double>>& upper) const = 0;
    virtual void objective_lcb(std::span<const Point> ps, std::vector<double>& lcb) const = 0;
    // Objective model value back in measurement units (for the stopping rule).
    virtual double objective_value(double model) const { return model; }
};

struct PsoConfig {
    std::size_t particles = 30;
    std::size_t iterations = 50;
    double inertia_start = 0.9;
    double inertia_end = 0.4;
    double velocity_clamp = 2.0;  // in units of the grid resolution

    void validate() const;
};

struct Particle {
    Point position{};
    Point velocity{};
    Point best_position{};
    double best_fitness = kInf;
};

struct Swarm {
    std::vector<Particle> particles;
    Point global_best{};
    double global_best_fitness = kInf;
};

Swarm init_swarm(const SafeGrid& grid, const std::vector<std::size_t>& safe_cells, std::size_t m, Rng& rng);

// u_j(p) <= kappa_j for all j, or some uncertain-boundary cell expands to p.
bool membership_test(const Point& p, std::span<const double> upper_at_p, const ExpanderTable& w,
                     const ExpansionParams& params, const Point& lengthscales);

struct PsoProblem {
    const SafeGrid& grid;
    const Belief& belief;
    const SafeSets& sets;
    const ExpansionParams& params;
    std::span<const Point> rejected;
    double rejection_radius = 0.0;  // normalized distance
};

struct PsoResult {
    Point x{};
    double fitness = kInf;
    bool fallback = false;
    std::vector<double> best_history;  // global best fitness after each iteration
};

// True when p is a point the optimizer may return for this problem.
bool in_optimistic_set(const PsoProblem& problem, const Point& p, std::span<const double> upper_at_p);

PsoResult pso_optimize(const PsoProblem& problem, const PsoConfig& cfg, Rng& rng);

}  // namespace safetune
