#include "safetune/pso.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace safetune {

void PsoConfig::validate() const {
    if (particles < 1 || iterations < 1) throw ContractViolation("PSO needs at least one particle and iteration");
    if (!(velocity_clamp > 0.0)) throw ContractViolation("velocity clamp must be positive");
}

Swarm init_swarm(const SafeGrid& grid, const std::vector<std::size_t>& safe_cells, std::size_t m, Rng& rng) {
    if (safe_cells.empty()) throw ContractViolation("cannot initialise a swarm on an empty safe set");
    Swarm s;
    s.particles.resize(m);
    for (auto& part : s.particles) {
        const Point c = grid.cell(safe_cells[uniform_index(rng, safe_cells.size())]);
        for (std::size_t d = 0; d < kDims; ++d) {
            const double h = 0.5 * grid.spacing[d];
            part.position[d] = c[d] + (h > 0.0 ? uniform(rng, -h, h) : 0.0);
            const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
            part.velocity[d] = sign * grid.resolution[d];
        }
        part.position = grid.clamp(part.position);
        part.best_position = part.position;
        part.best_fitness = kInf;
    }
    return s;
}

bool membership_test(const Point& p, std::span<const double> upper_at_p, const ExpanderTable& w,
                     const ExpansionParams& params, const Point& lengthscales) {
    bool safe = true;
    for (std::size_t j = 0; j < params.constraints(); ++j)
        if (!(upper_at_p[j] <= params.kappa[j])) safe = false;
    if (safe) return true;
    for (std::size_t k = 0; k < w.size(); ++k)
        if (expansion_indicator(w.lower[k], w.grad_norm[k], normalized_distance(w.coords[k], p, lengthscales),
                                params))
            return true;
    return false;
}

bool in_optimistic_set(const PsoProblem& pr, const Point& p, std::span<const double> upper_at_p) {
    for (const Point& r : pr.rejected)
        if (normalized_distance(r, p, pr.grid.lengthscales) <= pr.rejection_radius) return false;
    if (auto c = pr.grid.cell_at(p); c && pr.sets.safe[*c]) return true;
    return membership_test(p, upper_at_p, pr.sets.expanders, pr.params, pr.grid.lengthscales);
}

PsoResult pso_optimize(const PsoProblem& pr, const PsoConfig& cfg, Rng& rng) {
    cfg.validate();
    Swarm swarm = init_swarm(pr.grid, pr.sets.safe_cells, cfg.particles, rng);
    const std::size_t m = swarm.particles.size();
    const std::size_t nq = pr.belief.constraint_count();
    PsoResult out;
    out.best_history.reserve(cfg.iterations);
    bool have_global = false;

    std::vector<Point> pos(m);
    std::vector<double> fit;
    std::vector<Point> cand;
    std::vector<std::size_t> cand_idx;
    std::vector<std::vector<double>> upper;
    std::vector<double> up_i(nq);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        for (std::size_t i = 0; i < m; ++i) pos[i] = swarm.particles[i].position;
        pr.belief.objective_lcb(pos, fit);
        // membership is only needed where the fitness would improve
        cand.clear();
        cand_idx.clear();
        for (std::size_t i = 0; i < m; ++i)
            if (fit[i] < swarm.particles[i].best_fitness) {
                cand.push_back(pos[i]);
                cand_idx.push_back(i);
            }
        if (!cand.empty()) pr.belief.constraint_upper(cand, upper);
        for (std::size_t k = 0; k < cand.size(); ++k) {
            for (std::size_t j = 0; j < nq; ++j) up_i[j] = upper[j][k];
            if (!in_optimistic_set(pr, cand[k], up_i)) continue;
            Particle& part = swarm.particles[cand_idx[k]];
            const double fk = fit[cand_idx[k]];
            part.best_fitness = fk;
            part.best_position = cand[k];
            if (fk < swarm.global_best_fitness) {
                swarm.global_best_fitness = fk;
                swarm.global_best = cand[k];
                have_global = true;
            }
        }
        out.best_history.push_back(swarm.global_best_fitness);

        const double alpha =
            cfg.iterations > 1
                ? cfg.inertia_start - (cfg.inertia_start - cfg.inertia_end) * static_cast<double>(it) /
                                          static_cast<double>(cfg.iterations - 1)
                : cfg.inertia_start;
        const double r1 = uniform(rng, 0.0, 2.0);
        const double r2 = uniform(rng, 0.0, 2.0);
        for (auto& part : swarm.particles) {
            const Point& pb = std::isfinite(part.best_fitness) ? part.best_position : part.position;
            const Point& gb = have_global ? swarm.global_best : part.position;
            for (std::size_t d = 0; d < kDims; ++d) {
                double v = alpha * part.velocity[d] + r1 * (pb[d] - part.position[d]) +
                           r2 * (gb[d] - part.position[d]);
                const double vmax = cfg.velocity_clamp * pr.grid.resolution[d];
                part.velocity[d] = std::clamp(v, -vmax, vmax);
                part.position[d] += part.velocity[d];
            }
            part.position = pr.grid.clamp(part.position);
        }
    }

    if (have_global) {
        out.x = swarm.global_best;
        out.fitness = swarm.global_best_fitness;
        return out;
    }

    // nothing qualified; best pessimistically safe cell by LCB
    std::vector<Point> cells;
    cells.reserve(pr.sets.safe_cells.size());
    for (std::size_t c : pr.sets.safe_cells) cells.push_back(pr.grid.cell(c));
    pr.belief.objective_lcb(cells, fit);
    const auto best = static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
    spdlog::debug("PSO found no qualifying particle, falling back to safe cell {}", pr.sets.safe_cells[best]);
    out.x = cells[best];
    out.fitness = fit[best];
    out.fallback = true;
    return out;
}

}  // namespace safetune
