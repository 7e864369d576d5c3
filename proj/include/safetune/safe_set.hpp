#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "safetune/common.hpp"

namespace safetune {

using Ranges = std::array<Interval, kDims>;

// Step giving correlation 0.95 between neighbouring cells: l * sqrt(-2 ln 0.95).
double correlation_step(double lengthscale);

// Euclidean distance with each dimension scaled by 1/l_d.
double normalized_distance(const Point& a, const Point& b, const Point& lengthscales);

struct SafeGrid {
    Ranges ranges{};
    Point lengthscales{};
    Point resolution{};  // nominal step from the correlation rule
    Point spacing{};     // actual lattice spacing, width / (count - 1) <= resolution
    std::array<std::size_t, kDims> counts{};

    std::size_t size() const { return counts[0] * counts[1] * counts[2]; }
    std::array<std::size_t, kDims> unravel(std::size_t idx) const;
    std::size_t ravel(const std::array<std::size_t, kDims>& ijk) const;
    Point cell(std::size_t idx) const;
    std::size_t nearest_cell(const Point& p) const;
    // exact lattice point index, if p sits on one
    std::optional<std::size_t> cell_at(const Point& p) const;
    // axis neighbours inside the domain
    std::vector<std::size_t> neighbors(std::size_t idx) const;
    Point clamp(Point p) const;
};

SafeGrid build_grid(const Ranges& ranges, const Point& lengthscales);

struct ExpansionParams {
    std::vector<double> kappa;    // per constraint
    std::vector<double> epsilon;  // per constraint noise margin

    std::size_t constraints() const { return kappa.size(); }
    void validate() const;
};

// bounds[j][cell]
using BoundTable = std::vector<std::vector<Interval>>;

std::vector<char> pessimistic_safe_set(const BoundTable& bounds, const std::vector<double>& kappa,
                                       const std::vector<std::size_t>& forced);
std::vector<char> boundary(const SafeGrid& grid, const std::vector<char>& safe);
std::vector<char> uncertain_boundary(const std::vector<char>& boundary_flags, const BoundTable& bounds,
                                     const std::vector<double>& epsilon);

// Optimistic noisy expansion operator, conjunctive over constraints.
// lower[j] and grad_norm[j] are taken at the anchor cell.
bool expansion_indicator(std::span<const double> lower, std::span<const double> grad_norm, double distance,
                         const ExpansionParams& params);

// Anchor data for the uncertain-boundary cells.
struct ExpanderTable {
    std::vector<std::size_t> cells;
    std::vector<Point> coords;
    std::vector<std::vector<double>> lower;      // [k][j]
    std::vector<std::vector<double>> grad_norm;  // [k][j]

    std::size_t size() const { return cells.size(); }
};

std::optional<std::size_t> nearest_expander(const ExpanderTable& w, const Point& x_star,
                                            const ExpansionParams& params, const Point& lengthscales);

// One bin's flags after a recomputation.
struct SafeSets {
    BoundTable bounds;
    std::vector<char> safe, boundary, uncertain;
    std::vector<std::size_t> safe_cells;
    ExpanderTable expanders;
};

// Grid dump: coordinates, flags, bounds per constraint.
void write_grid_csv(std::ostream& os, const SafeGrid& grid, const SafeSets& sets, std::size_t bin);

}  // namespace safetune
