#include "safetune/safe_set.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <spdlog/spdlog.h>

#include "safetune/csv.hpp"

namespace safetune {

double correlation_step(double lengthscale) { return lengthscale * std::sqrt(-2.0 * std::log(0.95)); }

double normalized_distance(const Point& a, const Point& b, const Point& lengthscales) {
    double s = 0.0;
    for (std::size_t d = 0; d < kDims; ++d) {
        const double r = (a[d] - b[d]) / lengthscales[d];
        s += r * r;
    }
    return std::sqrt(s);
}

std::array<std::size_t, kDims> SafeGrid::unravel(std::size_t idx) const {
    std::array<std::size_t, kDims> ijk{};
    for (std::size_t d = kDims; d-- > 0;) {
        ijk[d] = idx % counts[d];
        idx /= counts[d];
    }
    return ijk;
}

std::size_t SafeGrid::ravel(const std::array<std::size_t, kDims>& ijk) const {
    std::size_t idx = 0;
    for (std::size_t d = 0; d < kDims; ++d) idx = idx * counts[d] + ijk[d];
    return idx;
}

Point SafeGrid::cell(std::size_t idx) const {
    const auto ijk = unravel(idx);
    Point p{};
    for (std::size_t d = 0; d < kDims; ++d)
        p[d] = counts[d] == 1 ? ranges[d].lo : ranges[d].lo + static_cast<double>(ijk[d]) * spacing[d];
    // pin the last cell to the upper endpoint exactly
    for (std::size_t d = 0; d < kDims; ++d)
        if (counts[d] > 1 && ijk[d] + 1 == counts[d]) p[d] = ranges[d].hi;
    return p;
}

std::size_t SafeGrid::nearest_cell(const Point& p) const {
    std::array<std::size_t, kDims> ijk{};
    for (std::size_t d = 0; d < kDims; ++d) {
        if (counts[d] == 1) continue;
        const double r = std::round((p[d] - ranges[d].lo) / spacing[d]);
        ijk[d] = static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(counts[d] - 1)));
    }
    return ravel(ijk);
}

std::optional<std::size_t> SafeGrid::cell_at(const Point& p) const {
    const std::size_t idx = nearest_cell(p);
    return cell(idx) == p ? std::optional<std::size_t>(idx) : std::nullopt;
}

std::vector<std::size_t> SafeGrid::neighbors(std::size_t idx) const {
    std::vector<std::size_t> out;
    const auto ijk = unravel(idx);
    for (std::size_t d = 0; d < kDims; ++d) {
        if (ijk[d] > 0) {
            auto n = ijk;
            --n[d];
            out.push_back(ravel(n));
        }
        if (ijk[d] + 1 < counts[d]) {
            auto n = ijk;
            ++n[d];
            out.push_back(ravel(n));
        }
    }
    return out;
}

Point SafeGrid::clamp(Point p) const {
    for (std::size_t d = 0; d < kDims; ++d) p[d] = std::clamp(p[d], ranges[d].lo, ranges[d].hi);
    return p;
}

SafeGrid build_grid(const Ranges& ranges, const Point& lengthscales) {
    SafeGrid g;
    g.ranges = ranges;
    g.lengthscales = lengthscales;
    for (std::size_t d = 0; d < kDims; ++d) {
        const double width = ranges[d].hi - ranges[d].lo;
        if (!(width >= 0.0) || !(lengthscales[d] > 0.0))
            throw ContractViolation("grid ranges must be ordered and lengthscales positive");
        g.resolution[d] = correlation_step(lengthscales[d]);
        if (width < g.resolution[d]) {
            if (width > 0.0)
                spdlog::warn("dimension {} narrower than its grid step, using a single cell", d);
            g.counts[d] = 1;
            g.spacing[d] = 0.0;
            continue;
        }
        g.counts[d] = static_cast<std::size_t>(std::ceil(width / g.resolution[d])) + 1;
        g.spacing[d] = width / static_cast<double>(g.counts[d] - 1);
    }
    return g;
}

void ExpansionParams::validate() const {
    if (kappa.size() != epsilon.size() || kappa.empty())
        throw ContractViolation("kappa and epsilon need one entry per constraint");
    for (std::size_t j = 0; j < kappa.size(); ++j) {
        if (!std::isfinite(kappa[j])) throw ContractViolation("kappa must be finite");
        if (!(epsilon[j] >= 0.0)) throw ContractViolation("epsilon must be nonnegative");
    }
}

std::vector<char> pessimistic_safe_set(const BoundTable& bounds, const std::vector<double>& kappa,
                                       const std::vector<std::size_t>& forced) {
    if (bounds.size() != kappa.size()) throw ContractViolation("one kappa per constraint");
    const std::size_t n = bounds.empty() ? 0 : bounds.front().size();
    std::vector<char> safe(n, 1);
    for (std::size_t j = 0; j < bounds.size(); ++j)
        for (std::size_t c = 0; c < n; ++c)
            if (!(bounds[j][c].hi <= kappa[j])) safe[c] = 0;
    for (std::size_t c : forced) safe.at(c) = 1;
    return safe;
}

std::vector<char> boundary(const SafeGrid& grid, const std::vector<char>& safe) {
    std::vector<char> out(safe.size(), 0);
    for (std::size_t c = 0; c < safe.size(); ++c) {
        if (!safe[c]) continue;
        for (std::size_t n : grid.neighbors(c))
            if (!safe[n]) {
                out[c] = 1;
                break;
            }
    }
    return out;
}

std::vector<char> uncertain_boundary(const std::vector<char>& boundary_flags, const BoundTable& bounds,
                                     const std::vector<double>& epsilon) {
    std::vector<char> out(boundary_flags.size(), 0);
    for (std::size_t c = 0; c < boundary_flags.size(); ++c) {
        if (!boundary_flags[c]) continue;
        for (std::size_t j = 0; j < bounds.size(); ++j)
            if (bounds[j][c].width() >= epsilon[j]) {
                out[c] = 1;
                break;
            }
    }
    return out;
}

bool expansion_indicator(std::span<const double> lower, std::span<const double> grad_norm, double distance,
                         const ExpansionParams& params) {
    for (std::size_t j = 0; j < params.constraints(); ++j)
        if (!(lower[j] + grad_norm[j] * distance + params.epsilon[j] <= params.kappa[j])) return false;
    return true;
}

std::optional<std::size_t> nearest_expander(const ExpanderTable& w, const Point& x_star,
                                            const ExpansionParams& params, const Point& lengthscales) {
    std::optional<std::size_t> best;
    double best_d = kInf;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double d = normalized_distance(w.coords[k], x_star, lengthscales);
        if (!expansion_indicator(w.lower[k], w.grad_norm[k], d, params)) continue;
        if (d < best_d || (d == best_d && best && w.cells[k] < w.cells[*best])) {
            best_d = d;
            best = k;
        }
    }
    if (!best) return std::nullopt;
    return w.cells[*best];
}

void write_grid_csv(std::ostream& os, const SafeGrid& grid, const SafeSets& sets, std::size_t bin) {
    os << "# safetune grid v1\n";
    os << "bin_id,cell,Kp,Kv,Ti,safe,boundary,uncertain";
    for (std::size_t j = 0; j < sets.bounds.size(); ++j) os << ",l_q" << j + 1 << ",u_q" << j + 1;
    os << '\n';
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const Point p = grid.cell(c);
        os << bin << ',' << c << ',' << format_number(p[0]) << ',' << format_number(p[1]) << ','
           << format_number(p[2]) << ',' << int(sets.safe[c]) << ',' << int(sets.boundary[c]) << ','
           << int(sets.uncertain[c]);
        for (const auto& b : sets.bounds) os << ',' << format_number(b[c].lo) << ',' << format_number(b[c].hi);
        os << '\n';
    }
}

}  // namespace safetune
