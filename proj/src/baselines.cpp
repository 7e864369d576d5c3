#include "safetune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <spdlog/spdlog.h>

#include "safetune/csv.hpp"

namespace safetune {

Point GridSpec::cell(std::size_t idx) const {
    std::array<std::size_t, kDims> ijk{};
    for (std::size_t d = kDims; d-- > 0;) {
        ijk[d] = idx % counts[d];
        idx /= counts[d];
    }
    Point p{};
    for (std::size_t d = 0; d < kDims; ++d) {
        const Interval& r = domain[d];
        p[d] = counts[d] == 1 ? r.lo
                              : r.lo + (r.hi - r.lo) * static_cast<double>(ijk[d]) / static_cast<double>(counts[d] - 1);
    }
    return p;
}

std::size_t GridOracleResult::feasible_count() const {
    return static_cast<std::size_t>(std::count(feasible.begin(), feasible.end(), 1));
}

void select_best(GridOracleResult& r) {
    r.best_f = kInf;
    bool found = false;
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        if (!r.feasible[c]) continue;
        if (!found || r.mean[c].f < r.best_f) {
            r.best = c;
            r.best_f = r.mean[c].f;
            found = true;
        }
    }
    if (!found) throw EmptyFeasibleSet("no grid cell satisfies the constraints; kappa is probably miscalibrated");
}

EpisodeMetrics mean_metrics(const Point& x, const PlantConfig& plant, const Reference& ref,
                            const MetricsConfig& metrics, std::size_t repeats, std::uint64_t seed,
                            std::uint64_t first_index) {
    if (repeats == 0) throw ContractViolation("mean_metrics needs at least one repeat");
    const double inv = 1.0 / static_cast<double>(repeats);
    EpisodeMetrics acc{0.0, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < repeats; ++k) {
        const auto tr = simulate(x, plant, ref, split_seed(seed, Stream::oracle, first_index + k));
        const auto m = evaluate_episode(tr, metrics);
        acc.f += m.f * inv;
        acc.q1 += m.q1 * inv;
        acc.q2 += m.q2 * inv;
        acc.tau_m += m.tau_m * inv;
        acc.tau_b += m.tau_b * inv;
    }
    return acc;
}

GridOracleResult grid_search(const GridSpec& spec, const PlantConfig& plant, const Reference& ref,
                             const MetricsConfig& metrics, const std::vector<double>& kappa, std::uint64_t seed) {
    if (spec.repeats == 0) throw ConfigError("grid oracle needs at least one repeat");
    if (kappa.size() != 2) throw ContractViolation("grid oracle expects two constraints");
    GridOracleResult r;
    const std::size_t n = spec.size();
    r.cells.resize(n);
    r.mean.resize(n);
    r.feasible.assign(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        r.cells[c] = spec.cell(c);
        const EpisodeMetrics acc = mean_metrics(r.cells[c], plant, ref, metrics, spec.repeats, seed, c * spec.repeats);
        r.mean[c] = acc;
        r.feasible[c] = acc.q1 <= kappa[0] && acc.q2 <= kappa[1];
    }
    select_best(r);
    return r;
}

void write_grid_oracle_csv(std::ostream& os, const GridOracleResult& r) {
    os << "# safetune grid-oracle v1\n";
    os << "cell,Kp,Kv,Ti,f,q1,q2,tau_m,tau_b,feasible,best\n";
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
        const auto& p = r.cells[c];
        const auto& m = r.mean[c];
        os << c << ',' << format_number(p[0]) << ',' << format_number(p[1]) << ',' << format_number(p[2]) << ','
           << format_number(m.f) << ',' << format_number(m.q1) << ',' << format_number(m.q2) << ','
           << format_number(m.tau_m) << ',' << format_number(m.tau_b) << ',' << int(r.feasible[c]) << ','
           << int(c == r.best) << '\n';
    }
}

GridOracleResult read_grid_oracle_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    const std::size_t ckp = t.column("Kp"), ckv = t.column("Kv"), cti = t.column("Ti"), cf = t.column("f"),
                      cq1 = t.column("q1"), cq2 = t.column("q2"), ctm = t.column("tau_m"), ctb = t.column("tau_b"),
                      cfe = t.column("feasible");
    GridOracleResult r;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        r.cells.push_back({t.number(i, ckp), t.number(i, ckv), t.number(i, cti)});
        r.mean.push_back({t.number(i, cf), t.number(i, cq1), t.number(i, cq2), t.number(i, ctm), t.number(i, ctb)});
        r.feasible.push_back(t.number(i, cfe) != 0.0);
    }
    select_best(r);
    return r;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

double expected_improvement(double mean, double sd, double best) {
    const double gap = best - mean;
    if (!(sd > 0.0)) return std::max(gap, 0.0);
    const double z = gap / sd;
    return gap * normal_cdf(z) + sd * normal_pdf(z);
}

void cbo_acquisition(std::span<const Point> ps, const GaussianProcess& f, const std::vector<const GaussianProcess*>& q,
                     const std::vector<double>& kappa, double best, std::vector<double>& out) {
    std::vector<ExtendedInput> in(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) in[i] = {ps[i], 0.0};
    std::vector<double> mean, var;
    f.posterior(in, mean, var);
    out.resize(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) out[i] = expected_improvement(mean[i], std::sqrt(var[i]), best);
    for (std::size_t j = 0; j < q.size(); ++j) {
        q[j]->posterior(in, mean, var);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double sd = std::sqrt(var[i]);
            const double pf = sd > 0.0 ? normal_cdf((kappa[j] - mean[i]) / sd) : (mean[i] <= kappa[j] ? 1.0 : 0.0);
            out[i] *= pf;
        }
    }
}

double cbo_incumbent(const GaussianProcess& f, const std::vector<const GaussianProcess*>& q,
                     const std::vector<double>& kappa) {
    const auto& ys = f.targets();
    double best = kInf;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        bool ok = true;
        for (std::size_t j = 0; j < q.size(); ++j)
            if (!(q[j]->targets().at(i) <= kappa[j])) ok = false;
        if (ok) best = std::min(best, ys[i]);
    }
    if (std::isfinite(best)) return best;
    std::vector<double> mean;
    f.posterior_mean(f.inputs(), mean);
    return mean.empty() ? 0.0 : *std::min_element(mean.begin(), mean.end());
}

Point cbo_step(const GaussianProcess& f, const std::vector<const GaussianProcess*>& q, const std::vector<double>& kappa,
               const Ranges& domain, const CboConfig& cfg, Rng& rng) {
    if (f.size() == 0) throw ContractViolation("CBO needs at least one observation");
    const double best = cbo_incumbent(f, q, kappa);
    auto to_point = [&](const Point& u) {
        Point p{};
        for (std::size_t d = 0; d < kDims; ++d) p[d] = domain[d].lo + u[d] * (domain[d].hi - domain[d].lo);
        return p;
    };

    // compass search in the unit cube, all starts advanced together
    const std::size_t s = cfg.starts;
    std::vector<Point> u(s);
    for (auto& ui : u)
        for (double& c : ui) c = uniform(rng, 0.0, 1.0);
    std::vector<double> step(s, cfg.initial_step);
    std::vector<double> val;
    std::vector<Point> pts(s);
    for (std::size_t i = 0; i < s; ++i) pts[i] = to_point(u[i]);
    cbo_acquisition(pts, f, q, kappa, best, val);

    std::vector<Point> cand;
    std::vector<std::size_t> owner;
    std::vector<Point> cand_u;
    std::vector<double> cval;
    for (std::size_t round = 0; round < cfg.rounds; ++round) {
        cand.clear();
        owner.clear();
        cand_u.clear();
        for (std::size_t i = 0; i < s; ++i) {
            if (step[i] < cfg.min_step) continue;
            for (std::size_t d = 0; d < kDims; ++d)
                for (double sign : {-1.0, 1.0}) {
                    Point c = u[i];
                    c[d] = std::clamp(c[d] + sign * step[i], 0.0, 1.0);
                    cand_u.push_back(c);
                    cand.push_back(to_point(c));
                    owner.push_back(i);
                }
        }
        if (cand.empty()) break;
        cbo_acquisition(cand, f, q, kappa, best, cval);
        std::vector<char> moved(s, 0);
        for (std::size_t k = 0; k < cand.size(); ++k) {
            const std::size_t i = owner[k];
            if (cval[k] > val[i]) {
                val[i] = cval[k];
                u[i] = cand_u[k];
                moved[i] = 1;
            }
        }
        for (std::size_t i = 0; i < s; ++i)
            if (!moved[i]) step[i] *= 0.5;
    }
    const auto top = static_cast<std::size_t>(std::max_element(val.begin(), val.end()) - val.begin());
    return to_point(u[top]);
}

}  // namespace safetune
