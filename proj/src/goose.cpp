#include "safetune/goose.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace safetune {

const char* to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::evaluate: return "evaluate";
        case ActionKind::evaluate_expander: return "evaluate_expander";
        case ActionKind::apply_incumbent: return "apply_incumbent";
    }
    return "?";
}

const char* to_string(ActionReason reason) {
    switch (reason) {
        case ActionReason::bootstrap: return "bootstrap";
        case ActionReason::suggestion: return "suggestion";
        case ActionReason::expander: return "expander";
        case ActionReason::stop: return "stop";
        case ActionReason::exhausted: return "exhausted";
    }
    return "?";
}

const char* to_string(TaskMode mode) {
    switch (mode) {
        case TaskMode::none: return "none";
        case TaskMode::binned: return "binned";
        case TaskMode::exact: return "exact";
        case TaskMode::temporal: return "temporal";
    }
    return "?";
}

TaskMode task_mode_from_string(const std::string& s) {
    for (auto m : {TaskMode::none, TaskMode::binned, TaskMode::exact, TaskMode::temporal})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown task mode '" + s + "'");
}

SafeSets compute_safe_sets(const SafeGrid& grid, Belief& belief, const ExpansionParams& params,
                           const std::vector<std::size_t>& forced_safe) {
    SafeSets s;
    s.bounds = belief.cell_bounds();
    s.safe = pessimistic_safe_set(s.bounds, params.kappa, forced_safe);
    s.boundary = boundary(grid, s.safe);
    s.uncertain = uncertain_boundary(s.boundary, s.bounds, params.epsilon);
    const std::size_t nq = s.bounds.size();
    for (std::size_t c = 0; c < grid.size(); ++c) {
        if (s.safe[c]) s.safe_cells.push_back(c);
        if (!s.uncertain[c]) continue;
        s.expanders.cells.push_back(c);
        s.expanders.coords.push_back(grid.cell(c));
        std::vector<double> lo(nq), gn(nq);
        for (std::size_t j = 0; j < nq; ++j) {
            lo[j] = s.bounds[j][c].lo;
            gn[j] = belief.gradient_norm(j, c);
        }
        s.expanders.lower.push_back(std::move(lo));
        s.expanders.grad_norm.push_back(std::move(gn));
    }
    if (s.safe_cells.empty()) throw std::logic_error("pessimistic safe set empty after seeding");
    return s;
}

GooseAction decide(const SafeGrid& grid, TaskBin& bin, Belief& belief, const GooseConfig& cfg,
                   const std::vector<std::size_t>& forced_safe, Rng& rng, DecisionInfo* info) {
    DecisionInfo local;
    DecisionInfo& di = info ? *info : local;
    di.pso.reset();
    di.pso_calls = 0;
    di.suggestion_lcb = kInf;

    if (!bin.seeded) return {ActionKind::evaluate, ActionReason::bootstrap, cfg.seed};

    di.sets = compute_safe_sets(grid, belief, cfg.expansion, forced_safe);
    const SafeSets& sets = di.sets;
    const ExpansionParams& params = cfg.expansion;

    auto pessimistically_safe = [&](const Point& p) {
        if (auto c = grid.cell_at(p); c && sets.safe[*c]) return true;
        std::vector<std::vector<double>> up;
        belief.constraint_upper(std::span<const Point>(&p, 1), up);
        for (std::size_t j = 0; j < params.constraints(); ++j)
            if (!(up[j][0] <= params.kappa[j])) return false;
        return true;
    };
    auto expander_for = [&](const Point& target) -> std::optional<GooseAction> {
        if (auto e = nearest_expander(sets.expanders, target, params, grid.lengthscales))
            return GooseAction{ActionKind::evaluate_expander, ActionReason::expander, grid.cell(*e)};
        return std::nullopt;
    };

    // expander loop for an earlier suggestion
    if (bin.pending) {
        const Point target = *bin.pending;
        if (pessimistically_safe(target)) {
            bin.pending.reset();
            bin.expander_steps = 0;
            return {ActionKind::evaluate, ActionReason::suggestion, target};
        }
        if (bin.expander_steps < cfg.max_expander_steps) {
            if (auto a = expander_for(target)) {
                ++bin.expander_steps;
                return *a;
            }
        }
        bin.rejected.push_back(target);
        bin.pending.reset();
        bin.expander_steps = 0;
    }

    for (std::size_t attempt = 0; attempt <= cfg.max_requeries; ++attempt) {
        const PsoProblem problem{grid, belief, sets, params, bin.rejected, cfg.rejection_radius};
        PsoResult r = pso_optimize(problem, cfg.pso, rng);
        ++di.pso_calls;
        di.suggestion_lcb = belief.objective_value(r.fitness);
        const Point x_star = r.x;
        di.pso = std::move(r);

        if (bin.incumbent && std::abs(bin.incumbent->f - di.suggestion_lcb) < cfg.eps_tol)
            return {ActionKind::apply_incumbent, ActionReason::stop, bin.incumbent->x};
        if (pessimistically_safe(x_star)) return {ActionKind::evaluate, ActionReason::suggestion, x_star};
        if (auto a = expander_for(x_star)) {
            bin.pending = x_star;
            bin.expander_steps = 1;
            return *a;
        }
        bin.rejected.push_back(x_star);
    }
    if (bin.incumbent) return {ActionKind::apply_incumbent, ActionReason::exhausted, bin.incumbent->x};
    return {ActionKind::evaluate, ActionReason::exhausted, cfg.seed};
}

GpBelief::GpBelief(GpModel& f, std::vector<GpModel>& q, const SafeGrid& grid, std::size_t bin, double task_input,
                   std::size_t* bound_resets)
    : f_(f), q_(q), grid_(grid), bin_(bin), task_(task_input), resets_(bound_resets) {}

std::vector<ExtendedInput> GpBelief::inputs(std::span<const Point> ps) const {
    std::vector<ExtendedInput> in(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) in[i] = {ps[i], task_};
    return in;
}

BoundTable GpBelief::cell_bounds() {
    std::vector<Point> cells(grid_.size());
    for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = grid_.cell(c);
    const auto in = inputs(cells);
    BoundTable out(q_.size());
    std::vector<double> mean, var;
    for (std::size_t j = 0; j < q_.size(); ++j) {
        q_[j].gp().posterior(in, mean, var);
        out[j].resize(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const double s = std::sqrt(var[c]);
            const Interval raw{mean[c] - q_[j].beta() * s, mean[c] + q_[j].beta() * s};
            const auto key = bound_key(bin_, c);
            try {
                out[j][c] = q_[j].update_bounds(key, raw);
            } catch (const ModelInconsistency& e) {
                spdlog::warn("constraint {} cell {}: {}; resetting to the raw interval", j + 1, c, e.what());
                q_[j].reset_bounds(key, raw);
                out[j][c] = raw;
                if (resets_) ++*resets_;
            }
        }
    }
    return out;
}

double GpBelief::gradient_norm(std::size_t j, std::size_t cell) const {
    const Point g = q_[j].gp().gradient_mean({grid_.cell(cell), task_});
    double n = 0.0;
    for (std::size_t d = 0; d < kDims; ++d) n = std::max(n, std::abs(g[d] * grid_.lengthscales[d]));
    return n;
}

void GpBelief::constraint_upper(std::span<const Point> ps, std::vector<std::vector<double>>& upper) const {
    const auto in = inputs(ps);
    upper.resize(q_.size());
    std::vector<double> mean, var;
    for (std::size_t j = 0; j < q_.size(); ++j) {
        q_[j].gp().posterior(in, mean, var);
        upper[j].resize(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) upper[j][i] = mean[i] + q_[j].beta() * std::sqrt(var[i]);
    }
}

void GpBelief::objective_lcb(std::span<const Point> ps, std::vector<double>& lcb) const {
    const auto in = inputs(ps);
    std::vector<double> mean, var;
    f_.gp().posterior(in, mean, var);
    lcb.resize(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) lcb[i] = mean[i] - f_.beta() * std::sqrt(var[i]);
}

GooseState::GooseState(SafeGrid grid, GpModel f, std::vector<GpModel> q, GooseConfig cfg, TaskSpec task,
                       std::uint64_t seed)
    : grid_(std::move(grid)),
      f_(std::move(f)),
      q_(std::move(q)),
      cfg_(std::move(cfg)),
      task_(task),
      pso_rng_(make_rng(seed, Stream::pso)) {
    cfg_.expansion.validate();
    if (q_.size() != cfg_.expansion.constraints()) throw ContractViolation("one GP per constraint");
    model_cfg_ = cfg_;
    if (cfg_.noise_margin < 0.0) throw ContractViolation("noise margin must be >= 0");
    for (std::size_t j = 0; j < q_.size(); ++j)
        model_cfg_.expansion.kappa[j] = q_[j].encode(cfg_.expansion.kappa[j]) -
                                        cfg_.noise_margin * std::sqrt(q_[j].gp().noise_variance());
    forced_.push_back(grid_.nearest_cell(cfg_.seed));
    TaskBin first;
    first.representative = std::numeric_limits<double>::quiet_NaN();
    bins_.push_back(first);
}

double GooseState::task_input() const {
    switch (task_.mode) {
        case TaskMode::temporal: return static_cast<double>(time_);
        case TaskMode::binned:
        case TaskMode::exact: {
            const double r = bins_[current_].representative;
            return std::isnan(r) ? 0.0 : r;
        }
        case TaskMode::none: break;
    }
    return 0.0;
}

bool GooseState::feasible(const EpisodeMetrics& m) const {
    if (!std::isfinite(m.f)) return false;
    const double q[2] = {m.q1, m.q2};
    for (std::size_t j = 0; j < q_.size() && j < 2; ++j)
        if (!(q[j] <= cfg_.expansion.kappa[j])) return false;
    return true;
}

std::size_t GooseState::bin_for(double tau) {
    if (task_.mode == TaskMode::none || task_.mode == TaskMode::temporal) return 0;
    if (std::isnan(tau)) return current_;
    if (bins_.size() == 1 && std::isnan(bins_[0].representative)) {
        bins_[0].representative = tau;
        bins_[0].members = 1;
        return 0;
    }
    std::size_t best = 0;
    double best_d = kInf;
    for (const auto& b : bins_) {
        const double d = std::abs(tau - b.representative);
        if (d < best_d) {
            best_d = d;
            best = b.id;
        }
    }
    const double tol = task_.mode == TaskMode::exact ? 1e-12 * std::max(1.0, std::abs(tau)) : task_.half_width;
    if (best_d <= tol) {
        TaskBin& b = bins_[best];
        ++b.members;
        b.representative += (tau - b.representative) / static_cast<double>(b.members);
        return best;
    }
    TaskBin nb;
    nb.id = bins_.size();
    nb.representative = tau;
    nb.members = 1;
    bins_.push_back(nb);
    spdlog::debug("opened task bin {} at tau = {}", nb.id, tau);
    return nb.id;
}

GooseAction GooseState::step() {
    TaskBin& bin = bins_[current_];
    GpBelief belief(f_, q_, grid_, current_, task_input(), &bound_resets_);
    return decide(grid_, bin, belief, model_cfg_, forced_, pso_rng_, &info_);
}

SafeSets GooseState::current_sets() {
    GpBelief belief(f_, q_, grid_, current_, task_input(), &bound_resets_);
    return compute_safe_sets(grid_, belief, model_cfg_.expansion, forced_);
}

void GooseState::record_evaluation(const GooseAction& action, const EpisodeMetrics& m, double tau_observed) {
    if (action.kind == ActionKind::apply_incumbent)
        throw ContractViolation("apply_incumbent episodes go through record_monitoring");
    if (action.reason == ActionReason::bootstrap) bins_[current_].seeded = true;
    const std::size_t b = bin_for(tau_observed);
    if (action.x == cfg_.seed) bins_[b].seeded = true;
    current_ = b;

    if (!std::isfinite(m.f) || !std::isfinite(m.q1) || !std::isfinite(m.q2)) {
        spdlog::warn("episode at iteration {} aborted, not added to the models", time_);
        return;
    }
    const double task = task_.mode == TaskMode::temporal ? static_cast<double>(time_) : task_input();
    const ExtendedInput in{action.x, task};
    f_.add_observation(in, m.f);
    const double q[2] = {m.q1, m.q2};
    for (std::size_t j = 0; j < q_.size(); ++j) q_[j].add_observation(in, q[j]);

    Observation o;
    o.iteration = time_;
    o.x = action.x;
    o.task_input = task;
    o.bin = b;
    o.metrics = m;
    o.feasible = feasible(m);
    if (!o.feasible) spdlog::warn("iteration {}: constraint violated (q1 = {}, q2 = {})", time_, m.q1, m.q2);
    history_.push_back(o);

    for (auto& bin : bins_) bin.rejected.clear();
    refresh_incumbents();
}

void GooseState::record_monitoring(const EpisodeMetrics&, double tau_observed) { current_ = bin_for(tau_observed); }

void GooseState::refresh_incumbents() {
    const std::size_t n = history_.size();
    const std::size_t first = cfg_.window > 0 && n > cfg_.window ? n - cfg_.window : 0;
    for (auto& bin : bins_) {
        bin.incumbent.reset();
        for (std::size_t i = first; i < n; ++i) {
            const Observation& o = history_[i];
            if (o.bin != bin.id || !o.feasible) continue;
            if (!bin.incumbent || o.metrics.f < bin.incumbent->f) bin.incumbent = Incumbent{o.x, o.metrics.f, i};
        }
    }
}

}  // namespace safetune
