#pragma once

#include <optional>
#include <string>
#include <vector>

#include "safetune/gp.hpp"
#include "safetune/metrics.hpp"
#include "safetune/pso.hpp"
#include "safetune/rng.hpp"
#include "safetune/safe_set.hpp"

namespace safetune {

enum class ActionKind { evaluate, evaluate_expander, apply_incumbent };

const char* to_string(ActionKind kind);

enum class ActionReason {
    bootstrap,     // safe seed for a fresh bin
    suggestion,    // x* was already safe
    expander,      // expander for a pending x*
    stop,          // stopping rule fired
    exhausted,     // every suggestion rejected
};

const char* to_string(ActionReason reason);

struct GooseAction {
    ActionKind kind = ActionKind::evaluate;
    ActionReason reason = ActionReason::suggestion;
    Point x{};
};

struct GooseConfig {
    ExpansionParams expansion;  // kappa and epsilon per constraint
    double eps_tol = 0.001;
    std::size_t window = 0;  // incumbent window in observations, 0 = unbounded
    PsoConfig pso;
    double rejection_radius = 0.16;  // normalized distance
    std::size_t max_requeries = 5;
    std::size_t max_expander_steps = 10;
    // kappa is lowered by this many noise standard deviations (model units),
    // so safety holds for the observation and not only for the latent mean
    double noise_margin = 0.0;
    Point seed{15.0, 0.05, 3.0};
};

struct Incumbent {
    Point x{};
    double f = kInf;
    std::size_t observation = 0;
};

struct TaskBin {
    std::size_t id = 0;
    double representative = 0.0;  // mean tau of the episodes assigned so far
    std::size_t members = 0;
    bool seeded = false;
    std::vector<Point> rejected;
    std::optional<Point> pending;
    std::size_t expander_steps = 0;
    std::optional<Incumbent> incumbent;
};

struct DecisionInfo {
    SafeSets sets;
    std::optional<PsoResult> pso;
    std::size_t pso_calls = 0;
    double suggestion_lcb = kInf;  // measurement units
};

// One pass of the outer loop body for a fixed bin. Pure apart from the bin's
// rejection list / pending target and the RNG. kappa and epsilon in cfg are in
// the belief's model units; the incumbent cost is in measurement units.
GooseAction decide(const SafeGrid& grid, TaskBin& bin, Belief& belief, const GooseConfig& cfg,
                   const std::vector<std::size_t>& forced_safe, Rng& rng, DecisionInfo* info = nullptr);

// Flags for one bin from a belief.
SafeSets compute_safe_sets(const SafeGrid& grid, Belief& belief, const ExpansionParams& params,
                           const std::vector<std::size_t>& forced_safe);

enum class TaskMode { none, binned, exact, temporal };

const char* to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);

struct TaskSpec {
    TaskMode mode = TaskMode::none;
    double half_width = 0.15;
};

// Belief for one bin, backed by the three GP models.
class GpBelief : public Belief {
public:
    GpBelief(GpModel& f, std::vector<GpModel>& q, const SafeGrid& grid, std::size_t bin, double task_input,
             std::size_t* bound_resets = nullptr);

    std::size_t constraint_count() const override { return q_.size(); }
    BoundTable cell_bounds() override;
    double gradient_norm(std::size_t j, std::size_t cell) const override;
    void constraint_upper(std::span<const Point> ps, std::vector<std::vector<double>>& upper) const override;
    void objective_lcb(std::span<const Point> ps, std::vector<double>& lcb) const override;
    double objective_value(double model) const override { return f_.decode(model); }

private:
    std::vector<ExtendedInput> inputs(std::span<const Point> ps) const;

    GpModel& f_;
    std::vector<GpModel>& q_;
    const SafeGrid& grid_;
    std::size_t bin_;
    double task_;
    std::size_t* resets_;
};

struct Observation {
    std::size_t iteration = 0;
    Point x{};
    double task_input = 0.0;
    std::size_t bin = 0;
    EpisodeMetrics metrics;
    bool feasible = false;
};

class GooseState {
public:
    // cfg.expansion.kappa in measurement units, epsilon in model units.
    GooseState(SafeGrid grid, GpModel f, std::vector<GpModel> q, GooseConfig cfg, TaskSpec task,
               std::uint64_t seed);

    // Iteration index of the next episode; the task input in temporal mode.
    void set_time(std::size_t t) { time_ = t; }

    GooseAction step();
    // Fresh flags for the current bin (updates the bound caches).
    SafeSets current_sets();
    // Observation from an evaluate action: feeds the GPs.
    void record_evaluation(const GooseAction& action, const EpisodeMetrics& m, double tau_observed);
    // Monitoring-only episode (apply_incumbent): only the task estimate moves.
    void record_monitoring(const EpisodeMetrics& m, double tau_observed);

    const TaskBin& current_bin() const { return bins_.at(current_); }
    const std::vector<TaskBin>& bins() const { return bins_; }
    const std::vector<Observation>& history() const { return history_; }
    const SafeGrid& grid() const { return grid_; }
    // kappa in measurement units
    const GooseConfig& config() const { return cfg_; }
    // kappa mapped through each constraint model's output transform
    const GooseConfig& model_config() const { return model_cfg_; }
    const GpModel& objective() const { return f_; }
    const std::vector<GpModel>& constraints() const { return q_; }
    const DecisionInfo& last_decision() const { return info_; }
    std::size_t bound_resets() const { return bound_resets_; }
    std::size_t time() const { return time_; }
    // GP task coordinate used for the current bin right now.
    double task_input() const;
    bool feasible(const EpisodeMetrics& m) const;

private:
    std::size_t bin_for(double tau);
    void refresh_incumbents();

    SafeGrid grid_;
    GpModel f_;
    std::vector<GpModel> q_;
    GooseConfig cfg_;
    GooseConfig model_cfg_;
    TaskSpec task_;
    Rng pso_rng_;
    std::vector<TaskBin> bins_;
    std::size_t current_ = 0;
    std::vector<Observation> history_;
    std::vector<std::size_t> forced_;
    std::size_t time_ = 0;
    std::size_t bound_resets_ = 0;
    DecisionInfo info_;
};

}  // namespace safetune
