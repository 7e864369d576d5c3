#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "safetune/common.hpp"

namespace safetune {

enum class KernelMode { se_ard, multitask_product, multitask_temporal };

const char* to_string(KernelMode mode);
KernelMode kernel_mode_from_string(const std::string& s);

struct KernelConfig {
    Point lengthscales{30.0, 0.03, 3.0};
    // SE lengthscale over tau in multitask-product mode, unused otherwise.
    double task_lengthscale = 0.5;
    double signal_variance = 1.0;
    // per-step forgetting in multitask-temporal mode
    double temporal_epsilon = 1e-4;
    KernelMode mode = KernelMode::se_ard;

    void validate() const;
};

// Controller point plus task coordinate. The task coordinate is tau in
// multitask-product mode, the iteration index in temporal mode and is
// ignored in plain SE-ARD mode.
struct ExtendedInput {
    Point x{};
    double task = 0.0;
};

double kernel_eval(const ExtendedInput& a, const ExtendedInput& b, const KernelConfig& cfg);

// Flat form [Kp, Kv, Ti, task]; sizes must match.
double kernel_eval(std::span<const double> a, std::span<const double> b, const KernelConfig& cfg);

struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
};

class GaussianProcess {
public:
    GaussianProcess(KernelConfig kernel, double noise_variance, double prior_mean = 0.0);

    void add_observation(const ExtendedInput& in, double y);

    Posterior posterior(const ExtendedInput& q) const;
    // Batched posterior; one triangular solve for all queries.
    void posterior(std::span<const ExtendedInput> qs, std::vector<double>& mean,
                   std::vector<double>& variance) const;
    void posterior_mean(std::span<const ExtendedInput> qs, std::vector<double>& mean) const;
    Point gradient_mean(const ExtendedInput& q) const;

    std::size_t size() const { return inputs_.size(); }
    const KernelConfig& kernel() const { return kernel_; }
    double noise_variance() const { return noise_variance_; }
    double prior_mean() const { return prior_mean_; }
    const std::vector<ExtendedInput>& inputs() const { return inputs_; }
    const std::vector<double>& targets() const { return targets_; }

private:
    void refactor();
    void cross_covariance(std::span<const ExtendedInput> qs, Eigen::MatrixXd& out) const;

    KernelConfig kernel_;
    double noise_variance_;
    double prior_mean_;
    std::vector<ExtendedInput> inputs_;
    std::vector<double> targets_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
};

// GP plus the running intersected confidence intervals at grid points.
// Space the GP works in. With log, observations are stored as log(y) and all
// bounds, thresholds and margins handed to the model are in log units too.
enum class OutputTransform { identity, log };

const char* to_string(OutputTransform t);
OutputTransform output_transform_from_string(const std::string& s);

class GpModel {
public:
    GpModel(GaussianProcess gp, double beta, bool monotone, OutputTransform transform = OutputTransform::identity);

    double encode(double y) const;
    double decode(double v) const;

    Interval raw_bounds(const ExtendedInput& x) const;
    // Intersects with the cached interval under key (fresh keys start from
    // the raw interval). Throws ModelInconsistency when the raw interval is
    // disjoint from the cached one; the cache is left untouched then.
    Interval update_bounds(std::uint64_t key, const ExtendedInput& x);
    Interval update_bounds(std::uint64_t key, Interval raw);
    // Overwrites the cache entry.
    void reset_bounds(std::uint64_t key, Interval raw);
    const Interval* cached(std::uint64_t key) const;

    // y in measurement units
    void add_observation(const ExtendedInput& in, double y) { gp_.add_observation(in, encode(y)); }

    GaussianProcess& gp() { return gp_; }
    const GaussianProcess& gp() const { return gp_; }
    double beta() const { return beta_; }
    bool monotone() const { return monotone_; }
    OutputTransform transform() const { return transform_; }

private:
    GaussianProcess gp_;
    double beta_;
    bool monotone_;
    OutputTransform transform_;
    std::unordered_map<std::uint64_t, Interval> cache_;
};

inline std::uint64_t bound_key(std::size_t bin, std::size_t cell) {
    return (static_cast<std::uint64_t>(bin) << 32) | static_cast<std::uint64_t>(cell);
}

}  // namespace safetune
