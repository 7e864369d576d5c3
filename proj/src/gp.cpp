#include "safetune/gp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

namespace safetune {

const char* to_string(KernelMode mode) {
    switch (mode) {
        case KernelMode::se_ard: return "se-ard";
        case KernelMode::multitask_product: return "multitask-product";
        case KernelMode::multitask_temporal: return "multitask-temporal";
    }
    return "?";
}

KernelMode kernel_mode_from_string(const std::string& s) {
    if (s == "se-ard") return KernelMode::se_ard;
    if (s == "multitask-product") return KernelMode::multitask_product;
    if (s == "multitask-temporal") return KernelMode::multitask_temporal;
    throw ConfigError("unknown kernel mode '" + s + "'");
}

void KernelConfig::validate() const {
    for (double l : lengthscales)
        if (!(l > 0.0) || !std::isfinite(l)) throw ContractViolation("lengthscales must be positive");
    if (mode == KernelMode::multitask_product && !(task_lengthscale > 0.0))
        throw ContractViolation("task lengthscale must be positive");
    if (!(signal_variance > 0.0)) throw ContractViolation("signal variance must be positive");
    if (!(temporal_epsilon >= 0.0 && temporal_epsilon < 1.0))
        throw ContractViolation("temporal epsilon must lie in [0, 1)");
}

namespace {

inline double task_factor(double ta, double tb, const KernelConfig& cfg) {
    switch (cfg.mode) {
        case KernelMode::se_ard: return 1.0;
        case KernelMode::multitask_product: {
            const double r = (ta - tb) / cfg.task_lengthscale;
            return std::exp(-0.5 * r * r);
        }
        case KernelMode::multitask_temporal:
            // (1 - eps)^(|t - t'| / 2)
            return std::exp(0.5 * std::abs(ta - tb) * std::log1p(-cfg.temporal_epsilon));
    }
    return 1.0;
}

}  // namespace

double kernel_eval(const ExtendedInput& a, const ExtendedInput& b, const KernelConfig& cfg) {
    double r2 = 0.0;
    for (std::size_t d = 0; d < kDims; ++d) {
        const double r = (a.x[d] - b.x[d]) / cfg.lengthscales[d];
        r2 += r * r;
    }
    return cfg.signal_variance * std::exp(-0.5 * r2) * task_factor(a.task, b.task, cfg);
}

double kernel_eval(std::span<const double> a, std::span<const double> b, const KernelConfig& cfg) {
    if (a.size() != kDims + 1 || b.size() != kDims + 1)
        throw ContractViolation(fmt::format("kernel inputs need {} entries, got {} and {}", kDims + 1,
                                            a.size(), b.size()));
    ExtendedInput ea, eb;
    std::copy_n(a.begin(), kDims, ea.x.begin());
    std::copy_n(b.begin(), kDims, eb.x.begin());
    ea.task = a[kDims];
    eb.task = b[kDims];
    return kernel_eval(ea, eb, cfg);
}

GaussianProcess::GaussianProcess(KernelConfig kernel, double noise_variance, double prior_mean)
    : kernel_(kernel), noise_variance_(noise_variance), prior_mean_(prior_mean) {
    kernel_.validate();
    if (!(noise_variance_ > 0.0) || !std::isfinite(noise_variance_))
        throw ContractViolation("noise variance must be positive");
}

void GaussianProcess::add_observation(const ExtendedInput& in, double y) {
    if (!std::isfinite(y)) throw ContractViolation("non-finite observation");
    for (double v : in.x)
        if (!std::isfinite(v)) throw ContractViolation("non-finite input");
    inputs_.push_back(in);
    targets_.push_back(y);
    refactor();
}

void GaussianProcess::refactor() {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = kernel_eval(inputs_[i], inputs_[j], kernel_);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    k.diagonal().array() += noise_variance_ + 1e-10 * kernel_.signal_variance;
    llt_.compute(k);
    if (llt_.info() != Eigen::Success) {
        // report the most correlated pair, the usual culprit
        std::size_t bi = 0, bj = 0;
        double best = -kInf;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < i; ++j)
                if (k(i, j) > best) {
                    best = k(i, j);
                    bi = static_cast<std::size_t>(j);
                    bj = static_cast<std::size_t>(i);
                }
        inputs_.pop_back();
        targets_.pop_back();
        refactor();
        throw DegenerateModel(fmt::format("Gram matrix not positive definite; near-duplicate inputs {} and {}", bi, bj),
                              bi, bj);
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = targets_[i] - prior_mean_;
    alpha_ = llt_.solve(y);
}

void GaussianProcess::cross_covariance(std::span<const ExtendedInput> qs, Eigen::MatrixXd& out) const {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    const auto m = static_cast<Eigen::Index>(qs.size());
    out.resize(n, m);
    for (Eigen::Index c = 0; c < m; ++c)
        for (Eigen::Index r = 0; r < n; ++r) out(r, c) = kernel_eval(inputs_[r], qs[c], kernel_);
}

Posterior GaussianProcess::posterior(const ExtendedInput& q) const {
    std::vector<double> mean, var;
    posterior(std::span<const ExtendedInput>(&q, 1), mean, var);
    return {mean[0], var[0]};
}

void GaussianProcess::posterior(std::span<const ExtendedInput> qs, std::vector<double>& mean,
                                std::vector<double>& variance) const {
    const std::size_t m = qs.size();
    mean.assign(m, prior_mean_);
    variance.assign(m, kernel_.signal_variance);
    if (inputs_.empty() || m == 0) {
        for (std::size_t i = 0; i < m; ++i) variance[i] = kernel_eval(qs[i], qs[i], kernel_);
        return;
    }
    Eigen::MatrixXd ks;
    cross_covariance(qs, ks);
    const Eigen::VectorXd mu = ks.transpose() * alpha_;
    llt_.matrixL().solveInPlace(ks);
    const Eigen::VectorXd reduction = ks.colwise().squaredNorm().transpose();
    for (std::size_t i = 0; i < m; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        mean[i] = prior_mean_ + mu(ii);
        variance[i] = std::max(0.0, kernel_eval(qs[i], qs[i], kernel_) - reduction(ii));
    }
}

void GaussianProcess::posterior_mean(std::span<const ExtendedInput> qs, std::vector<double>& mean) const {
    mean.assign(qs.size(), prior_mean_);
    const std::size_t n = inputs_.size();
    for (std::size_t c = 0; c < qs.size(); ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            acc += alpha_(static_cast<Eigen::Index>(r)) * kernel_eval(inputs_[r], qs[c], kernel_);
        mean[c] += acc;
    }
}

Point GaussianProcess::gradient_mean(const ExtendedInput& q) const {
    Point g{};
    for (std::size_t r = 0; r < inputs_.size(); ++r) {
        const double w = alpha_(static_cast<Eigen::Index>(r)) * kernel_eval(inputs_[r], q, kernel_);
        for (std::size_t d = 0; d < kDims; ++d) {
            const double l = kernel_.lengthscales[d];
            g[d] -= w * (q.x[d] - inputs_[r].x[d]) / (l * l);
        }
    }
    return g;
}

const char* to_string(OutputTransform t) { return t == OutputTransform::log ? "log" : "identity"; }

OutputTransform output_transform_from_string(const std::string& s) {
    if (s == "log") return OutputTransform::log;
    if (s == "identity") return OutputTransform::identity;
    throw ConfigError("unknown output transform '" + s + "'");
}

GpModel::GpModel(GaussianProcess gp, double beta, bool monotone, OutputTransform transform)
    : gp_(std::move(gp)), beta_(beta), monotone_(monotone), transform_(transform) {
    if (!(beta_ > 0.0)) throw ContractViolation("beta must be positive");
}

double GpModel::encode(double y) const {
    if (transform_ == OutputTransform::identity) return y;
    if (!(y > 0.0)) throw ContractViolation("log output transform needs positive observations");
    return std::log(y);
}

double GpModel::decode(double v) const { return transform_ == OutputTransform::identity ? v : std::exp(v); }

Interval GpModel::raw_bounds(const ExtendedInput& x) const {
    const Posterior p = gp_.posterior(x);
    const double s = std::sqrt(p.variance);
    return {p.mean - beta_ * s, p.mean + beta_ * s};
}

Interval GpModel::update_bounds(std::uint64_t key, const ExtendedInput& x) {
    return update_bounds(key, raw_bounds(x));
}

Interval GpModel::update_bounds(std::uint64_t key, Interval raw) {
    if (!monotone_) {
        cache_[key] = raw;
        return raw;
    }
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        cache_.emplace(key, raw);
        return raw;
    }
    const Interval next{std::max(it->second.lo, raw.lo), std::min(it->second.hi, raw.hi)};
    if (next.lo > next.hi)
        throw ModelInconsistency(fmt::format("confidence intervals disjoint: cached [{}, {}], new [{}, {}]",
                                             it->second.lo, it->second.hi, raw.lo, raw.hi));
    it->second = next;
    return next;
}

void GpModel::reset_bounds(std::uint64_t key, Interval raw) { cache_[key] = raw; }

const Interval* GpModel::cached(std::uint64_t key) const {
    auto it = cache_.find(key);
    return it == cache_.end() ? nullptr : &it->second;
}

}  // namespace safetune
