#include "safetune/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <unordered_map>

#include <fftw3.h>

namespace safetune {

namespace {

constexpr double kRadToMdeg = 180.0 / std::numbers::pi * 1e3;

// One plan per length, built once. Planning is not thread safe in FFTW, so
// the whole transform runs under the lock; episodes are cheap next to it.
class PlanCache {
public:
    std::vector<std::complex<double>> run(std::span<const double> x) {
        std::lock_guard lock(mu_);
        const int n = static_cast<int>(x.size());
        Entry& e = entries_[n];
        if (!e.plan) {
            e.in = fftw_alloc_real(x.size());
            e.out = fftw_alloc_complex(x.size() / 2 + 1);
            e.plan = fftw_plan_dft_r2c_1d(n, e.in, e.out, FFTW_ESTIMATE);
        }
        std::copy(x.begin(), x.end(), e.in);
        fftw_execute(e.plan);
        std::vector<std::complex<double>> out(x.size() / 2 + 1);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = {e.out[k][0], e.out[k][1]};
        return out;
    }
    ~PlanCache() {
        for (auto& [n, e] : entries_) {
            fftw_destroy_plan(e.plan);
            fftw_free(e.in);
            fftw_free(e.out);
        }
    }

private:
    struct Entry {
        fftw_plan plan = nullptr;
        double* in = nullptr;
        fftw_complex* out = nullptr;
    };
    std::mutex mu_;
    std::unordered_map<int, Entry> entries_;
};

PlanCache& plans() {
    static PlanCache cache;
    return cache;
}

bool usable(const TrajectoryRecord& tr) { return !tr.aborted && tr.size() > 0; }

}  // namespace

std::vector<std::complex<double>> forward_transform(std::span<const double> x) {
    if (x.empty()) return {};
    return plans().run(x);
}

double cost_f(const TrajectoryRecord& tr) {
    if (!usable(tr)) return kInf;
    double s = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) s += std::abs(tr.p_ref[k] - tr.p[k]);
    return s / static_cast<double>(tr.size()) * kRadToMdeg;
}

double constraint_q2(const TrajectoryRecord& tr) {
    if (!usable(tr)) return kInf;
    double m = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) m = std::max(m, std::abs(tr.p_ref[k] - tr.p[k]));
    return m * kRadToMdeg;
}

double constraint_q1(const TrajectoryRecord& tr, const MetricsConfig& cfg) {
    const std::size_t n = tr.torque_applied.size();
    if (n < 2) throw ConfigError("q1 needs at least two samples");
    const double df = 1.0 / (static_cast<double>(n) * tr.dt);
    const double nyquist = 0.5 / tr.dt;
    if (!(cfg.window_lo > 0.0) || !(cfg.window_hi <= nyquist) || cfg.window_hi < cfg.window_lo)
        throw ConfigError("q1 window must lie inside (0, Nyquist]");
    const auto k_lo = static_cast<std::size_t>(std::ceil(cfg.window_lo / df - 1e-9));
    const auto k_hi = static_cast<std::size_t>(std::floor(cfg.window_hi / df + 1e-9));
    if (k_lo > k_hi || k_hi > n / 2) throw ConfigError("q1 window contains no frequency bin");
    if (!usable(tr)) return kInf;

    double mean = 0.0;
    for (double t : tr.torque_applied) mean += t;
    mean /= static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = tr.torque_applied[k] - mean;
    const auto spec = forward_transform(x);
    double peak = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) peak = std::max(peak, std::abs(spec[k]));
    return peak;
}

double tau_inertia(const TrajectoryRecord& tr) {
    if (!usable(tr)) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = tr.size();
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[k] = tr.v[k] - tr.kff * tr.v_ref[k];
    const auto spec = forward_transform(r);
    // two-sided mean from the one-sided half via conjugate symmetry
    double s = std::abs(spec[0]);
    for (std::size_t k = 1; k < spec.size(); ++k) {
        const bool self_mirror = (n % 2 == 0) && k == n / 2;
        s += (self_mirror ? 1.0 : 2.0) * std::abs(spec[k]);
    }
    const double mean = s / static_cast<double>(n);
    return std::log10(std::max(mean, kTauFloor));
}

double tau_friction(const TrajectoryRecord& tr) {
    if (!usable(tr)) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double t : tr.torque_applied) s += t;
    return s / static_cast<double>(tr.size());
}

EpisodeMetrics evaluate_episode(const TrajectoryRecord& tr, const MetricsConfig& cfg) {
    EpisodeMetrics m;
    m.f = cost_f(tr);
    m.q1 = constraint_q1(tr, cfg);
    m.q2 = constraint_q2(tr);
    m.tau_m = tau_inertia(tr);
    m.tau_b = tau_friction(tr);
    return m;
}

}  // namespace safetune
