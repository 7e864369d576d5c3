#pragma once

#include <complex>
#include <span>
#include <vector>

#include "safetune/plant.hpp"

namespace safetune {

struct MetricsConfig {
    double window_lo = 1000.0;  // Hz
    double window_hi = 2500.0;  // Hz
};

struct EpisodeMetrics {
    double f = kInf;   // mean |e_p|, mdeg
    double q1 = kInf;  // peak torque spectrum magnitude in the window
    double q2 = kInf;  // max |e_p|, mdeg
    double tau_m = std::numeric_limits<double>::quiet_NaN();
    double tau_b = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double kTauFloor = 1e-12;

// Un-normalized forward transform X_k = sum_n x_n exp(-2 pi i k n / N), k = 0..N/2.
std::vector<std::complex<double>> forward_transform(std::span<const double> x);

double cost_f(const TrajectoryRecord& tr);
double constraint_q1(const TrajectoryRecord& tr, const MetricsConfig& cfg);
double constraint_q2(const TrajectoryRecord& tr);
// log10 of the mean magnitude over all N bins of FFT(v - kff v_ref)
double tau_inertia(const TrajectoryRecord& tr);
double tau_friction(const TrajectoryRecord& tr);

EpisodeMetrics evaluate_episode(const TrajectoryRecord& tr, const MetricsConfig& cfg);

}  // namespace safetune
