#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sentinel/detector.hpp"
#include "sentinel/gaussian.hpp"

namespace sentinel {

/// Linear-drift diffusion dx = -a x dt + sqrt(2 D) dW, stationary law
/// N(0, (D/a) I). Discretized explicitly, hence the a*dt stability margin.
struct SdeConfig {
    Eigen::Index dim = 1;
    double drift_rate = 1.0;   // a
    double diffusion = 1.0;    // D
    double dt = 0.01;
    double duration = 1.0;
    Eigen::VectorXd init_mean; // defaults to zero when empty
    double init_std = 1.0;
    std::uint64_t seed = 0;
};

void validate(const SdeConfig& config);

/// After onset_time the diffusion is inflated and/or the drift attenuated.
struct PerturbationSchedule {
    double onset_time = 0.0;
    double diffusion_factor = 1.0;  // >= 1
    double drift_factor = 1.0;      // in (0, 1]
};

void validate(const PerturbationSchedule& schedule);

struct Trajectory {
    Eigen::VectorXd times;   // equally spaced by dt, starting at 0
    Eigen::MatrixXd states;  // one row per time point
    SdeConfig config;
    std::optional<PerturbationSchedule> schedule;
};

/// Euler-Maruyama sample paths. Path i draws from an RNG seeded with
/// config.seed + i, so the set is reproducible and order-independent.
std::vector<Trajectory> simulate(const SdeConfig& config,
                                 const std::optional<PerturbationSchedule>& schedule,
                                 int n_paths);

/// KL(law of x_t || stationary law) for the unperturbed process with an
/// isotropic initial condition; closed form, the oracle for decay checks.
KlValue analytic_ou_kl(const SdeConfig& config, double t);

/// Gaussian fitted across paths at one time index, the empirical
/// counterpart of analytic_ou_kl on an ensemble.
KlValue ensemble_kl(const std::vector<Trajectory>& paths, Eigen::Index time_index,
                    const GaussianModel& stationary, double ridge = 0.0);

/// Stationary law of the discretized process; its variance carries the
/// O(dt) Euler-Maruyama correction (D/a) / (1 - a dt/2).
GaussianModel discrete_stationary_law(const SdeConfig& config);

struct FptExperiment {
    std::vector<std::optional<double>> fpt_times;        // per trial, in time units
    std::vector<std::vector<DetectionEvent>> event_logs; // per trial
    double onset_time = 0.0;
    double dt = 0.0;
};

/// Per trial: simulate one path, fit the safe model on the pre-onset
/// segment [0, safe_fit_time], stream the whole path through a detector,
/// and record the first-passage time if any. Trials are independent
/// (seed + trial index) and may run on worker threads; results are always
/// in trial order.
FptExperiment run_fpt_experiment(const SdeConfig& config,
                                 const PerturbationSchedule& schedule,
                                 const DetectorConfig& detector_config,
                                 double safe_fit_time, int n_trials);

}  // namespace sentinel
