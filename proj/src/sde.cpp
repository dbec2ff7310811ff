#include "sentinel/sde.hpp"

#include <cmath>
#include <future>
#include <sstream>
#include <thread>

#include "sentinel/errors.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

void validate(const SdeConfig& config) {
    if (config.dim < 1) throw ConfigError("dim must be positive");
    if (config.drift_rate <= 0) throw ConfigError("drift_rate must be positive");
    if (config.diffusion <= 0) throw ConfigError("diffusion must be positive");
    if (config.dt <= 0) throw ConfigError("dt must be positive");
    if (config.duration <= 0) throw ConfigError("duration must be positive");
    if (config.init_std <= 0) throw ConfigError("init_std must be positive");
    if (config.init_mean.size() != 0 && config.init_mean.size() != config.dim)
        throw DimensionMismatchError("init_mean length does not match dim");
    if (config.drift_rate * config.dt >= 0.5) {
        std::ostringstream msg;
        msg << "a*dt = " << config.drift_rate * config.dt
            << " violates the explicit-scheme margin (need < 0.5)";
        throw ConfigError(msg.str());
    }
}

void validate(const PerturbationSchedule& schedule) {
    if (schedule.onset_time < 0) throw ConfigError("onset_time must be nonnegative");
    if (schedule.diffusion_factor < 1) throw ConfigError("diffusion_factor must be >= 1");
    if (schedule.drift_factor <= 0 || schedule.drift_factor > 1)
        throw ConfigError("drift_factor must lie in (0, 1]");
}

namespace {

Trajectory simulate_one(const SdeConfig& config,
                        const std::optional<PerturbationSchedule>& schedule,
                        std::uint64_t seed) {
    const Eigen::Index n_steps = Eigen::Index(std::llround(config.duration / config.dt));
    const Eigen::Index dim = config.dim;

    Trajectory traj;
    traj.config = config;
    traj.schedule = schedule;
    traj.times.resize(n_steps + 1);
    traj.states.resize(n_steps + 1, dim);

    Rng rng = make_rng(seed);
    Eigen::VectorXd mean = config.init_mean.size() ? config.init_mean
                                                   : Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd x = mean + config.init_std * standard_normal_vector(dim, rng);
    traj.times[0] = 0.0;
    traj.states.row(0) = x.transpose();

    for (Eigen::Index i = 0; i < n_steps; ++i) {
        const double t = double(i) * config.dt;
        double a = config.drift_rate;
        double d = config.diffusion;
        if (schedule && t >= schedule->onset_time) {
            a *= schedule->drift_factor;
            d *= schedule->diffusion_factor;
        }
        x += -a * x * config.dt +
             std::sqrt(2.0 * d * config.dt) * standard_normal_vector(dim, rng);
        traj.times[i + 1] = double(i + 1) * config.dt;
        traj.states.row(i + 1) = x.transpose();
    }
    return traj;
}

}  // namespace

std::vector<Trajectory> simulate(const SdeConfig& config,
                                 const std::optional<PerturbationSchedule>& schedule,
                                 int n_paths) {
    validate(config);
    if (schedule) validate(*schedule);
    if (n_paths < 1) throw ConfigError("n_paths must be positive");

    std::vector<Trajectory> paths;
    paths.reserve(size_t(n_paths));
    for (int i = 0; i < n_paths; ++i)
        paths.push_back(simulate_one(config, schedule, substream_seed(config.seed, i)));
    return paths;
}

KlValue analytic_ou_kl(const SdeConfig& config, double t) {
    validate(config);
    if (t < 0) throw ConfigError("t must be nonnegative");

    const double a = config.drift_rate;
    const double stat_var = config.diffusion / a;
    const double decay = std::exp(-a * t);
    const double var_t =
        stat_var + (config.init_std * config.init_std - stat_var) * decay * decay;

    double kl = 0.0;
    const double ratio = var_t / stat_var;
    for (Eigen::Index i = 0; i < config.dim; ++i) {
        const double mu = (config.init_mean.size() ? config.init_mean[i] : 0.0) * decay;
        kl += 0.5 * (ratio + mu * mu / stat_var - 1.0 - std::log(ratio));
    }
    return KlValue(kl);
}

KlValue ensemble_kl(const std::vector<Trajectory>& paths, Eigen::Index time_index,
                    const GaussianModel& stationary, double ridge) {
    if (paths.empty()) throw InsufficientDataError("no paths");
    const Eigen::Index n = Eigen::Index(paths.size());
    const Eigen::Index dim = paths[0].states.cols();
    Eigen::MatrixXd cross(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (time_index >= paths[size_t(i)].states.rows())
            throw DimensionMismatchError("time index beyond trajectory length");
        cross.row(i) = paths[size_t(i)].states.row(time_index);
    }
    return kl_gaussian(fit_gaussian(cross, ridge), stationary);
}

GaussianModel discrete_stationary_law(const SdeConfig& config) {
    validate(config);
    const double var = (config.diffusion / config.drift_rate) /
                       (1.0 - config.drift_rate * config.dt / 2.0);
    return GaussianModel(Eigen::VectorXd::Zero(config.dim),
                         var * Eigen::MatrixXd::Identity(config.dim, config.dim));
}

FptExperiment run_fpt_experiment(const SdeConfig& config,
                                 const PerturbationSchedule& schedule,
                                 const DetectorConfig& detector_config,
                                 double safe_fit_time, int n_trials) {
    validate(config);
    validate(schedule);
    if (safe_fit_time <= 0) throw ConfigError("safe_fit_time must be positive");
    if (safe_fit_time >= schedule.onset_time)
        throw ConfigError("safe_fit_time must precede the perturbation onset");
    if (n_trials < 1) throw ConfigError("n_trials must be positive");

    struct TrialResult {
        std::optional<double> fpt_time;
        std::vector<DetectionEvent> log;
    };

    auto run_trial = [&](int trial) -> TrialResult {
        SdeConfig trial_config = config;
        trial_config.seed = substream_seed(config.seed, std::uint64_t(trial));
        Trajectory traj = simulate(trial_config, schedule, 1)[0];

        Eigen::Index fit_rows = 0;
        while (fit_rows < traj.times.size() && traj.times[fit_rows] <= safe_fit_time)
            ++fit_rows;
        SafeModel safe = fit_safe_model(traj.states.topRows(fit_rows), 0.5,
                                        detector_config.ridge);

        Detector det(detector_config, safe);
        TrialResult result;
        for (Eigen::Index i = 0; i < traj.states.rows(); ++i) {
            auto ev = det.step(traj.states.row(i).transpose());
            if (ev) {
                if (ev->is_fpt) result.fpt_time = double(ev->step) * config.dt;
                result.log.push_back(*ev);
            }
        }
        return result;
    };

    FptExperiment out;
    out.onset_time = schedule.onset_time;
    out.dt = config.dt;

    // fan trials out in bounded batches; trial seeds make order irrelevant
    const int workers = int(std::max(1u, std::thread::hardware_concurrency()));
    for (int base = 0; base < n_trials; base += workers) {
        std::vector<std::future<TrialResult>> batch;
        const int upper = std::min(base + workers, n_trials);
        for (int trial = base; trial < upper; ++trial)
            batch.push_back(std::async(std::launch::async, run_trial, trial));
        for (auto& f : batch) {
            TrialResult r = f.get();
            out.fpt_times.push_back(r.fpt_time);
            out.event_logs.push_back(std::move(r.log));
        }
    }
    return out;
}

}  // namespace sentinel
