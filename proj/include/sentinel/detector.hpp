#pragma once

#include <deque>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "sentinel/pipeline.hpp"

namespace sentinel {

struct DetectorConfig {
    int window_size = 100;    // W, samples per fitted window
    int history_len = 200;    // L, trailing KL values behind the threshold
    double kappa = 3.0;
    double ridge = 1e-6;
    int stride = 1;           // emit every stride-th sample once the buffer fills
    double threshold_floor = 1e-5;  // 10x the default ridge; keeps delta off zero
    int drift_patience = 25;
    // Set to enable the fixed-threshold baseline: delta = k * exp(-log_det/2)
    // for the safe covariance, constant over the run, active from the first
    // emitted window (no warmup phase).
    std::optional<double> static_k;
};

/// Per-emission record. For a degenerate window (covariance not SPD even
/// with ridge) kl, fim and landauer are +inf and the event alarms; that is
/// the fail-closed path, and it wins over the warmup no-alarm rule.
struct DetectionEvent {
    long step = 0;       // 0-based index of the sample that closed the window
    double kl = 0.0;
    double threshold = 0.0;
    bool alarmed = false;
    bool is_fpt = false;
    double fim = 0.0;
    double landauer = 0.0;
    bool warmup = false;
    bool degenerate = false;
};

/// One NDJSON line (no trailing newline), keys in fixed order, non-finite
/// numbers serialized as null.
std::string event_to_json(const DetectionEvent& event);

/// Tracks runs of strictly increasing values; the slow-drift proxy.
class DriftTracker {
  public:
    void observe(double value) {
        if (has_last_ && value > last_) ++run_;
        else run_ = 0;
        last_ = value;
        has_last_ = true;
    }
    void reset() { run_ = 0; has_last_ = false; }
    int run() const { return run_; }
    /// True when the last `patience` observed values were strictly increasing.
    bool triggered(int patience) const { return run_ >= patience - 1; }

  private:
    double last_ = 0.0;
    int run_ = 0;
    bool has_last_ = false;
};

/// Streaming window detector. Single writer per instance; distinct
/// instances are independent.
class Detector {
  public:
    Detector(DetectorConfig config, const SafeModel& safe);

    /// Push one projected sample. Returns an event when a window is emitted
    /// (buffer full and stride boundary), otherwise nothing.
    std::optional<DetectionEvent> step(const Eigen::VectorXd& x, double temperature = 1.0);

    void reset();

    /// Sustained-rise flag over emitted KL values, threshold crossings aside.
    bool drift_monitor() const { return drift_.triggered(config_.drift_patience); }

    const DetectorConfig& config() const { return config_; }
    long steps_seen() const { return steps_seen_; }
    std::optional<long> fpt() const { return fpt_; }
    const std::deque<double>& kl_history() const { return kl_history_; }
    bool frozen() const { return frozen_; }
    bool warmed_up() const { return long(kl_history_.size()) >= config_.history_len; }

  private:
    double current_threshold() const;

    DetectorConfig config_;
    GaussianModel safe_;
    double static_threshold_ = 0.0;  // cached when static_k is set

    Eigen::MatrixXd buffer_;   // window_size x dim ring
    long steps_seen_ = 0;
    std::deque<double> kl_history_;
    std::optional<long> fpt_;
    DriftTracker drift_;
    bool frozen_ = false;      // last emitted event alarmed; informational
};

/// Fixed baseline threshold k * sqrt(det g) with g the volume surrogate of
/// the safe covariance, i.e. k * exp(-log_det / 2).
double static_threshold(const SafeModel& safe, double k);

}  // namespace sentinel
