#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sentinel/detector.hpp"
#include "sentinel/pipeline.hpp"

namespace sentinel {

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

/// A metric is absent (nullopt) when its denominator is zero; it is never
/// silently reported as 0. All values are fractions in [0, 1].
struct MetricSet {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> fpr;
};

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
    double auc = 0.0;
};

/// Ground truth for the window closing at `step`: 1 iff the attack fraction
/// over its window_size samples strictly exceeds quorum.
int window_truth(const std::vector<int>& labels, long step, int window_size,
                 double quorum = 0.5);

/// Tally alarmed vs window truth over the emitted events. Warmup events are
/// skipped; degenerate ones count through their alarm flag. Throws when a
/// window reaches outside the label array or a label is not 0/1.
ConfusionCounts score_windows(const std::vector<DetectionEvent>& events,
                              const std::vector<int>& labels, int window_size,
                              double quorum = 0.5);

MetricSet metrics(const ConfusionCounts& c);

/// Threshold sweep over the scores, ties grouped into one step; auc is the
/// trapezoidal integral of the resulting points. Needs both classes present.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Per-window view of a run, aligned with score_windows: warmup events are
/// dropped, everything else keeps its step, decision margin (kl - threshold),
/// raw kl, volume surrogate and quorum truth.
struct ScoredWindows {
    std::vector<long> steps;
    std::vector<double> margins;
    std::vector<double> kls;
    std::vector<double> fims;
    std::vector<int> truth;
};

ScoredWindows collect_scored_windows(const std::vector<DetectionEvent>& events,
                                     const std::vector<int>& labels, int window_size,
                                     double quorum = 0.5);

/// Stream every projected row through one detector instance and keep all
/// emitted events, warmup included.
std::vector<DetectionEvent> run_detector(const Eigen::MatrixXd& projections,
                                         const SafeModel& safe,
                                         const DetectorConfig& config,
                                         double temperature = 1.0);

struct MethodRow {
    std::string name;
    MetricSet metrics;
    ConfusionCounts counts;  // all zero for reported rows
    // True for context rows quoting previously published results verbatim;
    // those are not measured by this run.
    bool reported = false;
};

struct ComparisonTable {
    std::vector<MethodRow> rows;
    unsigned long seed = 0;
    std::string config_hash;  // fnv1a of the resolved run parameters
    long scored_windows = 0;
    std::vector<DetectionEvent> dynamic_events;  // full logs, for figures
    std::vector<DetectionEvent> static_events;
};

/// Run the adaptive detector and the fixed-threshold baseline over the same
/// stream, score both on the adaptive run's scorable windows (so the metric
/// deltas come from decisions, not from differing window sets), and append
/// the published context rows.
ComparisonTable compare_methods(const Eigen::MatrixXd& projections,
                                const std::vector<int>& labels,
                                const SafeModel& safe, const DetectorConfig& config,
                                double static_k, unsigned long seed,
                                double quorum = 0.5, double temperature = 1.0);

struct FimSample {
    double fim = 0.0;
    int label = 0;  // 1 = anomalous window
};

struct Fig4aPoint {
    double time = 0.0;
    double kl = 0.0;
    double threshold = 0.0;
    bool alarmed = false;
};

/// Write figure data under dir (created if needed): fig1.csv (step, kl,
/// threshold, alarmed), fig2.csv (fim, class), fig3.csv (fpr, tpr),
/// fig4b.csv (binned fim histogram per class), fig4c.csv (fpr, tpr), plus
/// fig4a.csv when a time series is supplied and roc_raw_kl.csv when a
/// second curve is. Output is deterministic; returns the written paths.
std::vector<std::string> emit_figures(const std::string& dir,
                                      const std::vector<DetectionEvent>& events,
                                      const std::vector<FimSample>& fim_values,
                                      const RocCurve& roc,
                                      const std::vector<Fig4aPoint>* fig4a = nullptr,
                                      const RocCurve* raw_roc = nullptr);

}  // namespace sentinel
