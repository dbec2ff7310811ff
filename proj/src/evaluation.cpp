#include "sentinel/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sentinel/errors.hpp"
#include "sentinel/hash.hpp"

namespace sentinel {

namespace {

// shortest round-trip decimal; deterministic across runs
std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void check_label(int label) {
    if (label != 0 && label != 1) throw ConfigError("labels must be 0 or 1");
}

}  // namespace

int window_truth(const std::vector<int>& labels, long step, int window_size,
                 double quorum) {
    if (window_size < 1) throw ConfigError("window_size must be positive");
    if (!(quorum >= 0.0 && quorum <= 1.0)) throw ConfigError("quorum must be in [0, 1]");
    const long lo = step - window_size + 1;
    if (lo < 0) throw DimensionMismatchError("event step precedes a full window");
    if (step >= long(labels.size()))
        throw DimensionMismatchError("labels do not cover the event window");
    long attacks = 0;
    for (long i = lo; i <= step; ++i) {
        check_label(labels[size_t(i)]);
        attacks += labels[size_t(i)];
    }
    return double(attacks) > quorum * double(window_size) ? 1 : 0;
}

ConfusionCounts score_windows(const std::vector<DetectionEvent>& events,
                              const std::vector<int>& labels, int window_size,
                              double quorum) {
    ConfusionCounts c;
    for (const auto& ev : events) {
        if (ev.warmup) continue;
        const int truth = window_truth(labels, ev.step, window_size, quorum);
        if (ev.alarmed)
            truth ? ++c.tp : ++c.fp;
        else
            truth ? ++c.fn : ++c.tn;
    }
    return c;
}

MetricSet metrics(const ConfusionCounts& c) {
    MetricSet m;
    const long total = c.total();
    if (total > 0) m.accuracy = double(c.tp + c.tn) / double(total);
    if (c.tp + c.fp > 0) m.precision = double(c.tp) / double(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = double(c.tp) / double(c.tp + c.fn);
    if (c.fp + c.tn > 0) m.fpr = double(c.fp) / double(c.fp + c.tn);
    return m;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DimensionMismatchError("scores and labels differ in length");
    long pos = 0, neg = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        check_label(labels[i]);
        if (std::isnan(scores[i])) throw ConfigError("scores must not be NaN");
        labels[i] ? ++pos : ++neg;
    }
    if (pos == 0 || neg == 0)
        throw InsufficientDataError("roc needs both classes present");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    double auc = 0.0, prev_fpr = 0.0, prev_tpr = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;  // equal scores move in one sweep step
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) labels[order[k]] ? ++tp : ++fp;
        const double fpr = double(fp) / double(neg);
        const double tpr = double(tp) / double(pos);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        curve.points.emplace_back(fpr, tpr);
        prev_fpr = fpr;
        prev_tpr = tpr;
        i = j;
    }
    curve.auc = auc;
    return curve;
}

ScoredWindows collect_scored_windows(const std::vector<DetectionEvent>& events,
                                     const std::vector<int>& labels, int window_size,
                                     double quorum) {
    ScoredWindows out;
    for (const auto& ev : events) {
        if (ev.warmup) continue;
        out.steps.push_back(ev.step);
        out.margins.push_back(ev.kl - ev.threshold);
        out.kls.push_back(ev.kl);
        out.fims.push_back(ev.fim);
        out.truth.push_back(window_truth(labels, ev.step, window_size, quorum));
    }
    return out;
}

std::vector<DetectionEvent> run_detector(const Eigen::MatrixXd& projections,
                                         const SafeModel& safe,
                                         const DetectorConfig& config,
                                         double temperature) {
    Detector det(config, safe);
    std::vector<DetectionEvent> events;
    for (Eigen::Index i = 0; i < projections.rows(); ++i) {
        auto ev = det.step(projections.row(i).transpose(), temperature);
        if (ev) events.push_back(*ev);
    }
    return events;
}

namespace {

MethodRow reported_row(std::string name, double acc, double prec, double rec,
                       double fpr) {
    MethodRow row;
    row.name = std::move(name);
    row.metrics.accuracy = acc;
    row.metrics.precision = prec;
    row.metrics.recall = rec;
    row.metrics.fpr = fpr;
    row.reported = true;
    return row;
}

std::string resolved_config_string(const DetectorConfig& c, double static_k,
                                   double quorum, double temperature,
                                   unsigned long seed) {
    std::ostringstream s;
    s << "w=" << c.window_size << ";l=" << c.history_len << ";kappa=" << num(c.kappa)
      << ";ridge=" << num(c.ridge) << ";stride=" << c.stride
      << ";floor=" << num(c.threshold_floor) << ";patience=" << c.drift_patience
      << ";static_k=" << num(static_k) << ";quorum=" << num(quorum)
      << ";temperature=" << num(temperature) << ";seed=" << seed;
    return s.str();
}

}  // namespace

ComparisonTable compare_methods(const Eigen::MatrixXd& projections,
                                const std::vector<int>& labels,
                                const SafeModel& safe, const DetectorConfig& config,
                                double static_k, unsigned long seed, double quorum,
                                double temperature) {
    if (long(labels.size()) != projections.rows())
        throw DimensionMismatchError("one label per projected sample required");

    DetectorConfig dyn_cfg = config;
    dyn_cfg.static_k.reset();
    DetectorConfig sta_cfg = config;
    sta_cfg.static_k = static_k;

    ComparisonTable table;
    table.seed = seed;
    table.config_hash =
        hex64(fnv1a64(resolved_config_string(config, static_k, quorum, temperature, seed)));
    table.dynamic_events = run_detector(projections, safe, dyn_cfg, temperature);
    table.static_events = run_detector(projections, safe, sta_cfg, temperature);
    if (table.static_events.size() != table.dynamic_events.size())
        throw Error("method runs emitted different window counts");

    // both methods are scored on the adaptive run's scorable windows, so the
    // deltas reflect decisions rather than window-set composition
    std::vector<DetectionEvent> static_scored;
    static_scored.reserve(table.static_events.size());
    for (size_t i = 0; i < table.static_events.size(); ++i)
        if (!table.dynamic_events[i].warmup)
            static_scored.push_back(table.static_events[i]);

    const ConfusionCounts dyn_counts =
        score_windows(table.dynamic_events, labels, config.window_size, quorum);
    const ConfusionCounts sta_counts =
        score_windows(static_scored, labels, config.window_size, quorum);
    table.scored_windows = dyn_counts.total();

    MethodRow dyn_row;
    dyn_row.name = "dynamic (this run)";
    dyn_row.counts = dyn_counts;
    dyn_row.metrics = metrics(dyn_counts);
    MethodRow sta_row;
    sta_row.name = "static (this run)";
    sta_row.counts = sta_counts;
    sta_row.metrics = metrics(sta_counts);

    table.rows.push_back(std::move(dyn_row));
    table.rows.push_back(std::move(sta_row));
    table.rows.push_back(reported_row("static threshold (reported)", 0.894, 0.862, 0.871, 0.121));
    table.rows.push_back(reported_row("one-class svm (reported)", 0.912, 0.885, 0.893, 0.103));
    table.rows.push_back(reported_row("isolation forest (reported)", 0.927, 0.901, 0.915, 0.089));
    table.rows.push_back(reported_row("dynamic threshold (reported)", 0.968, 0.954, 0.942, 0.032));
    return table;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

}  // namespace

std::vector<std::string> emit_figures(const std::string& dir,
                                      const std::vector<DetectionEvent>& events,
                                      const std::vector<FimSample>& fim_values,
                                      const RocCurve& roc,
                                      const std::vector<Fig4aPoint>* fig4a,
                                      const RocCurve* raw_roc) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> written;
    auto add = [&](const fs::path& p) { written.push_back(p.string()); };

    {
        fs::path p = fs::path(dir) / "fig1.csv";
        auto out = open_out(p);
        out << "step,kl,threshold,alarmed\n";
        for (const auto& ev : events) {
            if (ev.warmup) continue;
            out << ev.step << ',' << num(ev.kl) << ',' << num(ev.threshold) << ','
                << (ev.alarmed ? 1 : 0) << '\n';
        }
        add(p);
    }
    {
        fs::path p = fs::path(dir) / "fig2.csv";
        auto out = open_out(p);
        out << "fim,class\n";
        for (const auto& s : fim_values)
            out << num(s.fim) << ',' << (s.label ? "anomalous" : "normal") << '\n';
        add(p);
    }
    {
        fs::path p = fs::path(dir) / "fig3.csv";
        auto out = open_out(p);
        out << "fpr,tpr\n";
        for (const auto& [fpr, tpr] : roc.points) out << num(fpr) << ',' << num(tpr) << '\n';
        add(p);
    }
    {
        // shared-bin histogram of the volume surrogate, one count column per class
        fs::path p = fs::path(dir) / "fig4b.csv";
        auto out = open_out(p);
        out << "bin_lo,bin_hi,normal,anomalous\n";
        std::vector<FimSample> finite;
        for (const auto& s : fim_values)
            if (std::isfinite(s.fim)) finite.push_back(s);
        if (!finite.empty()) {
            double lo = finite.front().fim, hi = finite.front().fim;
            for (const auto& s : finite) {
                lo = std::min(lo, s.fim);
                hi = std::max(hi, s.fim);
            }
            const int bins = hi > lo ? 30 : 1;
            const double width = (hi - lo) / double(bins);
            std::vector<long> normal(bins, 0), anomalous(bins, 0);
            for (const auto& s : finite) {
                int b = width > 0 ? int((s.fim - lo) / width) : 0;
                b = std::clamp(b, 0, bins - 1);
                (s.label ? anomalous : normal)[size_t(b)]++;
            }
            for (int b = 0; b < bins; ++b)
                out << num(lo + width * b) << ',' << num(lo + width * (b + 1)) << ','
                    << normal[size_t(b)] << ',' << anomalous[size_t(b)] << '\n';
        }
        add(p);
    }
    {
        fs::path p = fs::path(dir) / "fig4c.csv";
        auto out = open_out(p);
        out << "fpr,tpr\n";
        for (const auto& [fpr, tpr] : roc.points) out << num(fpr) << ',' << num(tpr) << '\n';
        add(p);
    }
    if (fig4a) {
        fs::path p = fs::path(dir) / "fig4a.csv";
        auto out = open_out(p);
        out << "time,kl,threshold,alarmed\n";
        for (const auto& pt : *fig4a)
            out << num(pt.time) << ',' << num(pt.kl) << ',' << num(pt.threshold) << ','
                << (pt.alarmed ? 1 : 0) << '\n';
        add(p);
    }
    if (raw_roc) {
        fs::path p = fs::path(dir) / "roc_raw_kl.csv";
        auto out = open_out(p);
        out << "fpr,tpr\n";
        for (const auto& [fpr, tpr] : raw_roc->points)
            out << num(fpr) << ',' << num(tpr) << '\n';
        add(p);
    }
    return written;
}

}  // namespace sentinel
