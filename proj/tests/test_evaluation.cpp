#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sentinel/evaluation.hpp"
#include "sentinel/random.hpp"

using namespace sentinel;

namespace {

DetectionEvent make_event(long step, bool alarmed, bool warmup = false) {
    DetectionEvent ev;
    ev.step = step;
    ev.alarmed = alarmed;
    ev.warmup = warmup;
    ev.kl = alarmed ? 2.0 : 0.1;
    ev.threshold = 1.0;
    ev.fim = 1.0;
    return ev;
}

// brute force P(score+ > score-) + 0.5 P(tie) over all cross-class pairs
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / double(pairs);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("window truth needs a strict majority") {
    // windows of 10: exactly 5 attacks is still a normal window
    std::vector<int> labels(20, 0);
    for (int i = 10; i < 15; ++i) labels[size_t(i)] = 1;
    CHECK(window_truth(labels, 19, 10) == 0);
    labels[15] = 1;  // six of ten
    CHECK(window_truth(labels, 19, 10) == 1);
    CHECK(window_truth(labels, 9, 10) == 0);

    // quorum knob moves the boundary
    CHECK(window_truth(labels, 19, 10, 0.3) == 1);
    CHECK(window_truth(labels, 19, 10, 0.6) == 0);
}

TEST_CASE("score_windows trivial streams") {
    std::vector<int> normals(40, 0);
    std::vector<DetectionEvent> quiet;
    for (long s = 9; s < 40; ++s) quiet.push_back(make_event(s, false));
    ConfusionCounts c = score_windows(quiet, normals, 10);
    CHECK(c.tn == 31);
    CHECK(c.tp + c.fp + c.fn == 0);

    std::vector<int> attacks(40, 1);
    std::vector<DetectionEvent> loud;
    for (long s = 9; s < 40; ++s) loud.push_back(make_event(s, true));
    c = score_windows(loud, attacks, 10);
    CHECK(c.tp == 31);
    CHECK(c.fp + c.tn + c.fn == 0);
}

TEST_CASE("score_windows hand-computed fixture") {
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 0, 0, 1,
                                     1, 1, 1, 0, 0, 0, 1, 1, 1, 1};
    std::vector<DetectionEvent> events = {
        make_event(3, true),    // window 0,0,0,0 -> fp
        make_event(5, false),   // 0,0,1,1: two of four is not a majority -> tn
        make_event(6, true),    // 0,1,1,1 -> tp
        make_event(9, false),   // 1,0,0,1 -> tn
        make_event(11, false),  // 0,1,1,1 -> fn
        make_event(14, true),   // 1,1,0,0 -> fp
        make_event(19, true),   // 1,1,1,1 -> tp
        make_event(19, false, true),  // warmup, skipped
        make_event(7, true),    // 1,1,1,0 -> tp
        make_event(13, false),  // 1,1,1,0 -> fn
    };
    ConfusionCounts c = score_windows(events, labels, 4);
    CHECK(c.tp == 3);
    CHECK(c.fp == 2);
    CHECK(c.tn == 2);
    CHECK(c.fn == 2);
    CHECK(c.total() == 9);
}

TEST_CASE("score_windows input validation") {
    std::vector<int> labels(20, 0);
    CHECK_THROWS_AS(score_windows({make_event(25, false)}, labels, 4),
                    DimensionMismatchError);
    CHECK_THROWS_AS(score_windows({make_event(2, false)}, labels, 4),
                    DimensionMismatchError);
    std::vector<int> bad(20, 0);
    bad[5] = 2;
    CHECK_THROWS_AS(score_windows({make_event(6, false)}, bad, 4), ConfigError);
    CHECK_THROWS_AS(score_windows({make_event(6, false)}, labels, 0), ConfigError);
    CHECK_THROWS_AS(window_truth(labels, 6, 4, -0.1), ConfigError);
    CHECK_THROWS_AS(window_truth(labels, 6, 4, 1.5), ConfigError);
}

TEST_CASE("metrics on a table-shaped fixture") {
    ConfusionCounts c{954, 46, 1394, 58};
    MetricSet m = metrics(c);
    REQUIRE(m.accuracy.has_value());
    REQUIRE(m.precision.has_value());
    REQUIRE(m.recall.has_value());
    REQUIRE(m.fpr.has_value());
    CHECK(std::abs(*m.accuracy - 2348.0 / 2452.0) <= 1e-12);
    CHECK(std::abs(*m.precision - 0.954) <= 1e-12);
    CHECK(std::abs(*m.recall - 954.0 / 1012.0) <= 1e-12);
    CHECK(std::abs(*m.fpr - 46.0 / 1440.0) <= 1e-12);
    CHECK(*m.precision == doctest::Approx(0.954));
    CHECK(*m.fpr == doctest::Approx(0.032).epsilon(0.01));
}

TEST_CASE("metrics flags empty denominators instead of zeroing them") {
    MetricSet perfect = metrics(ConfusionCounts{10, 0, 30, 0});
    CHECK(*perfect.accuracy == 1.0);
    CHECK(*perfect.fpr == 0.0);
    CHECK(*perfect.precision == 1.0);
    CHECK(*perfect.recall == 1.0);

    MetricSet no_alarms = metrics(ConfusionCounts{0, 0, 5, 5});
    CHECK(!no_alarms.precision.has_value());
    CHECK(no_alarms.recall.has_value());

    MetricSet no_positives = metrics(ConfusionCounts{0, 3, 5, 0});
    CHECK(!no_positives.recall.has_value());

    MetricSet no_negatives = metrics(ConfusionCounts{4, 0, 0, 2});
    CHECK(!no_negatives.fpr.has_value());

    MetricSet empty = metrics(ConfusionCounts{});
    CHECK(!empty.accuracy.has_value());
}

TEST_CASE("defined metrics stay in the unit interval") {
    Rng rng = make_rng(89);
    std::uniform_int_distribution<long> count(0, 50);
    for (int rep = 0; rep < 200; ++rep) {
        ConfusionCounts c{count(rng), count(rng), count(rng), count(rng)};
        MetricSet m = metrics(c);
        for (const auto& v : {m.accuracy, m.precision, m.recall, m.fpr})
            if (v) {
                CHECK(*v >= 0.0);
                CHECK(*v <= 1.0);
            }
    }
}

TEST_CASE("roc on perfectly separated scores") {
    RocCurve roc = roc_auc({0.1, 0.2, 0.9, 0.8}, {0, 0, 1, 1});
    CHECK(roc.auc == 1.0);
    CHECK(roc.points.front() == std::pair{0.0, 0.0});
    CHECK(roc.points.back() == std::pair{1.0, 1.0});
}

TEST_CASE("roc input validation") {
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), InsufficientDataError);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 0}), InsufficientDataError);
    CHECK_THROWS_AS(roc_auc({0.1}, {0, 1}), DimensionMismatchError);
    CHECK_THROWS_AS(roc_auc({0.1, std::nan("")}, {0, 1}), ConfigError);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 2}), ConfigError);
}

TEST_CASE("roc under label-independent scores hugs one half") {
    Rng rng = make_rng(90);
    const int n = 10000;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        scores[size_t(i)] = gauss(rng);
        labels[size_t(i)] = i % 2;
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    RocCurve roc = roc_auc(scores, labels);
    CHECK(roc.auc > 0.48);
    CHECK(roc.auc < 0.52);
}

TEST_CASE("roc equals the exhaustive pairwise oracle on small fixtures") {
    Rng rng = make_rng(91);
    std::uniform_int_distribution<int> size(2, 12);
    std::uniform_int_distribution<int> coarse(0, 3);  // forces ties
    std::normal_distribution<double> fine(0.0, 1.0);
    std::bernoulli_distribution use_coarse(0.5);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = size(rng);
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<int> labels(static_cast<size_t>(n));
        int pos = 0;
        const bool ties = use_coarse(rng);
        for (int i = 0; i < n; ++i) {
            scores[size_t(i)] = ties ? double(coarse(rng)) : fine(rng);
            labels[size_t(i)] = coarse(rng) % 2;
            pos += labels[size_t(i)];
        }
        if (pos == 0 || pos == n) continue;
        RocCurve roc = roc_auc(scores, labels);
        CHECK(std::abs(roc.auc - pairwise_auc(scores, labels)) <= 1e-12);
    }
}

TEST_CASE("roc is invariant under strictly monotone score transforms") {
    Rng rng = make_rng(92);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::vector<double> scores(60);
    std::vector<int> labels(60);
    for (size_t i = 0; i < scores.size(); ++i) {
        scores[i] = i % 4 == 0 ? 1.5 : u(rng);  // sprinkle exact ties
        labels[i] = (u(rng) + double(i % 2)) > 0.5 ? 1 : 0;
    }
    RocCurve base = roc_auc(scores, labels);

    auto transformed = [&](auto f) {
        std::vector<double> t(scores.size());
        std::transform(scores.begin(), scores.end(), t.begin(), f);
        return roc_auc(t, labels);
    };
    for (const RocCurve& roc :
         {transformed([](double x) { return std::exp(x); }),
          transformed([](double x) { return 3.0 * x + 7.0; }),
          transformed([](double x) { return x * x * x; })}) {
        CHECK(roc.auc == base.auc);
        REQUIRE(roc.points.size() == base.points.size());
        for (size_t i = 0; i < roc.points.size(); ++i) {
            CHECK(roc.points[i].first == base.points[i].first);
            CHECK(roc.points[i].second == base.points[i].second);
        }
    }
}

TEST_CASE("roc points are monotone and auc matches its own trapezoid") {
    Rng rng = make_rng(93);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> scores(200);
        std::vector<int> labels(200);
        for (size_t i = 0; i < scores.size(); ++i) {
            labels[i] = gauss(rng) > 0 ? 1 : 0;
            scores[i] = gauss(rng) + (labels[i] ? 0.8 : 0.0);
        }
        RocCurve roc = roc_auc(scores, labels);
        double trap = 0.0;
        for (size_t i = 1; i < roc.points.size(); ++i) {
            CHECK(roc.points[i].first >= roc.points[i - 1].first);
            CHECK(roc.points[i].second >= roc.points[i - 1].second);
            trap += (roc.points[i].first - roc.points[i - 1].first) *
                    (roc.points[i].second + roc.points[i - 1].second) / 2.0;
        }
        CHECK(std::abs(trap - roc.auc) <= 1e-12);
        CHECK(roc.auc >= 0.0);
        CHECK(roc.auc <= 1.0);
    }
}

namespace {

struct SyntheticRun {
    Eigen::MatrixXd projections;
    std::vector<int> labels;
    SafeModel safe{GaussianModel(Eigen::VectorXd::Zero(10),
                                 Eigen::MatrixXd::Identity(10, 10)),
                   Eigen::MatrixXd::Zero(1, 10), 0.5};
};

// 2400 quiet samples then 400 mean-shifted ones, against an identity
// reference; long quiet stretch so the adaptive threshold operates at its
// steady state over most of the scored region
SyntheticRun shifted_stream(unsigned long seed) {
    SyntheticRun run;
    Rng rng = make_rng(seed);
    run.projections = standard_normal_matrix(2800, 10, rng);
    run.labels.assign(2800, 0);
    for (Eigen::Index i = 2400; i < 2800; ++i) {
        run.projections.row(i).array() += 1.0;
        run.labels[size_t(i)] = 1;
    }
    return run;
}

}  // namespace

TEST_CASE("compare_methods pits both rules against the same stream") {
    SyntheticRun run = shifted_stream(94);
    DetectorConfig cfg;
    // stride-1 histories span few window lengths and under-read the tail, so
    // the comparison run carries a slightly conservative kappa
    cfg.kappa = 3.5;

    // calibrate the fixed threshold off the quiet stretch at its 95th pctile,
    // mirroring how a deployment would pick k
    std::vector<DetectionEvent> probe =
        run_detector(run.projections.topRows(2400), run.safe, cfg);
    std::vector<double> quiet_kls;
    for (const auto& ev : probe)
        if (!ev.warmup) quiet_kls.push_back(ev.kl);
    REQUIRE(quiet_kls.size() > 100);
    std::sort(quiet_kls.begin(), quiet_kls.end());
    const double q95 = quiet_kls[size_t(0.95 * double(quiet_kls.size()))];
    const double k = q95 / std::exp(-run.safe.gaussian.log_det() / 2.0);

    ComparisonTable table =
        compare_methods(run.projections, run.labels, run.safe, cfg, k, 1234);

    REQUIRE(table.rows.size() == 6);
    CHECK(table.seed == 1234);
    CHECK(table.config_hash.size() == 16);
    CHECK(table.scored_windows == table.rows[0].counts.total());
    CHECK(table.rows[0].counts.total() == table.rows[1].counts.total());
    CHECK(table.dynamic_events.size() == table.static_events.size());

    const MetricSet& dyn = table.rows[0].metrics;
    const MetricSet& sta = table.rows[1].metrics;
    REQUIRE(dyn.accuracy.has_value());
    REQUIRE(sta.accuracy.has_value());
    CHECK(*dyn.fpr < *sta.fpr);
    CHECK(*dyn.accuracy > *sta.accuracy);
    CHECK(*dyn.recall > 0.8);  // a 1 sigma shift in all ten axes is easy to catch

    // context rows carry the published values verbatim and no counts
    CHECK(table.rows[2].reported);
    CHECK(table.rows[5].reported);
    CHECK(table.rows[2].counts.total() == 0);
    CHECK(*table.rows[5].metrics.accuracy == 0.968);
    CHECK(*table.rows[5].metrics.fpr == 0.032);
    CHECK(*table.rows[2].metrics.accuracy == 0.894);
    CHECK(*table.rows[3].metrics.accuracy == 0.912);
    CHECK(*table.rows[4].metrics.accuracy == 0.927);

    // deterministic: same inputs, same table
    ComparisonTable again =
        compare_methods(run.projections, run.labels, run.safe, cfg, k, 1234);
    CHECK(again.config_hash == table.config_hash);
    CHECK(again.rows[0].counts.tp == table.rows[0].counts.tp);
    CHECK(again.rows[1].counts.fp == table.rows[1].counts.fp);
    CHECK(*again.rows[0].metrics.accuracy == *dyn.accuracy);
}

TEST_CASE("collect_scored_windows aligns margins with truth") {
    SyntheticRun run = shifted_stream(95);
    DetectorConfig cfg;
    cfg.window_size = 50;
    cfg.history_len = 100;
    auto events = run_detector(run.projections, run.safe, cfg);
    ScoredWindows sw = collect_scored_windows(events, run.labels, cfg.window_size);

    long warm = 0;
    for (const auto& ev : events) warm += ev.warmup ? 1 : 0;
    CHECK(sw.steps.size() == events.size() - size_t(warm));
    REQUIRE(sw.steps.size() == sw.margins.size());
    REQUIRE(sw.steps.size() == sw.truth.size());
    REQUIRE(sw.steps.size() == sw.fims.size());

    RocCurve roc = roc_auc(sw.margins, sw.truth);
    CHECK(roc.auc > 0.95);  // large shift, near-perfect ranking

    // rows stay aligned with the events they came from
    size_t j = 0;
    for (const auto& ev : events) {
        if (ev.warmup) continue;
        REQUIRE(j < sw.steps.size());
        CHECK(sw.steps[j] == ev.step);
        CHECK(sw.kls[j] == ev.kl);
        CHECK(sw.fims[j] == ev.fim);
        CHECK(sw.margins[j] == ev.kl - ev.threshold);
        ++j;
    }
    CHECK(j == sw.steps.size());
}

TEST_CASE("emit_figures writes deterministic csv data") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path("eval_fig_scratch");
    fs::remove_all(dir);

    std::vector<DetectionEvent> events;
    for (long s = 9; s < 29; ++s) {
        DetectionEvent ev = make_event(s, s >= 20, s < 14);
        ev.kl = 0.1 * double(s);
        ev.threshold = 1.7;
        events.push_back(ev);
    }
    std::vector<FimSample> fims;
    Rng rng = make_rng(96);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        // anomalous windows sit lower by construction here
        const int label = i % 2;
        fims.push_back({std::exp(gauss(rng)) + (label ? 0.0 : 2.0), label});
    }
    RocCurve roc = roc_auc({0.1, 0.4, 0.2, 0.9}, {0, 1, 0, 1});
    std::vector<Fig4aPoint> fig4a = {{0.0, 0.1, 1.0, false}, {0.5, 2.0, 1.1, true}};

    auto written = emit_figures(dir.string(), events, fims, roc, &fig4a, &roc);
    CHECK(written.size() == 7);
    for (const auto& p : written) CHECK(fs::exists(p));

    // fig1 keeps one row per scorable event
    std::istringstream fig1(slurp(dir / "fig1.csv"));
    std::string line;
    std::getline(fig1, line);
    CHECK(line == "step,kl,threshold,alarmed");
    long rows = 0, alarmed_rows = 0;
    while (std::getline(fig1, line)) {
        ++rows;
        if (line.back() == '1') ++alarmed_rows;
    }
    CHECK(rows == 15);  // 20 events, 5 warmup
    CHECK(alarmed_rows == 9);

    // fig3 runs corner to corner
    std::istringstream fig3(slurp(dir / "fig3.csv"));
    std::getline(fig3, line);
    CHECK(line == "fpr,tpr");
    std::vector<std::string> pts;
    while (std::getline(fig3, line)) pts.push_back(line);
    CHECK(pts.front() == "0,0");
    CHECK(pts.back() == "1,1");

    // fig2 medians keep the anomalous class below the normal one
    std::istringstream fig2(slurp(dir / "fig2.csv"));
    std::getline(fig2, line);
    std::vector<double> normal, anomalous;
    while (std::getline(fig2, line)) {
        const auto comma = line.find(',');
        const double v = std::stod(line.substr(0, comma));
        (line.substr(comma + 1) == "anomalous" ? anomalous : normal).push_back(v);
    }
    REQUIRE(normal.size() == 100);
    REQUIRE(anomalous.size() == 100);
    std::sort(normal.begin(), normal.end());
    std::sort(anomalous.begin(), anomalous.end());
    CHECK(anomalous[50] < normal[50]);

    // fig4b bins preserve class totals
    std::istringstream fig4b(slurp(dir / "fig4b.csv"));
    std::getline(fig4b, line);
    CHECK(line == "bin_lo,bin_hi,normal,anomalous");
    long bin_rows = 0, n_sum = 0, a_sum = 0;
    while (std::getline(fig4b, line)) {
        ++bin_rows;
        std::istringstream row(line);
        std::string cell;
        std::getline(row, cell, ',');
        std::getline(row, cell, ',');
        std::getline(row, cell, ',');
        n_sum += std::stol(cell);
        std::getline(row, cell, ',');
        a_sum += std::stol(cell);
    }
    CHECK(bin_rows == 30);
    CHECK(n_sum == 100);
    CHECK(a_sum == 100);

    // composite panel c mirrors the roc file byte for byte
    CHECK(slurp(dir / "fig4c.csv") == slurp(dir / "fig3.csv"));
    CHECK(slurp(dir / "roc_raw_kl.csv") == slurp(dir / "fig3.csv"));

    std::istringstream f4a(slurp(dir / "fig4a.csv"));
    std::getline(f4a, line);
    CHECK(line == "time,kl,threshold,alarmed");
    std::getline(f4a, line);
    CHECK(line == "0,0.1,1,0");

    // byte-identical on a second emission
    const std::string before = slurp(dir / "fig1.csv") + slurp(dir / "fig2.csv") +
                               slurp(dir / "fig4b.csv");
    emit_figures(dir.string(), events, fims, roc, &fig4a, &roc);
    const std::string after = slurp(dir / "fig1.csv") + slurp(dir / "fig2.csv") +
                              slurp(dir / "fig4b.csv");
    CHECK(before == after);

    fs::remove_all(dir);
}
