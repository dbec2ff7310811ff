#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "json.hpp"

#include "sentinel/detector.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/evaluation.hpp"
#include "sentinel/hash.hpp"
#include "sentinel/model_io.hpp"
#include "sentinel/pipeline.hpp"
#include "sentinel/random.hpp"
#include "sentinel/sde.hpp"

namespace {

using Json = nlohmann::ordered_json;
using namespace sentinel;
namespace fs = std::filesystem;

constexpr int kRunConfigVersion = 1;

// Exit contract: 0 success (detect: no alarms), 1 alarms raised (detect only),
// 2 input or config problem, 3 model problem. CliExit carries the code up to
// main so destructors still run.
struct CliExit {
    int code;
};

[[noreturn]] void bail(int code, const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    throw CliExit{code};
}

// Runs f and maps any library error escaping it to one exit code. Stages are
// what keep "file would not parse" (2) apart from "model is unusable" (3).
template <class F>
auto stage(int code, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const CliExit&) {
        throw;
    } catch (const std::exception& e) {
        bail(code, e.what());
    }
}

std::string num(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string sig6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Run configuration: one JSON document, defaults here, file values over
// defaults, flags over the file. Every command echoes the resolved result.

struct RunConfig {
    std::uint64_t seed = 0;
    double temperature = 1.0;

    DetectorConfig detector;

    // fit
    Eigen::Index pca_dims = 10;
    double kde_bandwidth = 0.5;
    long max_kde_points = 20000;

    // simulate
    SdeConfig sde;
    PerturbationSchedule schedule;
    double safe_fit_time = 0.0;
    int n_trials = 100;

    // eval
    double quorum = 0.5;
    double static_quantile = 0.95;
    long subsample = 0;
    std::optional<double> eval_static_k;  // absent: calibrate from the stream

    // paths
    std::string train_path;
    std::string model_path;
    std::string data_path;
    std::string events_path = "events.ndjson";
    std::string out_dir = "run_out";
};

const Json* find(const Json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double jnum(const Json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

long jint(const Json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
    return v.get<long>();
}

std::uint64_t juint(const Json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0)
        return std::uint64_t(v.get<long long>());
    throw ConfigError(where + " must be a nonnegative integer");
}

std::string jstr(const Json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + " must be a string");
    return v.get<std::string>();
}

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const auto a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown config key '" +
                              (where.empty() ? item.key() : where + "." + item.key()) + "'");
    }
}

const Json& as_object(const Json* v, const char* key) {
    if (!v->is_object()) throw ConfigError(std::string(key) + " must be an object");
    return *v;
}

void read_detector(const Json& j, DetectorConfig& d) {
    check_keys(j,
               {"window_size", "history_len", "kappa", "ridge", "stride",
                "threshold_floor", "drift_patience", "static_k"},
               "detector");
    if (const Json* v = find(j, "window_size")) d.window_size = int(jint(*v, "detector.window_size"));
    if (const Json* v = find(j, "history_len")) d.history_len = int(jint(*v, "detector.history_len"));
    if (const Json* v = find(j, "kappa")) d.kappa = jnum(*v, "detector.kappa");
    if (const Json* v = find(j, "ridge")) d.ridge = jnum(*v, "detector.ridge");
    if (const Json* v = find(j, "stride")) d.stride = int(jint(*v, "detector.stride"));
    if (const Json* v = find(j, "threshold_floor")) d.threshold_floor = jnum(*v, "detector.threshold_floor");
    if (const Json* v = find(j, "drift_patience")) d.drift_patience = int(jint(*v, "detector.drift_patience"));
    if (const Json* v = find(j, "static_k")) {
        if (v->is_null())
            d.static_k.reset();
        else
            d.static_k = jnum(*v, "detector.static_k");
    }
}

void read_fit(const Json& j, RunConfig& rc) {
    check_keys(j, {"pca_dims", "kde_bandwidth", "max_kde_points"}, "fit");
    if (const Json* v = find(j, "pca_dims")) rc.pca_dims = jint(*v, "fit.pca_dims");
    if (const Json* v = find(j, "kde_bandwidth")) rc.kde_bandwidth = jnum(*v, "fit.kde_bandwidth");
    if (const Json* v = find(j, "max_kde_points")) rc.max_kde_points = jint(*v, "fit.max_kde_points");
}

void read_sde(const Json& j, SdeConfig& c) {
    check_keys(j, {"dim", "drift_rate", "diffusion", "dt", "duration", "init_mean", "init_std"},
               "sde");
    if (const Json* v = find(j, "dim")) c.dim = jint(*v, "sde.dim");
    if (const Json* v = find(j, "drift_rate")) c.drift_rate = jnum(*v, "sde.drift_rate");
    if (const Json* v = find(j, "diffusion")) c.diffusion = jnum(*v, "sde.diffusion");
    if (const Json* v = find(j, "dt")) c.dt = jnum(*v, "sde.dt");
    if (const Json* v = find(j, "duration")) c.duration = jnum(*v, "sde.duration");
    if (const Json* v = find(j, "init_mean")) {
        if (!v->is_array()) throw ConfigError("sde.init_mean must be an array of numbers");
        Eigen::VectorXd m(Eigen::Index(v->size()));
        Eigen::Index i = 0;
        for (const auto& e : *v) m[i++] = jnum(e, "sde.init_mean[]");
        c.init_mean = std::move(m);
    }
    if (const Json* v = find(j, "init_std")) c.init_std = jnum(*v, "sde.init_std");
}

void read_schedule(const Json& j, PerturbationSchedule& s) {
    check_keys(j, {"onset_time", "diffusion_factor", "drift_factor"}, "schedule");
    if (const Json* v = find(j, "onset_time")) s.onset_time = jnum(*v, "schedule.onset_time");
    if (const Json* v = find(j, "diffusion_factor")) s.diffusion_factor = jnum(*v, "schedule.diffusion_factor");
    if (const Json* v = find(j, "drift_factor")) s.drift_factor = jnum(*v, "schedule.drift_factor");
}

void read_fpt(const Json& j, RunConfig& rc) {
    check_keys(j, {"safe_fit_time", "n_trials"}, "fpt");
    if (const Json* v = find(j, "safe_fit_time")) rc.safe_fit_time = jnum(*v, "fpt.safe_fit_time");
    if (const Json* v = find(j, "n_trials")) rc.n_trials = int(jint(*v, "fpt.n_trials"));
}

void read_eval(const Json& j, RunConfig& rc) {
    check_keys(j, {"quorum", "static_quantile", "subsample", "static_k"}, "eval");
    if (const Json* v = find(j, "quorum")) rc.quorum = jnum(*v, "eval.quorum");
    if (const Json* v = find(j, "static_quantile")) rc.static_quantile = jnum(*v, "eval.static_quantile");
    if (const Json* v = find(j, "subsample")) rc.subsample = jint(*v, "eval.subsample");
    if (const Json* v = find(j, "static_k")) {
        if (v->is_null())
            rc.eval_static_k.reset();
        else
            rc.eval_static_k = jnum(*v, "eval.static_k");
    }
}

void read_paths(const Json& j, RunConfig& rc) {
    check_keys(j, {"train", "model", "data", "events", "out_dir"}, "paths");
    if (const Json* v = find(j, "train")) rc.train_path = jstr(*v, "paths.train");
    if (const Json* v = find(j, "model")) rc.model_path = jstr(*v, "paths.model");
    if (const Json* v = find(j, "data")) rc.data_path = jstr(*v, "paths.data");
    if (const Json* v = find(j, "events")) rc.events_path = jstr(*v, "paths.events");
    if (const Json* v = find(j, "out_dir")) rc.out_dir = jstr(*v, "paths.out_dir");
}

void apply_config(RunConfig& rc, const Json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    check_keys(j,
               {"schema_version", "seed", "temperature", "detector", "fit", "sde", "schedule",
                "fpt", "eval", "paths"},
               "");
    const Json* ver = find(j, "schema_version");
    if (!ver) throw ConfigError("config needs a schema_version field");
    if (!ver->is_number_integer() || ver->get<long>() != kRunConfigVersion)
        throw ConfigError("unsupported config schema_version, this build reads version " +
                          std::to_string(kRunConfigVersion));
    if (const Json* v = find(j, "seed")) rc.seed = juint(*v, "seed");
    if (const Json* v = find(j, "temperature")) rc.temperature = jnum(*v, "temperature");
    if (const Json* v = find(j, "detector")) read_detector(as_object(v, "detector"), rc.detector);
    if (const Json* v = find(j, "fit")) read_fit(as_object(v, "fit"), rc);
    if (const Json* v = find(j, "sde")) read_sde(as_object(v, "sde"), rc.sde);
    if (const Json* v = find(j, "schedule")) read_schedule(as_object(v, "schedule"), rc.schedule);
    if (const Json* v = find(j, "fpt")) read_fpt(as_object(v, "fpt"), rc);
    if (const Json* v = find(j, "eval")) read_eval(as_object(v, "eval"), rc);
    if (const Json* v = find(j, "paths")) read_paths(as_object(v, "paths"), rc);
}

Json config_to_json(const RunConfig& rc) {
    Json j;
    j["schema_version"] = kRunConfigVersion;
    j["seed"] = rc.seed;
    j["temperature"] = rc.temperature;

    Json det;
    det["window_size"] = rc.detector.window_size;
    det["history_len"] = rc.detector.history_len;
    det["kappa"] = rc.detector.kappa;
    det["ridge"] = rc.detector.ridge;
    det["stride"] = rc.detector.stride;
    det["threshold_floor"] = rc.detector.threshold_floor;
    det["drift_patience"] = rc.detector.drift_patience;
    det["static_k"] = rc.detector.static_k ? Json(*rc.detector.static_k) : Json(nullptr);
    j["detector"] = det;

    Json fit;
    fit["pca_dims"] = long(rc.pca_dims);
    fit["kde_bandwidth"] = rc.kde_bandwidth;
    fit["max_kde_points"] = rc.max_kde_points;
    j["fit"] = fit;

    Json sde;
    sde["dim"] = long(rc.sde.dim);
    sde["drift_rate"] = rc.sde.drift_rate;
    sde["diffusion"] = rc.sde.diffusion;
    sde["dt"] = rc.sde.dt;
    sde["duration"] = rc.sde.duration;
    Json mean = Json::array();
    if (rc.sde.init_mean.size() == 0) {
        for (Eigen::Index i = 0; i < rc.sde.dim; ++i) mean.push_back(0.0);
    } else {
        for (Eigen::Index i = 0; i < rc.sde.init_mean.size(); ++i)
            mean.push_back(rc.sde.init_mean[i]);
    }
    sde["init_mean"] = mean;
    sde["init_std"] = rc.sde.init_std;
    j["sde"] = sde;

    Json sch;
    sch["onset_time"] = rc.schedule.onset_time;
    sch["diffusion_factor"] = rc.schedule.diffusion_factor;
    sch["drift_factor"] = rc.schedule.drift_factor;
    j["schedule"] = sch;

    Json fpt;
    fpt["safe_fit_time"] = rc.safe_fit_time;
    fpt["n_trials"] = rc.n_trials;
    j["fpt"] = fpt;

    Json ev;
    ev["quorum"] = rc.quorum;
    ev["static_quantile"] = rc.static_quantile;
    ev["subsample"] = rc.subsample;
    ev["static_k"] = rc.eval_static_k ? Json(*rc.eval_static_k) : Json(nullptr);
    j["eval"] = ev;

    Json paths;
    paths["train"] = rc.train_path;
    paths["model"] = rc.model_path;
    paths["data"] = rc.data_path;
    paths["events"] = rc.events_path;
    paths["out_dir"] = rc.out_dir;
    j["paths"] = paths;
    return j;
}

void write_config_echo(const std::string& path, const RunConfig& rc) {
    std::ofstream out(path);
    if (!out) bail(2, "cannot write " + path);
    out << config_to_json(rc).dump(2) << '\n';
    out.flush();
    if (!out) bail(2, "write failure on " + path);
}

Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) bail(2, "cannot read config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return Json::parse(buf.str());
    } catch (const Json::exception& e) {
        bail(2, path + ": " + e.what());
    }
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bail(2, "cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) bail(2, "read failure on " + path);
    return std::move(buf).str();
}

// ---------------------------------------------------------------------------
// fit: encoder + projection + reference model from the normal slice.

int cmd_fit(const RunConfig& rc) {
    if (rc.train_path.empty()) bail(2, "fit needs a training file (positional or paths.train)");
    if (rc.model_path.empty()) bail(2, "fit needs a model output path (positional or paths.model)");
    if (rc.pca_dims < 1) bail(2, "fit.pca_dims must be >= 1");
    if (!(rc.kde_bandwidth > 0)) bail(2, "fit.kde_bandwidth must be positive");
    if (rc.max_kde_points < 1) bail(2, "fit.max_kde_points must be >= 1");

    const std::vector<FlowRecord> records = stage(2, [&] {
        std::ifstream in(rc.train_path);
        if (!in) throw Error("cannot read " + rc.train_path);
        return parse_nslkdd(in);
    });
    if (records.empty()) bail(2, rc.train_path + ": no records");

    std::vector<FlowRecord> normals;
    for (const FlowRecord& r : records)
        if (binarize_label(r.label) == 0) normals.push_back(r);

    double explained_fraction = 0.0;
    const PipelineModel model = stage(3, [&] {
        EncoderModel encoder = fit_encoder(normals);
        const Eigen::MatrixXd encoded = encode_matrix(encoder, normals);
        PcaModel pca = fit_pca(encoded, rc.pca_dims);
        const Eigen::MatrixXd proj = project_rows(pca, encoded);
        SafeModel safe = fit_safe_model(proj, rc.kde_bandwidth, rc.detector.ridge,
                                        rc.max_kde_points, rc.seed);
        const Eigen::RowVectorXd col_mean = encoded.colwise().mean();
        const double total_var =
            (encoded.rowwise() - col_mean).squaredNorm() / double(encoded.rows() - 1);
        explained_fraction = total_var > 0 ? pca.explained_variance.sum() / total_var : 1.0;
        return PipelineModel{std::move(encoder), std::move(pca), std::move(safe)};
    });

    stage(2, [&] { save_pipeline(rc.model_path, model); });
    write_config_echo(rc.model_path + ".config.json", rc);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.safe.gaussian.covariance());
    const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();

    std::cout << "records:             " << records.size() << "\n"
              << "normals fitted:      " << normals.size() << "\n"
              << "encoded dim:         " << model.encoder.dim() << "\n"
              << "projection dims:     " << model.pca.components.rows() << "\n"
              << "explained variance:  " << fixed3(explained_fraction) << "\n"
              << "cond(safe sigma):    " << sig6(cond) << "\n"
              << "kde points kept:     " << model.safe.kde_points.rows() << "\n"
              << "model:               " << rc.model_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// detect: stream records through one detector, one NDJSON event per emission.
// Memory stays bounded by the model size and the window/history buffers.

int cmd_detect(const RunConfig& rc) {
    if (rc.model_path.empty()) bail(2, "detect needs a model path (positional or paths.model)");
    if (rc.data_path.empty()) bail(2, "detect needs a data file (positional or paths.data)");

    const PipelineModel model = stage(3, [&] { return load_pipeline(rc.model_path); });
    Detector det = stage(2, [&] { return Detector(rc.detector, model.safe); });

    std::ifstream in(rc.data_path);
    if (!in) bail(2, "cannot read " + rc.data_path);
    std::ofstream out(rc.events_path);
    if (!out) bail(2, "cannot write " + rc.events_path);

    long line_no = 0;
    long n_records = 0, n_events = 0, n_alarms = 0;
    double landauer_total = 0.0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const FlowRecord rec = stage(2, [&] { return parse_nslkdd_line(line, line_no); });
        const Eigen::VectorXd x = project(model.pca, model.encoder.apply(rec));
        ++n_records;
        if (const auto ev = det.step(x, rc.temperature)) {
            out << event_to_json(*ev) << '\n';
            ++n_events;
            if (ev->alarmed) ++n_alarms;
            if (std::isfinite(ev->landauer)) landauer_total += ev->landauer;
        }
    }
    if (in.bad()) bail(2, "read failure on " + rc.data_path);
    out.flush();
    if (!out) bail(2, "write failure on " + rc.events_path);
    write_config_echo(rc.events_path + ".config.json", rc);

    std::cout << "records:       " << n_records << "\n"
              << "windows:       " << n_events << "\n"
              << "alarms:        " << n_alarms << "\n";
    if (det.fpt())
        std::cout << "first alarm:   step " << *det.fpt() << "\n";
    else
        std::cout << "first alarm:   none\n";
    std::cout << "landauer sum:  " << sig6(landauer_total) << " (temperature " << num(rc.temperature)
              << ")\n"
              << "drift flag:    " << (det.drift_monitor() ? "yes" : "no") << "\n"
              << "events:        " << rc.events_path << "\n";
    return n_alarms > 0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// simulate: first-passage experiment over the drift-diffusion process, plus
// the raw trajectories and the trial-0 divergence trace for plotting.

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_simulate(RunConfig rc) {
    rc.sde.seed = rc.seed;
    stage(2, [&] {
        validate(rc.sde);
        validate(rc.schedule);
    });
    if (rc.n_trials < 1) bail(2, "fpt.n_trials must be >= 1");

    const FptExperiment exp = [&] {
        try {
            return run_fpt_experiment(rc.sde, rc.schedule, rc.detector, rc.safe_fit_time,
                                      rc.n_trials);
        } catch (const NotSpdError& e) {
            bail(3, e.what());
        } catch (const std::exception& e) {
            bail(2, e.what());
        }
    }();

    stage(2, [&] { fs::create_directories(rc.out_dir); });
    const auto path_in = [&](const char* name) { return (fs::path(rc.out_dir) / name).string(); };

    // Paths are reproducible from (seed, trial), so the trajectory dump is
    // the same set the experiment streamed.
    const std::vector<Trajectory> paths = simulate(rc.sde, rc.schedule, rc.n_trials);
    {
        std::ofstream tout(path_in("trajectories.csv"));
        if (!tout) bail(2, "cannot write " + path_in("trajectories.csv"));
        tout << "trial,time";
        for (Eigen::Index d = 0; d < rc.sde.dim; ++d) tout << ",x" << d;
        tout << '\n';
        for (int i = 0; i < rc.n_trials; ++i) {
            const Trajectory& tr = paths[size_t(i)];
            for (Eigen::Index t = 0; t < tr.times.size(); ++t) {
                tout << i << ',' << num(tr.times[t]);
                for (Eigen::Index d = 0; d < tr.states.cols(); ++d)
                    tout << ',' << num(tr.states(t, d));
                tout << '\n';
            }
        }
        tout.flush();
        if (!tout) bail(2, "write failure on trajectories.csv");
    }

    std::vector<double> detected;
    {
        Json fj;
        fj["schema_version"] = 1;
        fj["seed"] = rc.seed;
        fj["onset_time"] = exp.onset_time;
        fj["dt"] = exp.dt;
        fj["n_trials"] = rc.n_trials;
        Json times = Json::array();
        for (const auto& t : exp.fpt_times) {
            if (t) {
                times.push_back(*t);
                detected.push_back(*t);
            } else {
                times.push_back(nullptr);
            }
        }
        fj["fpt_times"] = times;
        fj["n_detected"] = detected.size();
        fj["median_fpt"] = detected.empty() ? Json(nullptr) : Json(median_of(detected));
        std::ofstream jout(path_in("fpt_samples.json"));
        if (!jout) bail(2, "cannot write " + path_in("fpt_samples.json"));
        jout << fj.dump(2) << '\n';
        jout.flush();
        if (!jout) bail(2, "write failure on fpt_samples.json");
    }

    {
        std::ofstream eout(path_in("events.ndjson"));
        if (!eout) bail(2, "cannot write " + path_in("events.ndjson"));
        for (int i = 0; i < rc.n_trials; ++i) {
            for (const DetectionEvent& ev : exp.event_logs[size_t(i)]) {
                Json line;
                line["trial"] = i;
                line.update(Json::parse(event_to_json(ev)));
                eout << line.dump() << '\n';
            }
        }
        eout.flush();
        if (!eout) bail(2, "write failure on events.ndjson");
    }

    {
        // Divergence trace of the first trial; warmup rows carry no usable
        // threshold so they are left out, as in the evaluation figures.
        std::ofstream fout(path_in("fig4a.csv"));
        if (!fout) bail(2, "cannot write " + path_in("fig4a.csv"));
        fout << "time,kl,threshold,alarmed\n";
        for (const DetectionEvent& ev : exp.event_logs.front()) {
            if (ev.warmup) continue;
            fout << num(double(ev.step) * exp.dt) << ',' << num(ev.kl) << ','
                 << num(ev.threshold) << ',' << (ev.alarmed ? 1 : 0) << '\n';
        }
        fout.flush();
        if (!fout) bail(2, "write failure on fig4a.csv");
    }

    write_config_echo(path_in("resolved_config.json"), rc);

    std::cout << "trials:        " << rc.n_trials << "\n"
              << "detected:      " << detected.size() << "\n";
    if (!detected.empty())
        std::cout << "median fpt:    " << num(median_of(detected)) << " s\n";
    else
        std::cout << "median fpt:    none\n";
    std::cout << "onset:         " << num(exp.onset_time) << " s\n"
              << "out dir:       " << rc.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval: adaptive vs fixed threshold on a labeled stream, metrics + figures.

int cmd_eval(RunConfig rc) {
    if (rc.model_path.empty()) bail(2, "eval needs a model path (positional or paths.model)");
    if (rc.data_path.empty()) bail(2, "eval needs a labeled test file (positional or paths.data)");
    if (!(rc.quorum >= 0.0 && rc.quorum <= 1.0)) bail(2, "eval.quorum must be in [0,1]");
    if (!(rc.static_quantile > 0.0 && rc.static_quantile < 1.0))
        bail(2, "eval.static_quantile must be in (0,1)");
    if (rc.subsample < 0) bail(2, "eval.subsample must be >= 0");

    const PipelineModel model = stage(3, [&] { return load_pipeline(rc.model_path); });

    const std::string file_bytes = slurp(rc.data_path);
    std::vector<FlowRecord> records =
        stage(2, [&] { return parse_nslkdd_string(file_bytes); });
    if (records.empty()) bail(2, rc.data_path + ": no records");
    const long n_total = long(records.size());

    std::vector<int> labels(records.size());
    for (size_t i = 0; i < records.size(); ++i) labels[i] = binarize_label(records[i].label);

    if (rc.subsample > 0 && rc.subsample < long(records.size())) {
        std::vector<size_t> idx(records.size());
        std::iota(idx.begin(), idx.end(), size_t(0));
        auto rng = make_rng(rc.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(size_t(rc.subsample));
        std::sort(idx.begin(), idx.end());  // keep stream order
        std::vector<FlowRecord> sub;
        std::vector<int> sublab;
        sub.reserve(idx.size());
        sublab.reserve(idx.size());
        for (const size_t k : idx) {
            sub.push_back(std::move(records[k]));
            sublab.push_back(labels[k]);
        }
        records = std::move(sub);
        labels = std::move(sublab);
    }
    long n_attacks = 0;
    for (const int l : labels) n_attacks += l;

    const Eigen::MatrixXd proj = stage(3, [&] {
        return project_rows(model.pca, encode_matrix(model.encoder, records));
    });

    DetectorConfig dyn_cfg = rc.detector;
    dyn_cfg.static_k.reset();

    double static_k = 0.0;
    if (rc.eval_static_k) {
        static_k = *rc.eval_static_k;
        if (!(static_k > 0)) bail(2, "eval.static_k must be positive");
    } else {
        // Operating point for the fixed baseline: a quantile of the
        // normal-majority windows' divergence on this very stream. That is an
        // oracle calibration, deliberately generous to the baseline.
        const auto probe =
            stage(2, [&] { return run_detector(proj, model.safe, dyn_cfg, rc.temperature); });
        const auto scored = stage(2, [&] {
            return collect_scored_windows(probe, labels, dyn_cfg.window_size, rc.quorum);
        });
        std::vector<double> quiet;
        for (size_t i = 0; i < scored.truth.size(); ++i)
            if (scored.truth[i] == 0 && std::isfinite(scored.kls[i]))
                quiet.push_back(scored.kls[i]);
        if (quiet.empty()) bail(2, "no normal-majority windows to calibrate the static baseline");
        std::sort(quiet.begin(), quiet.end());
        size_t pos = size_t(std::ceil(rc.static_quantile * double(quiet.size())));
        pos = std::min(std::max<size_t>(pos, 1), quiet.size()) - 1;
        const double level = quiet[pos];
        if (!(level > 0)) bail(2, "quiet-window divergence quantile is zero, cannot calibrate");
        static_k = level / std::exp(-model.safe.gaussian.log_det() / 2.0);
        rc.eval_static_k = static_k;  // echoed, so the run reproduces without recalibrating
    }

    const ComparisonTable table = stage(2, [&] {
        return compare_methods(proj, labels, model.safe, dyn_cfg, static_k, rc.seed, rc.quorum,
                               rc.temperature);
    });

    const ScoredWindows scored = stage(2, [&] {
        return collect_scored_windows(table.dynamic_events, labels, dyn_cfg.window_size,
                                      rc.quorum);
    });
    const RocCurve roc_margin = stage(2, [&] { return roc_auc(scored.margins, scored.truth); });
    const RocCurve roc_raw = stage(2, [&] { return roc_auc(scored.kls, scored.truth); });

    std::vector<FimSample> fims;
    for (size_t i = 0; i < scored.fims.size(); ++i)
        if (std::isfinite(scored.fims[i])) fims.push_back({scored.fims[i], scored.truth[i]});

    stage(2, [&] { fs::create_directories(rc.out_dir); });
    stage(2, [&] {
        emit_figures(rc.out_dir, table.dynamic_events, fims, roc_margin, nullptr, &roc_raw);
    });

    Json mj;
    mj["schema_version"] = 1;
    mj["seed"] = rc.seed;
    mj["config_hash"] = table.config_hash;
    Json ds;
    ds["path"] = rc.data_path;
    ds["bytes_fnv1a64"] = hex64(fnv1a64(file_bytes));
    ds["n_records_total"] = n_total;
    ds["n_records_used"] = long(records.size());
    ds["n_attacks_used"] = n_attacks;
    mj["dataset"] = ds;
    Json cal;
    cal["static_quantile"] = rc.static_quantile;
    cal["static_k"] = static_k;
    mj["static_calibration"] = cal;
    mj["quorum"] = rc.quorum;
    mj["scored_windows"] = table.scored_windows;
    Json auc;
    auc["margin"] = roc_margin.auc;
    auc["raw_kl"] = roc_raw.auc;
    mj["auc"] = auc;
    Json methods = Json::array();
    for (const MethodRow& row : table.rows) {
        Json r;
        r["name"] = row.name;
        r["reported"] = row.reported;
        if (!row.reported) {
            Json c;
            c["tp"] = row.counts.tp;
            c["fp"] = row.counts.fp;
            c["tn"] = row.counts.tn;
            c["fn"] = row.counts.fn;
            r["counts"] = c;
        }
        Json m;
        m["accuracy"] = row.metrics.accuracy ? Json(*row.metrics.accuracy) : Json(nullptr);
        m["precision"] = row.metrics.precision ? Json(*row.metrics.precision) : Json(nullptr);
        m["recall"] = row.metrics.recall ? Json(*row.metrics.recall) : Json(nullptr);
        m["fpr"] = row.metrics.fpr ? Json(*row.metrics.fpr) : Json(nullptr);
        r["metrics"] = m;
        methods.push_back(r);
    }
    mj["methods"] = methods;
    {
        const std::string mpath = (fs::path(rc.out_dir) / "metrics.json").string();
        std::ofstream mout(mpath);
        if (!mout) bail(2, "cannot write " + mpath);
        mout << mj.dump(2) << '\n';
        mout.flush();
        if (!mout) bail(2, "write failure on metrics.json");
    }
    write_config_echo((fs::path(rc.out_dir) / "resolved_config.json").string(), rc);

    const auto cell = [](const std::optional<double>& v) {
        return v ? fixed3(*v) : std::string("-");
    };
    std::cout << std::left << std::setw(32) << "method" << std::setw(10) << "accuracy"
              << std::setw(11) << "precision" << std::setw(8) << "recall" << "fpr\n";
    for (const MethodRow& row : table.rows) {
        std::cout << std::left << std::setw(32) << row.name << std::setw(10)
                  << cell(row.metrics.accuracy) << std::setw(11) << cell(row.metrics.precision)
                  << std::setw(8) << cell(row.metrics.recall) << cell(row.metrics.fpr) << "\n";
    }
    std::cout << "auc (margin):  " << fixed3(roc_margin.auc) << "\n"
              << "auc (raw kl):  " << fixed3(roc_raw.auc) << "\n"
              << "static k:      " << sig6(static_k) << " (quantile "
              << num(rc.static_quantile) << ")\n"
              << "windows:       " << table.scored_windows << "\n"
              << "out dir:       " << rc.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> pos1, pos2;
    std::optional<std::uint64_t> seed;
    std::optional<double> temperature;
    std::optional<int> window, history, stride, patience;
    std::optional<double> kappa, ridge, floor, static_k;
    std::optional<long> pca_dims, max_kde, subsample;
    std::optional<double> bandwidth;
    std::optional<long> dim;
    std::optional<double> drift_rate, diffusion, dt, duration, init_std;
    std::optional<double> onset, diffusion_factor, drift_factor, safe_fit_time;
    std::optional<int> trials;
    std::optional<double> quorum, static_quantile, eval_static_k;
    std::optional<std::string> events, out_dir;
};

void add_common_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "json run config; flags override its values");
    cmd->add_option("--seed", f.seed, "rng seed");
}

void add_detector_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--window", f.window, "samples per window (W)");
    cmd->add_option("--history", f.history, "threshold history length (L)");
    cmd->add_option("--kappa", f.kappa, "threshold width in standard deviations");
    cmd->add_option("--ridge", f.ridge, "covariance ridge");
    cmd->add_option("--stride", f.stride, "emit every stride-th sample");
    cmd->add_option("--floor", f.floor, "threshold floor");
    cmd->add_option("--patience", f.patience, "sustained-drift run length");
}

void apply_flags(RunConfig& rc, const Flags& f) {
    if (f.seed) rc.seed = *f.seed;
    if (f.temperature) rc.temperature = *f.temperature;
    if (f.window) rc.detector.window_size = *f.window;
    if (f.history) rc.detector.history_len = *f.history;
    if (f.kappa) rc.detector.kappa = *f.kappa;
    if (f.ridge) rc.detector.ridge = *f.ridge;
    if (f.stride) rc.detector.stride = *f.stride;
    if (f.floor) rc.detector.threshold_floor = *f.floor;
    if (f.patience) rc.detector.drift_patience = *f.patience;
    if (f.static_k) rc.detector.static_k = *f.static_k;
    if (f.pca_dims) rc.pca_dims = *f.pca_dims;
    if (f.bandwidth) rc.kde_bandwidth = *f.bandwidth;
    if (f.max_kde) rc.max_kde_points = *f.max_kde;
    if (f.dim) rc.sde.dim = *f.dim;
    if (f.drift_rate) rc.sde.drift_rate = *f.drift_rate;
    if (f.diffusion) rc.sde.diffusion = *f.diffusion;
    if (f.dt) rc.sde.dt = *f.dt;
    if (f.duration) rc.sde.duration = *f.duration;
    if (f.init_std) rc.sde.init_std = *f.init_std;
    if (f.onset) rc.schedule.onset_time = *f.onset;
    if (f.diffusion_factor) rc.schedule.diffusion_factor = *f.diffusion_factor;
    if (f.drift_factor) rc.schedule.drift_factor = *f.drift_factor;
    if (f.safe_fit_time) rc.safe_fit_time = *f.safe_fit_time;
    if (f.trials) rc.n_trials = *f.trials;
    if (f.quorum) rc.quorum = *f.quorum;
    if (f.static_quantile) rc.static_quantile = *f.static_quantile;
    if (f.eval_static_k) rc.eval_static_k = *f.eval_static_k;
    if (f.events) rc.events_path = *f.events;
    if (f.out_dir) rc.out_dir = *f.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    CLI::App app{"windowed divergence monitor for flow records and diffusion streams"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* fit = app.add_subcommand("fit", "fit encoder, projection and reference model");
    fit->add_option("train", f.pos1, "training records (csv)");
    fit->add_option("model", f.pos2, "model output path");
    add_common_flags(fit, f);
    fit->add_option("--pca-dims", f.pca_dims, "projection dimensions to keep");
    fit->add_option("--kde-bandwidth", f.bandwidth, "kernel bandwidth for the density scorer");
    fit->add_option("--max-kde-points", f.max_kde, "cap on retained density points");
    fit->add_option("--ridge", f.ridge, "covariance ridge");

    CLI::App* detect = app.add_subcommand("detect", "stream records through the detector");
    detect->add_option("model", f.pos1, "fitted model path");
    detect->add_option("data", f.pos2, "records to stream (csv)");
    add_common_flags(detect, f);
    add_detector_flags(detect, f);
    detect->add_option("--static-k", f.static_k,
                       "fixed-threshold multiplier; replaces the adaptive threshold");
    detect->add_option("--temperature", f.temperature, "temperature for the work bound");
    detect->add_option("--events", f.events, "event log output path (ndjson)");

    CLI::App* sim = app.add_subcommand("simulate", "first-passage experiment on the diffusion");
    add_common_flags(sim, f);
    add_detector_flags(sim, f);
    sim->add_option("--dim", f.dim, "process dimension");
    sim->add_option("--drift-rate", f.drift_rate, "mean-reversion rate");
    sim->add_option("--diffusion", f.diffusion, "diffusion coefficient");
    sim->add_option("--dt", f.dt, "time step");
    sim->add_option("--duration", f.duration, "trajectory length in time units");
    sim->add_option("--init-std", f.init_std, "initial state standard deviation");
    sim->add_option("--onset", f.onset, "perturbation onset time");
    sim->add_option("--diffusion-factor", f.diffusion_factor, "diffusion inflation after onset");
    sim->add_option("--drift-factor", f.drift_factor, "drift attenuation after onset");
    sim->add_option("--safe-fit-time", f.safe_fit_time, "reference-fit horizon before onset");
    sim->add_option("--trials", f.trials, "number of trials");
    sim->add_option("--out-dir", f.out_dir, "output directory");

    CLI::App* eval = app.add_subcommand("eval", "compare adaptive and fixed thresholds");
    eval->add_option("model", f.pos1, "fitted model path");
    eval->add_option("test", f.pos2, "labeled records (csv)");
    add_common_flags(eval, f);
    add_detector_flags(eval, f);
    eval->add_option("--static-k", f.eval_static_k,
                     "fixed-baseline multiplier; skips quantile calibration");
    eval->add_option("--quorum", f.quorum, "attack fraction a window must exceed to count as 1");
    eval->add_option("--static-quantile", f.static_quantile,
                     "quiet-window divergence quantile for baseline calibration");
    eval->add_option("--subsample", f.subsample, "evaluate on this many seeded-random records");
    eval->add_option("--temperature", f.temperature, "temperature for the work bound");
    eval->add_option("--out-dir", f.out_dir, "output directory");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }

        RunConfig rc;
        if (f.config) {
            const Json j = load_config_file(*f.config);
            stage(2, [&] { apply_config(rc, j); });
        }
        apply_flags(rc, f);

        if (fit->parsed()) {
            if (f.pos1) rc.train_path = *f.pos1;
            if (f.pos2) rc.model_path = *f.pos2;
            return cmd_fit(rc);
        }
        if (detect->parsed()) {
            if (f.pos1) rc.model_path = *f.pos1;
            if (f.pos2) rc.data_path = *f.pos2;
            return cmd_detect(rc);
        }
        if (sim->parsed()) return cmd_simulate(rc);
        if (eval->parsed()) {
            if (f.pos1) rc.model_path = *f.pos1;
            if (f.pos2) rc.data_path = *f.pos2;
            return cmd_eval(rc);
        }
        return 2;
    } catch (const CliExit& e) {
        return e.code;
    }
}
