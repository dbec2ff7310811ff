#include "sentinel/detector.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

nlohmann::json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string event_to_json(const DetectionEvent& e) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["kl"] = number_or_null(e.kl);
    j["threshold"] = number_or_null(e.threshold);
    j["alarmed"] = e.alarmed;
    j["is_fpt"] = e.is_fpt;
    j["fim"] = number_or_null(e.fim);
    j["landauer"] = number_or_null(e.landauer);
    j["warmup"] = e.warmup;
    j["degenerate"] = e.degenerate;
    return j.dump();
}

Detector::Detector(DetectorConfig config, const SafeModel& safe)
    : config_(std::move(config)), safe_(safe.gaussian) {
    const long dim = safe_.dim();
    if (config_.window_size < dim + 2) {
        std::ostringstream msg;
        msg << "window_size " << config_.window_size << " must be at least dim + 2 = "
            << dim + 2;
        throw ConfigError(msg.str());
    }
    if (config_.history_len < 10) throw ConfigError("history_len must be at least 10");
    if (config_.kappa <= 0) throw ConfigError("kappa must be positive");
    if (config_.stride < 1) throw ConfigError("stride must be at least 1");
    if (config_.ridge < 0) throw ConfigError("ridge must be nonnegative");
    if (config_.threshold_floor < 0) throw ConfigError("threshold_floor must be nonnegative");
    if (config_.drift_patience < 1) throw ConfigError("drift_patience must be positive");
    if (config_.static_k && *config_.static_k <= 0)
        throw ConfigError("static_k must be positive");
    if (config_.static_k)
        static_threshold_ = *config_.static_k * std::exp(-safe_.log_det() / 2.0);

    buffer_.resize(config_.window_size, dim);
}

void Detector::reset() {
    steps_seen_ = 0;
    kl_history_.clear();
    fpt_.reset();
    drift_.reset();
    frozen_ = false;
}

double Detector::current_threshold() const {
    const size_t n = kl_history_.size();
    double threshold = config_.threshold_floor;
    if (n >= 2) {
        double mean = 0.0;
        for (double v : kl_history_) mean += v;
        mean /= double(n);
        double ss = 0.0;
        for (double v : kl_history_) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / double(n - 1));
        threshold = std::max(mean + config_.kappa * sd, config_.threshold_floor);
    }
    return threshold;
}

std::optional<DetectionEvent> Detector::step(const Eigen::VectorXd& x, double temperature) {
    if (x.size() != safe_.dim())
        throw DimensionMismatchError("sample dimension does not match safe model");

    buffer_.row(steps_seen_ % config_.window_size) = x.transpose();
    ++steps_seen_;

    const long w = config_.window_size;
    if (steps_seen_ < w || (steps_seen_ - w) % config_.stride != 0) return std::nullopt;

    // Fixed-threshold mode needs no calibration history, so it never warms up
    // and its threshold is a constant.
    const bool fixed = config_.static_k.has_value();

    DetectionEvent event;
    event.step = steps_seen_ - 1;
    event.warmup = fixed ? false : !warmed_up();
    event.threshold = fixed ? static_threshold_ : current_threshold();

    double hist_mean = 0.0;
    const bool have_history = !kl_history_.empty();
    if (have_history) {
        for (double v : kl_history_) hist_mean += v;
        hist_mean /= double(kl_history_.size());
    }

    bool degenerate = false;
    double kl = std::numeric_limits<double>::infinity();
    double fim = std::numeric_limits<double>::infinity();
    try {
        GaussianModel window = fit_gaussian(buffer_, config_.ridge);
        kl = kl_gaussian(window, safe_);
        fim = fim_surrogate(window);
    } catch (const NotSpdError&) {
        degenerate = true;  // fail closed below
    }

    event.kl = kl;
    event.fim = fim;
    event.degenerate = degenerate;

    if (degenerate) {
        event.alarmed = true;
        event.landauer = std::numeric_limits<double>::infinity();
    } else {
        event.landauer =
            landauer_bound(have_history ? kl - hist_mean : 0.0, temperature);
        event.alarmed = !event.warmup && kl >= event.threshold;
        drift_.observe(kl);
    }

    if (event.alarmed && !fpt_) {
        fpt_ = event.step;
        event.is_fpt = true;
    }
    frozen_ = event.alarmed;

    if (!event.alarmed && !degenerate) {
        kl_history_.push_back(kl);
        if (long(kl_history_.size()) > config_.history_len) kl_history_.pop_front();
    }
    return event;
}

double static_threshold(const SafeModel& safe, double k) {
    if (k <= 0) throw ConfigError("static threshold scale must be positive");
    return k * std::exp(-safe.gaussian.log_det() / 2.0);
}

}  // namespace sentinel
