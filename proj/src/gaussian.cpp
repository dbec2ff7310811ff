#include "sentinel/gaussian.hpp"

#include <cmath>
#include <sstream>

namespace sentinel {

namespace {

void check_symmetric(const Eigen::MatrixXd& m) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double gap = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (gap > 1e-12 * scale) {
        std::ostringstream msg;
        msg << "covariance asymmetry " << gap << " exceeds tolerance";
        throw NotSpdError(msg.str());
    }
}

}  // namespace

GaussianModel::GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    if (mean_.size() == 0) throw DimensionMismatchError("empty mean");
    if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
        throw DimensionMismatchError("covariance shape does not match mean");

    check_symmetric(covariance_);
    covariance_ = ((covariance_ + covariance_.transpose()) / 2.0).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    if (llt.info() != Eigen::Success)
        throw NotSpdError("covariance is not positive definite");
    chol_ = llt.matrixL();

    log_det_ = 0.0;
    for (Eigen::Index i = 0; i < chol_.rows(); ++i)
        log_det_ += 2.0 * std::log(chol_(i, i));
}

Eigen::VectorXd GaussianModel::solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd y = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd GaussianModel::solve(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd y = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

KlValue::KlValue(double raw) {
    if (std::isnan(raw)) throw ConfigError("KL is NaN");
    if (raw < -1e-9) {
        std::ostringstream msg;
        msg << "KL " << raw << " is negative beyond rounding tolerance";
        throw ConfigError(msg.str());
    }
    value_ = raw < 0.0 ? 0.0 : raw;
}

GaussianModel fit_gaussian(const Eigen::MatrixXd& samples, double ridge) {
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (n < 2) throw InsufficientDataError("need at least 2 samples to fit a Gaussian");
    if (d == 0) throw DimensionMismatchError("samples have zero columns");

    Eigen::VectorXd mean = samples.colwise().mean();
    Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / double(n - 1);
    if (ridge > 0.0) cov.diagonal().array() += ridge;

    return GaussianModel(std::move(mean), std::move(cov));
}

namespace detail {

double kl_gaussian_raw(const GaussianModel& p, const GaussianModel& q) {
    if (p.dim() != q.dim())
        throw DimensionMismatchError("KL between Gaussians of different dimension");
    const double d = double(p.dim());

    // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    Eigen::MatrixXd a = q.chol().triangularView<Eigen::Lower>().solve(p.chol());
    const double trace_term = a.squaredNorm();

    Eigen::VectorXd dmu = q.mean() - p.mean();
    Eigen::VectorXd w = q.chol().triangularView<Eigen::Lower>().solve(dmu);
    const double quad_term = w.squaredNorm();

    return 0.5 * (trace_term + quad_term - d + q.log_det() - p.log_det());
}

}  // namespace detail

KlValue kl_gaussian(const GaussianModel& p, const GaussianModel& q) {
    return KlValue(detail::kl_gaussian_raw(p, q));
}

double fim_surrogate(const GaussianModel& g) { return std::exp(-g.log_det()); }

FisherQuadratic fisher_quadratic_approx(const GaussianModel& base,
                                        const Eigen::VectorXd& mean_shift) {
    if (mean_shift.size() != base.dim())
        throw DimensionMismatchError("mean shift dimension mismatch");

    GaussianModel shifted(base.mean() + mean_shift, base.covariance());
    FisherQuadratic out;
    out.exact_kl = kl_gaussian(shifted, base);

    // Fisher metric for the mean block is Sigma^-1.
    Eigen::VectorXd w = base.chol().triangularView<Eigen::Lower>().solve(mean_shift);
    out.quadratic = 0.5 * w.squaredNorm();
    return out;
}

double landauer_bound(double delta_kl, double temperature) {
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    return temperature * std::max(delta_kl, 0.0);
}

}  // namespace sentinel
