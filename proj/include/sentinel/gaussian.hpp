#pragma once

#include <Eigen/Dense>

#include "sentinel/errors.hpp"

namespace sentinel {

/// Multivariate Gaussian with a cached Cholesky factor of its covariance.
/// The covariance must be symmetric positive definite; construction fails
/// otherwise instead of producing garbage divergences downstream.
class GaussianModel {
  public:
    GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return covariance_; }
    Eigen::Index dim() const { return mean_.size(); }

    /// Lower-triangular L with L L^T = covariance.
    const Eigen::MatrixXd& chol() const { return chol_; }

    /// ln det(covariance), accumulated from the Cholesky diagonal.
    double log_det() const { return log_det_; }

    /// Solve covariance * x = b using the cached factor.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd covariance_;
    Eigen::MatrixXd chol_;
    double log_det_ = 0.0;
};

/// Non-negative KL divergence. Tiny negative values from floating-point
/// cancellation (>= -1e-9) are clamped to zero; anything more negative is
/// treated as a computation bug and rejected.
class KlValue {
  public:
    explicit KlValue(double raw);

    double value() const { return value_; }
    operator double() const { return value_; }

  private:
    double value_;
};

/// Maximum-likelihood mean with unbiased covariance plus ridge * I.
/// Needs at least two samples (rows of `samples`).
GaussianModel fit_gaussian(const Eigen::MatrixXd& samples, double ridge = 0.0);

/// KL(p || q) between Gaussians, closed form via Cholesky solves.
KlValue kl_gaussian(const GaussianModel& p, const GaussianModel& q);

/// Volume-based sensitivity proxy 1/det(covariance). Large when the model
/// is tightly concentrated, small when diffuse.
double fim_surrogate(const GaussianModel& g);

struct FisherQuadratic {
    double exact_kl;    ///< KL(shifted || base)
    double quadratic;   ///< 0.5 * dtheta^T g dtheta for a mean shift
};

/// Compare exact KL under a mean shift with its information-metric
/// second-order term. For mean shifts the two agree to machine precision.
FisherQuadratic fisher_quadratic_approx(const GaussianModel& base,
                                        const Eigen::VectorXd& mean_shift);

/// Minimum dissipation T * max(delta_kl, 0) for a divergence increment,
/// in units of k_B. Decreasing divergence costs nothing, hence the clamp.
double landauer_bound(double delta_kl, double temperature);

namespace detail {
/// Closed-form KL without the clamp; exposed so tests can watch the raw
/// cancellation behaviour.
double kl_gaussian_raw(const GaussianModel& p, const GaussianModel& q);
}  // namespace detail

}  // namespace sentinel
