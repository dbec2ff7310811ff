#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sentinel/gaussian.hpp"

namespace sentinel {

/// Number of raw features per record and which of them are categorical.
constexpr int kNumFeatures = 41;
constexpr std::array<int, 3> kCategoricalColumns = {1, 2, 3};
constexpr int kNumNumeric = kNumFeatures - int(kCategoricalColumns.size());

/// One parsed connection record: 38 numeric fields, the three categorical
/// fields (protocol_type, service, flag), the label string, and the
/// difficulty score when the file carries one (-1 otherwise, unused here).
struct FlowRecord {
    Eigen::Matrix<double, kNumNumeric, 1> numeric;
    std::array<std::string, 3> categorical;
    std::string label;
    int difficulty = -1;
};

/// Parse comma-separated records (41 features, label, optional difficulty).
/// Throws ParseError naming the 1-based line on any malformed line.
std::vector<FlowRecord> parse_nslkdd(std::istream& in);
std::vector<FlowRecord> parse_nslkdd_string(const std::string& text);

/// Parse a single line. `line_no` is used only for error messages.
FlowRecord parse_nslkdd_line(const std::string& line, long line_no);

/// "normal" -> 0, everything else (known attacks and unseen labels) -> 1.
int binarize_label(const std::string& label);

/// One-hot expansion of the categorical columns plus standardization of
/// every expanded column. Vocabularies are sorted so encoding is a pure
/// function of the fitted data, not of record order.
class EncoderModel {
  public:
    static EncoderModel fit(const std::vector<FlowRecord>& records);

    /// Encode one record into the standardized D-vector. Categories absent
    /// from the fit vocabulary contribute an all-zero block before
    /// standardization.
    Eigen::VectorXd apply(const FlowRecord& record) const;

    Eigen::Index dim() const { return means_.size(); }
    const std::array<std::vector<std::string>, 3>& vocab() const { return vocab_; }
    const Eigen::VectorXd& means() const { return means_; }
    const Eigen::VectorXd& stds() const { return stds_; }

    /// Expanded but not yet standardized row; exposed for fitting.
    Eigen::VectorXd raw_row(const FlowRecord& record) const;

    /// Used by model (de)serialization.
    static EncoderModel from_parts(std::array<std::vector<std::string>, 3> vocab,
                                   Eigen::VectorXd means, Eigen::VectorXd stds);

  private:
    EncoderModel() = default;
    Eigen::VectorXd raw_row_with_dim(const FlowRecord& record, Eigen::Index dim) const;

    std::array<std::vector<std::string>, 3> vocab_;
    Eigen::VectorXd means_;
    Eigen::VectorXd stds_;
};

Eigen::VectorXd apply_encoder(const EncoderModel& model, const FlowRecord& record);
EncoderModel fit_encoder(const std::vector<FlowRecord>& records);

/// Encode a whole batch, one row per record.
Eigen::MatrixXd encode_matrix(const EncoderModel& model,
                              const std::vector<FlowRecord>& records);

struct PcaModel {
    Eigen::MatrixXd components;         // k x D, orthonormal rows
    Eigen::VectorXd explained_variance; // descending, length k
    Eigen::VectorXd center;             // length D
};

/// Top-k principal axes of the rows of x, by eigendecomposition of the
/// unbiased sample covariance. Each component's largest-magnitude entry is
/// flipped positive so the decomposition is unique.
PcaModel fit_pca(const Eigen::MatrixXd& x, Eigen::Index k);

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd project_rows(const PcaModel& model, const Eigen::MatrixXd& x);

/// Reference distribution of normal operation in PCA space: the Gaussian
/// used by the detector plus a KDE point set kept for diagnostic scoring.
struct SafeModel {
    GaussianModel gaussian;
    Eigen::MatrixXd kde_points;  // rows are stored projections
    double kde_bandwidth;
};

/// Fit the reference Gaussian and retain (up to max_kde_points, seeded
/// uniform subsample) the projections for KDE scoring.
SafeModel fit_safe_model(const Eigen::MatrixXd& projections, double bandwidth,
                         double ridge, Eigen::Index max_kde_points = 20000,
                         std::uint64_t seed = 0);

/// log of the Gaussian-kernel mixture density at x, log-sum-exp stabilized.
double kde_log_density(const SafeModel& model, const Eigen::VectorXd& x);

}  // namespace sentinel
