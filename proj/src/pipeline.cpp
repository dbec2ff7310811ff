#include "sentinel/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

#include "sentinel/errors.hpp"
#include "sentinel/random.hpp"

namespace sentinel {

namespace {

bool is_categorical(int col) {
    return std::find(kCategoricalColumns.begin(), kCategoricalColumns.end(), col) !=
           kCategoricalColumns.end();
}

double parse_numeric(const std::string& field, int col, long line_no) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << "column " << col + 1 << ": expected a number, got \"" << field << "\"";
        throw ParseError(msg.str(), line_no);
    }
    return value;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

FlowRecord parse_nslkdd_line(const std::string& line, long line_no) {
    std::vector<std::string> fields = split_csv(line);
    // Some distributions append a trailing period to the label; strip it.
    if (fields.size() != kNumFeatures + 1 && fields.size() != kNumFeatures + 2) {
        std::ostringstream msg;
        msg << "expected " << kNumFeatures + 1 << " or " << kNumFeatures + 2
            << " comma-separated fields, got " << fields.size();
        throw ParseError(msg.str(), line_no);
    }

    FlowRecord rec;
    int numeric_idx = 0;
    int cat_idx = 0;
    for (int col = 0; col < kNumFeatures; ++col) {
        if (is_categorical(col)) {
            rec.categorical[cat_idx++] = fields[col];
        } else {
            rec.numeric[numeric_idx++] = parse_numeric(fields[col], col, line_no);
        }
    }

    rec.label = fields[kNumFeatures];
    if (!rec.label.empty() && rec.label.back() == '.') rec.label.pop_back();
    if (rec.label.empty()) throw ParseError("empty label", line_no);

    if (fields.size() == kNumFeatures + 2) {
        const std::string& diff = fields[kNumFeatures + 1];
        int value = 0;
        auto [ptr, ec] = std::from_chars(diff.data(), diff.data() + diff.size(), value);
        if (ec != std::errc() || ptr != diff.data() + diff.size()) {
            std::ostringstream msg;
            msg << "difficulty \"" << diff << "\" is not an integer";
            throw ParseError(msg.str(), line_no);
        }
        rec.difficulty = value;
    }
    return rec;
}

std::vector<FlowRecord> parse_nslkdd(std::istream& in) {
    std::vector<FlowRecord> records;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        records.push_back(parse_nslkdd_line(line, line_no));
    }
    return records;
}

std::vector<FlowRecord> parse_nslkdd_string(const std::string& text) {
    std::istringstream in(text);
    return parse_nslkdd(in);
}

int binarize_label(const std::string& label) { return label == "normal" ? 0 : 1; }

EncoderModel EncoderModel::fit(const std::vector<FlowRecord>& records) {
    if (records.empty()) throw InsufficientDataError("cannot fit encoder on zero records");

    EncoderModel model;
    std::array<std::set<std::string>, 3> seen;
    for (const FlowRecord& rec : records)
        for (int c = 0; c < 3; ++c) seen[c].insert(rec.categorical[c]);
    for (int c = 0; c < 3; ++c)
        model.vocab_[c].assign(seen[c].begin(), seen[c].end());  // set keeps them sorted

    Eigen::Index dim = kNumNumeric;
    for (const auto& v : model.vocab_) dim += Eigen::Index(v.size());

    const double n = double(records.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    for (const FlowRecord& rec : records) sum += model.raw_row_with_dim(rec, dim);
    model.means_ = sum / n;

    Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
    for (const FlowRecord& rec : records) {
        Eigen::VectorXd d = model.raw_row_with_dim(rec, dim) - model.means_;
        sq += d.cwiseProduct(d);
    }
    model.stds_ = (sq / n).cwiseSqrt();
    for (Eigen::Index i = 0; i < dim; ++i)
        if (model.stds_[i] <= 0.0) model.stds_[i] = 1.0;
    return model;
}

Eigen::VectorXd EncoderModel::raw_row_with_dim(const FlowRecord& record,
                                               Eigen::Index dim) const {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(dim);
    Eigen::Index out = 0;
    int numeric_idx = 0;
    int cat_idx = 0;
    for (int col = 0; col < kNumFeatures; ++col) {
        if (is_categorical(col)) {
            const std::vector<std::string>& vocab = vocab_[size_t(cat_idx)];
            auto it = std::lower_bound(vocab.begin(), vocab.end(),
                                       record.categorical[size_t(cat_idx)]);
            if (it != vocab.end() && *it == record.categorical[size_t(cat_idx)])
                row[out + (it - vocab.begin())] = 1.0;
            out += Eigen::Index(vocab.size());
            ++cat_idx;
        } else {
            row[out++] = record.numeric[numeric_idx++];
        }
    }
    return row;
}

Eigen::VectorXd EncoderModel::raw_row(const FlowRecord& record) const {
    return raw_row_with_dim(record, dim());
}

Eigen::VectorXd EncoderModel::apply(const FlowRecord& record) const {
    return (raw_row(record) - means_).cwiseQuotient(stds_);
}

EncoderModel EncoderModel::from_parts(std::array<std::vector<std::string>, 3> vocab,
                                      Eigen::VectorXd means, Eigen::VectorXd stds) {
    EncoderModel model;
    model.vocab_ = std::move(vocab);
    model.means_ = std::move(means);
    model.stds_ = std::move(stds);
    if (model.means_.size() != model.stds_.size())
        throw DimensionMismatchError("encoder means/stds length mismatch");
    return model;
}

Eigen::VectorXd apply_encoder(const EncoderModel& model, const FlowRecord& record) {
    return model.apply(record);
}

EncoderModel fit_encoder(const std::vector<FlowRecord>& records) {
    return EncoderModel::fit(records);
}

Eigen::MatrixXd encode_matrix(const EncoderModel& model,
                              const std::vector<FlowRecord>& records) {
    Eigen::MatrixXd out(Eigen::Index(records.size()), model.dim());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        out.row(i) = model.apply(records[size_t(i)]).transpose();
    return out;
}

PcaModel fit_pca(const Eigen::MatrixXd& x, Eigen::Index k) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (k < 1) throw ConfigError("pca dimension must be positive");
    if (k > std::min(n - 1, d)) {
        std::ostringstream msg;
        msg << "pca dimension " << k << " exceeds min(n-1, D) = " << std::min(n - 1, d);
        throw ConfigError(msg.str());
    }
    if (!x.allFinite()) throw ConfigError("pca input contains non-finite values");

    PcaModel model;
    model.center = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - model.center.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / double(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca eigendecomposition failed");

    // Eigen returns ascending eigenvalues; take the top k in reverse.
    model.components.resize(k, d);
    model.explained_variance.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index src = d - 1 - i;
        Eigen::VectorXd v = eig.eigenvectors().col(src);
        Eigen::Index argmax = 0;
        v.cwiseAbs().maxCoeff(&argmax);
        if (v[argmax] < 0) v = -v;
        model.components.row(i) = v.transpose();
        model.explained_variance[i] = std::max(eig.eigenvalues()[src], 0.0);
    }
    return model;
}

Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.center.size())
        throw DimensionMismatchError("projection input dimension mismatch");
    return model.components * (x - model.center);
}

Eigen::MatrixXd project_rows(const PcaModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.center.size())
        throw DimensionMismatchError("projection input dimension mismatch");
    return (x.rowwise() - model.center.transpose()) * model.components.transpose();
}

SafeModel fit_safe_model(const Eigen::MatrixXd& projections, double bandwidth,
                         double ridge, Eigen::Index max_kde_points, std::uint64_t seed) {
    if (bandwidth <= 0.0) throw ConfigError("kde bandwidth must be positive");

    GaussianModel gaussian = fit_gaussian(projections, ridge);

    Eigen::MatrixXd points;
    const Eigen::Index n = projections.rows();
    if (n <= max_kde_points) {
        points = projections;
    } else {
        std::vector<Eigen::Index> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = make_rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(size_t(max_kde_points));
        std::sort(idx.begin(), idx.end());  // keep original ordering deterministic
        points.resize(max_kde_points, projections.cols());
        for (Eigen::Index i = 0; i < max_kde_points; ++i)
            points.row(i) = projections.row(idx[size_t(i)]);
    }
    return SafeModel{std::move(gaussian), std::move(points), bandwidth};
}

double kde_log_density(const SafeModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.kde_points.cols())
        throw DimensionMismatchError("kde input dimension mismatch");
    const double h2 = model.kde_bandwidth * model.kde_bandwidth;
    const double k = double(x.size());
    const double n = double(model.kde_points.rows());

    Eigen::VectorXd expo =
        (model.kde_points.rowwise() - x.transpose()).rowwise().squaredNorm() / (-2.0 * h2);
    const double peak = expo.maxCoeff();
    const double sum = (expo.array() - peak).exp().sum();
    return peak + std::log(sum / n) - 0.5 * k * std::log(2.0 * M_PI * h2);
}

}  // namespace sentinel
