#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sentinel {

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Derived seed for an independent sub-stream (path, trial, worker).
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
    return base + index;
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

/// Rows are independent standard-normal draws.
inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
}

}  // namespace sentinel
