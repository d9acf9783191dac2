// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "lb2/core.hpp"

namespace lb2 {

/// Normalized error of the best scaled-sign approximation of u:
///   lambda = 1 - (||u||_1 / ||u||_2)^2 / r.
/// Zero for hypercube directions, 1 - 1/r for one-hot vectors.
template <class Derived>
double local_distortion(const Eigen::MatrixBase<Derived>& u) {
    const auto r = static_cast<double>(u.size());
    require(u.size() > 0, Errc::invalid_argument, "local_distortion: empty vector");
    const double l2sq = u.squaredNorm();
    require(l2sq > 0.0, Errc::invalid_argument, "local_distortion: zero vector");
    const double l1 = u.template lpNorm<1>();
    const double lambda = 1.0 - (l1 * l1) / (l2sq * r);
    return lambda < 0.0 ? 0.0 : lambda;  // clamp rounding below the hypercube bound
}

/// alpha* = ||u||_1 / r minimizes ||u - alpha sign(u)||_2^2.
template <class Derived>
double optimal_alpha(const Eigen::MatrixBase<Derived>& u) {
    require(u.size() > 0 && u.squaredNorm() > 0.0, Errc::invalid_argument,
            "optimal_alpha: zero vector");
    return u.template lpNorm<1>() / static_cast<double>(u.size());
}

/// Coordinate incoherence sqrt(d) * max |U_ij| with d = row count.
template <class Derived>
double coherence(const Eigen::MatrixBase<Derived>& u) {
    require(u.size() > 0, Errc::invalid_argument, "coherence: empty matrix");
    return std::sqrt(static_cast<double>(u.rows())) * u.cwiseAbs().maxCoeff();
}

/// Compound distortion of a product of two independently quantized factors.
inline double global_distortion(double lambda_u, double lambda_v) {
    require(lambda_u >= 0.0 && lambda_u <= 1.0 && lambda_v >= 0.0 && lambda_v <= 1.0,
            Errc::invalid_argument, "global_distortion: inputs must lie in [0, 1]");
    return 1.0 - (1.0 - lambda_u) * (1.0 - lambda_v);
}

struct DistortionProfile {
    std::vector<double> per_row_lambda;
    double mean_lambda = 0.0;
    double max_lambda = 0.0;
    Index argmax_row = 0;
    // All-zero rows are assigned lambda = 1 and listed here.
    std::vector<Index> degenerate_rows;
};

/// Row-wise local distortion with summary statistics.
template <class Derived>
DistortionProfile distortion_profile(const Eigen::MatrixBase<Derived>& factor) {
    require(factor.rows() > 0 && factor.cols() > 0, Errc::invalid_argument,
            "distortion_profile: empty matrix");
    DistortionProfile p;
    p.per_row_lambda.resize(static_cast<std::size_t>(factor.rows()));
    double sum = 0.0;
    for (Index i = 0; i < factor.rows(); ++i) {
        double lambda = 1.0;
        if (factor.row(i).squaredNorm() > 0.0) {
            lambda = local_distortion(factor.row(i));
        } else {
            p.degenerate_rows.push_back(i);
        }
        p.per_row_lambda[static_cast<std::size_t>(i)] = lambda;
        sum += lambda;
        if (i == 0 || lambda > p.max_lambda) {
            p.max_lambda = lambda;
            p.argmax_row = i;
        }
    }
    p.mean_lambda = sum / static_cast<double>(factor.rows());
    return p;
}

inline double mse(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::dimension_mismatch,
            "mse: shape mismatch");
    require(a.size() > 0, Errc::invalid_argument, "mse: empty matrices");
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

/// Pearson kurtosis of all entries (3 for a Gaussian). Informational only.
inline double kurtosis(const Matrix& m) {
    require(m.size() > 1, Errc::invalid_argument, "kurtosis: need at least two entries");
    const double n = static_cast<double>(m.size());
    const double mean = m.sum() / n;
    const Matrix centered = m.array() - mean;
    const double m2 = centered.squaredNorm() / n;
    const double m4 = centered.array().square().square().sum() / n;
    require(m2 > 0.0, Errc::numeric, "kurtosis: constant input");
    return m4 / (m2 * m2);
}

}  // namespace lb2
