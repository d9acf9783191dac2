// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include <Eigen/SVD>

#include "lb2/core.hpp"

namespace lb2 {

/// Thin SVD a = u * diag(singular_values) * v^T, singular values descending.
struct ThinSvd {
    Matrix u;
    Vector singular_values;
    Matrix v;
};

/// Deterministic thin SVD. Each left singular vector is sign-fixed so that its
/// largest-magnitude entry is positive (the matching right vector flips with it).
inline ThinSvd thin_svd(const Matrix& a) {
    require(a.rows() > 0 && a.cols() > 0, Errc::invalid_argument, "thin_svd: empty matrix");
    require(a.allFinite(), Errc::numeric, "thin_svd: non-finite input");
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThinSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    for (Index k = 0; k < out.u.cols(); ++k) {
        Index arg = 0;
        out.u.col(k).cwiseAbs().maxCoeff(&arg);
        if (out.u(arg, k) < 0.0) {
            out.u.col(k) *= -1.0;
            out.v.col(k) *= -1.0;
        }
    }
    return out;
}

struct SingularTriplet {
    Vector u;
    double sigma = 0.0;
    Vector v;
};

/// Leading singular triplet, oriented so that u sums to a non-negative value.
///
/// Power iteration on a^T a started from the all-ones vector; this converges
/// fast for entrywise non-negative inputs (Perron vector) and keeps the
/// iterates non-negative. Falls back to a full SVD when it stalls.
inline SingularTriplet leading_singular_triplet(const Matrix& a, int max_iterations = 2000,
                                                double tolerance = 1e-14) {
    require(a.rows() > 0 && a.cols() > 0, Errc::invalid_argument,
            "leading_singular_triplet: empty matrix");
    SingularTriplet t;
    Vector v = Vector::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
        Vector u = a * v;
        const double un = u.norm();
        if (un == 0.0) break;
        u /= un;
        Vector z = a.transpose() * u;
        const double sigma = z.norm();
        z /= sigma;
        const double delta = (z - v).norm();
        v = std::move(z);
        t.u = std::move(u);
        t.sigma = sigma;
        if (delta <= tolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
        t.u = svd.matrixU().col(0);
        t.sigma = svd.singularValues()(0);
        v = svd.matrixV().col(0);
    } else {
        // Refresh u against the final v so both vectors are mutually consistent.
        t.u = a * v;
        t.sigma = t.u.norm();
        if (t.sigma > 0.0) t.u /= t.sigma;
    }
    t.v = std::move(v);
    if (t.u.sum() < 0.0) {
        t.u *= -1.0;
        t.v *= -1.0;
    }
    return t;
}

}  // namespace lb2
