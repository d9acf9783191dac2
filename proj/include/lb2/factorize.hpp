// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "lb2/core.hpp"
#include "lb2/linalg.hpp"

namespace lb2 {

/// Rank-r latent pair with W ~ u_factor * v_factor^T.
struct LatentFactors {
    Matrix u_factor;  // d_out x r
    Matrix v_factor;  // d_in x r

    Index rank() const { return u_factor.cols(); }

    void validate() const {
        require(u_factor.cols() == v_factor.cols() && u_factor.cols() >= 1,
                Errc::dimension_mismatch, "LatentFactors: factor ranks differ");
        require(u_factor.allFinite() && v_factor.allFinite(), Errc::numeric,
                "LatentFactors: non-finite entries");
    }
};

struct RotationMatrix {
    Matrix entries;  // r x r, orthogonal

    Index rank() const { return entries.rows(); }

    double orthogonality_error() const {
        return (entries.transpose() * entries - Matrix::Identity(rank(), rank())).norm();
    }
};

/// Row (h), latent (l) and column (g) scales of the tri-scale layout.
struct TriScale {
    Vector h_scale;  // d_out
    Vector l_scale;  // r
    Vector g_scale;  // d_in
    // Entries raised to kScaleFloor because the magnitude had a zero row/column.
    Index floored_entries = 0;
};

inline constexpr double kScaleFloor = 1e-12;

enum class ScalePolicy {
    floor,   // raise non-positive entries to kScaleFloor and count them
    reject,  // throw Errc::numeric on any non-positive entry
};

/// Splits the spectrum symmetrically: u = U_r Sigma_r^{1/2}, v = V_r Sigma_r^{1/2}.
inline LatentFactors truncated_factorize(const ThinSvd& svd, Index rank) {
    const Index max_rank = svd.singular_values.size();
    require(rank >= 1 && rank <= max_rank, Errc::invalid_argument,
            "truncated_factorize: rank out of range");
    const Vector root = svd.singular_values.head(rank).cwiseSqrt();
    return {svd.u.leftCols(rank) * root.asDiagonal(), svd.v.leftCols(rank) * root.asDiagonal()};
}

inline LatentFactors truncated_factorize(const Matrix& w, Index rank) {
    require(rank >= 1 && rank <= std::min(w.rows(), w.cols()), Errc::invalid_argument,
            "truncated_factorize: rank out of range");
    require(w.allFinite(), Errc::numeric, "truncated_factorize: non-finite input");
    return truncated_factorize(thin_svd(w), rank);
}

inline RotationMatrix random_orthogonal(Index rank, std::uint64_t seed) {
    require(rank >= 1, Errc::invalid_argument, "random_orthogonal: rank must be >= 1");
    return {random_orthonormal(rank, rank, seed)};
}

/// Z = [u_factor; v_factor], ((d_out + d_in) x r).
inline Matrix stack_factors(const LatentFactors& f) {
    Matrix z(f.u_factor.rows() + f.v_factor.rows(), f.rank());
    z << f.u_factor, f.v_factor;
    return z;
}

struct ItqOptions {
    bool early_stop = false;
    double early_stop_tolerance = 1e-6;
};

/// State handed to an observer after initialization (iteration 0) and after
/// every rotation update. `projected` is Z * rotation.
struct ItqStep {
    int iteration;
    const Matrix& rotation;
    const Matrix& projected;
};

using ItqObserver = std::function<void(const ItqStep&)>;

/// Joint iterative quantization over the stacked factors.
///
/// Starting from random_orthogonal(r, seed), alternates
///   B <- sign(Z R);  (Phi, Omega, Psi) <- SVD(B^T Z);  R <- Psi Phi^T,
/// which never decreases ||Z R||_1.
inline RotationMatrix joint_itq(const LatentFactors& factors, int iterations, std::uint64_t seed,
                                const ItqOptions& options = {},
                                const ItqObserver& observer = {}) {
    factors.validate();
    require(iterations >= 0, Errc::invalid_argument, "joint_itq: iterations must be >= 0");
    const Index r = factors.rank();
    const Matrix z = stack_factors(factors);
    Matrix rotation = random_orthogonal(r, seed).entries;
    Matrix projected = z * rotation;
    if (observer) observer({0, rotation, projected});

    for (int t = 1; t <= iterations; ++t) {
        const Matrix codes = sign_matrix(projected);
        const Matrix cross = codes.transpose() * z;
        Eigen::BDCSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Matrix next = svd.matrixV() * svd.matrixU().transpose();
        const double step = (next - rotation).norm();
        rotation = std::move(next);
        projected.noalias() = z * rotation;
        if (observer) observer({t, rotation, projected});
        if (options.early_stop && step < options.early_stop_tolerance) break;
    }
    return {rotation};
}

/// u R and v R. The product u v^T is unchanged for orthogonal R.
inline LatentFactors rotate_factors(const LatentFactors& factors, const RotationMatrix& rotation) {
    factors.validate();
    require(rotation.rank() == factors.rank() && rotation.entries.cols() == factors.rank(),
            Errc::dimension_mismatch, "rotate_factors: rotation does not match factor rank");
    if (rotation.entries.isIdentity(0.0)) return factors;
    return {factors.u_factor * rotation.entries, factors.v_factor * rotation.entries};
}

struct RankOneScales {
    Vector row_vec;  // length rows
    Vector col_vec;  // length cols
    Index floored_entries = 0;
};

namespace detail {

inline Index apply_scale_policy(Vector& v, ScalePolicy policy, const char* what) {
    Index floored = 0;
    for (Index i = 0; i < v.size(); ++i) {
        if (!(v(i) > 0.0)) {
            require(policy == ScalePolicy::floor, Errc::numeric,
                    std::string(what) + ": non-positive scale entry (zero row or column)");
            v(i) = kScaleFloor;
            ++floored;
        }
    }
    return floored;
}

}  // namespace detail

/// Best rank-1 approximation of a non-negative magnitude matrix, returned as
/// (u sqrt(sigma_1), sqrt(sigma_1) v) with both vectors positive.
inline RankOneScales rank_one_scales(const Matrix& magnitude,
                                     ScalePolicy policy = ScalePolicy::floor) {
    require(magnitude.size() > 0, Errc::invalid_argument, "rank_one_scales: empty matrix");
    require(magnitude.allFinite() && magnitude.minCoeff() >= 0.0, Errc::invalid_argument,
            "rank_one_scales: magnitudes must be finite and non-negative");
    require(magnitude.maxCoeff() > 0.0, Errc::invalid_argument, "rank_one_scales: all-zero input");
    const SingularTriplet t = leading_singular_triplet(magnitude);
    const double root = std::sqrt(t.sigma);
    RankOneScales out{t.u * root, t.v * root, 0};
    out.floored_entries = detail::apply_scale_policy(out.row_vec, policy, "rank_one_scales") +
                          detail::apply_scale_policy(out.col_vec, policy, "rank_one_scales");
    return out;
}

/// Tri-scale extraction from rank-1 fits of |u| and |v|:
/// h from |u|, g from |v|, l = l_u * l_v (elementwise).
inline TriScale dual_svid(const LatentFactors& factors, ScalePolicy policy = ScalePolicy::floor) {
    factors.validate();
    const RankOneScales us = rank_one_scales(factors.u_factor.cwiseAbs(), policy);
    const RankOneScales vs = rank_one_scales(factors.v_factor.cwiseAbs(), policy);
    TriScale s;
    s.h_scale = us.row_vec;
    s.g_scale = vs.row_vec;
    s.l_scale = us.col_vec.cwiseProduct(vs.col_vec);
    s.floored_entries = us.floored_entries + vs.floored_entries;
    return s;
}

}  // namespace lb2
