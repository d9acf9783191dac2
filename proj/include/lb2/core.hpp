// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace lb2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Errc {
    invalid_argument,
    dimension_mismatch,
    io,
    corrupt,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline void require(bool ok, Errc code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

// sign(0) = +1: binary codes have no zero state.
constexpr double sign_of(double x) noexcept { return x >= 0.0 ? 1.0 : -1.0; }

template <class Derived>
Matrix sign_matrix(const Eigen::MatrixBase<Derived>& m) {
    return m.unaryExpr([](double x) { return sign_of(x); });
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded generator with a portable normal sampler.
///
/// std::normal_distribution is implementation-defined, so Gaussian draws use
/// Box-Muller over the (standardized) mt19937_64 output stream instead. The
/// same seed yields the same matrices with any conforming standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Column-major fill with i.i.d. standard normals.
inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

inline void fix_signs_first_nonzero(Matrix& basis) {
    for (Index j = 0; j < basis.cols(); ++j) {
        for (Index i = 0; i < basis.rows(); ++i) {
            if (basis(i, j) != 0.0) {
                if (basis(i, j) < 0.0) basis.col(j) *= -1.0;
                break;
            }
        }
    }
}

/// Orthonormal `rows x cols` basis from the QR factor of a seeded Gaussian
/// matrix. Column signs are fixed so that each column's first nonzero entry
/// is positive.
///
/// `spike` > 0 adds `spike * sqrt(rows)` to entry (j, j) of column j before
/// orthogonalization, producing a coherent basis whose leading rows are
/// dominated by single coordinates. spike = 0 gives the usual isotropic draw.
inline Matrix random_orthonormal(Index rows, Index cols, std::uint64_t seed, double spike = 0.0) {
    require(rows >= 1 && cols >= 1 && cols <= rows, Errc::invalid_argument,
            "random_orthonormal: need 1 <= cols <= rows");
    require(spike >= 0.0 && std::isfinite(spike), Errc::invalid_argument,
            "random_orthonormal: spike must be finite and non-negative");
    Rng rng(seed);
    Matrix g = gaussian_matrix(rows, cols, rng);
    if (spike > 0.0) {
        const double s = spike * std::sqrt(static_cast<double>(rows));
        for (Index j = 0; j < cols; ++j) g(j, j) += s;
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    fix_signs_first_nonzero(q);
    return q;
}

}  // namespace lb2
