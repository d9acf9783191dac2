// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lb2/budget.hpp"
#include "lb2/core.hpp"
#include "lb2/factorize.hpp"
#include "lb2/linalg.hpp"
#include "lb2/metrics.hpp"

namespace lb2 {

/// Row-major +-1 matrix, one bit per entry. Bit j%64 of word j/64 in a row holds
/// entry j; 1 means +1. Unused high bits of the last word in each row are zero.
class PackedBinaryFactor {
public:
    PackedBinaryFactor() = default;

    PackedBinaryFactor(Index rows, Index cols)
        : rows_(rows), cols_(cols), words_per_row_(words_for(cols)),
          words_(static_cast<std::size_t>(rows * words_for(cols)), 0) {
        require(rows >= 0 && cols >= 0, Errc::invalid_argument, "PackedBinaryFactor: bad shape");
    }

    static Index words_for(Index cols) { return (cols + 63) / 64; }

    /// Adopts a word array; rejects wrong lengths and nonzero padding.
    static PackedBinaryFactor from_words(Index rows, Index cols, std::vector<std::uint64_t> words) {
        PackedBinaryFactor f(rows, cols);
        require(words.size() == f.words_.size(), Errc::corrupt,
                "PackedBinaryFactor: word count does not match shape");
        f.words_ = std::move(words);
        const std::uint64_t pad = f.padding_mask();
        if (pad != 0) {
            for (Index i = 0; i < rows; ++i) {
                require((f.row_words(i)[f.words_per_row_ - 1] & pad) == 0, Errc::corrupt,
                        "PackedBinaryFactor: nonzero padding bits");
            }
        }
        return f;
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index words_per_row() const { return words_per_row_; }
    const std::vector<std::uint64_t>& words() const { return words_; }

    const std::uint64_t* row_words(Index i) const {
        return words_.data() + static_cast<std::size_t>(i * words_per_row_);
    }

    bool bit(Index i, Index j) const {
        return (row_words(i)[j / 64] >> (j % 64)) & 1U;
    }

    double value(Index i, Index j) const { return bit(i, j) ? 1.0 : -1.0; }

    void set(Index i, Index j, bool positive) {
        std::uint64_t& w = words_[static_cast<std::size_t>(i * words_per_row_ + j / 64)];
        const std::uint64_t mask = std::uint64_t{1} << (j % 64);
        w = positive ? (w | mask) : (w & ~mask);
    }

    Matrix to_dense() const {
        Matrix m(rows_, cols_);
        for (Index i = 0; i < rows_; ++i)
            for (Index j = 0; j < cols_; ++j) m(i, j) = value(i, j);
        return m;
    }

    /// Every payload bit flipped; padding stays zero.
    PackedBinaryFactor negated() const {
        PackedBinaryFactor out = *this;
        const std::uint64_t pad = padding_mask();
        for (Index i = 0; i < rows_; ++i) {
            for (Index w = 0; w < words_per_row_; ++w) {
                auto& word = out.words_[static_cast<std::size_t>(i * words_per_row_ + w)];
                word = ~word;
                if (w == words_per_row_ - 1) word &= ~pad;
            }
        }
        return out;
    }

    bool operator==(const PackedBinaryFactor&) const = default;

private:
    std::uint64_t padding_mask() const {
        const Index used = cols_ % 64;
        return used == 0 ? 0 : ~((std::uint64_t{1} << used) - 1);
    }

    Index rows_ = 0;
    Index cols_ = 0;
    Index words_per_row_ = 0;
    std::vector<std::uint64_t> words_;
};

/// bit(i, j) = 1 iff factor(i, j) >= 0.
template <class Derived>
PackedBinaryFactor binarize(const Eigen::MatrixBase<Derived>& factor) {
    require(factor.allFinite(), Errc::numeric, "binarize: non-finite entries");
    PackedBinaryFactor p(factor.rows(), factor.cols());
    for (Index i = 0; i < factor.rows(); ++i)
        for (Index j = 0; j < factor.cols(); ++j)
            if (factor(i, j) >= 0.0) p.set(i, j, true);
    return p;
}

enum class Method : std::uint8_t { standard = 0, random_rotation = 1, joint_itq = 2 };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::standard: return "standard";
        case Method::random_rotation: return "rotate";
        case Method::joint_itq: return "itq";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "standard") return Method::standard;
    if (s == "rotate") return Method::random_rotation;
    if (s == "itq") return Method::joint_itq;
    throw Error(Errc::invalid_argument,
                "unknown method '" + std::string(s) + "' (expected standard|rotate|itq)");
}

struct QuantizedPath {
    PackedBinaryFactor u_binary;  // d_out x r
    PackedBinaryFactor v_binary;  // d_in x r
    TriScale scales;

    void validate() const {
        const Index r = u_binary.cols();
        require(v_binary.cols() == r && scales.l_scale.size() == r &&
                    scales.h_scale.size() == u_binary.rows() &&
                    scales.g_scale.size() == v_binary.rows(),
                Errc::dimension_mismatch, "QuantizedPath: inconsistent dimensions");
    }
};

struct CompressedLayer {
    Index d_out = 0;
    Index d_in = 0;
    Index rank = 0;
    Method method = Method::standard;
    std::uint64_t seed = 0;
    std::uint32_t iterations = 0;
    std::vector<QuantizedPath> paths;

    void validate() const {
        require(!paths.empty() && paths.size() <= 2, Errc::invalid_argument,
                "CompressedLayer: need one or two paths");
        for (const auto& p : paths) {
            p.validate();
            require(p.u_binary.rows() == d_out && p.v_binary.rows() == d_in &&
                        p.u_binary.cols() == rank,
                    Errc::dimension_mismatch, "CompressedLayer: path shape differs from header");
        }
    }

    MemoryReport memory() const {
        return littlebit_bits({static_cast<std::uint64_t>(d_in), static_cast<std::uint64_t>(d_out)},
                              static_cast<std::uint64_t>(rank),
                              static_cast<unsigned>(paths.size()));
    }
};

enum class ResidualSeeding {
    fresh,  // path 2 runs its own rotation from a derived seed
    reuse,  // path 2 applies path 1's final rotation
};

enum class ScalePrecision { full, f32, f16 };

struct CompressOptions {
    double budget_bpp = 1.0;
    Method method = Method::joint_itq;
    bool residual = false;
    std::uint64_t seed = 0;
    int iterations = 50;
    ResidualSeeding residual_seeding = ResidualSeeding::fresh;
    ScalePrecision scale_precision = ScalePrecision::full;
    ScalePolicy scale_policy = ScalePolicy::floor;
    ItqOptions itq;
};

struct PathDiagnostics {
    DistortionProfile u_profile;  // rows of the rotated u factor
    DistortionProfile v_profile;
    RotationMatrix rotation;
    Index floored_scales = 0;
};

struct CompressDiagnostics {
    std::vector<PathDiagnostics> paths;
};

inline std::uint64_t residual_seed(std::uint64_t seed) { return splitmix64(seed ^ 0xa5a5a5a5ULL); }

inline void round_scales(TriScale& s, ScalePrecision p) {
    auto apply = [&](Vector& v) {
        for (Index i = 0; i < v.size(); ++i) {
            if (p == ScalePrecision::f32) {
                v(i) = static_cast<double>(static_cast<float>(v(i)));
            } else if (p == ScalePrecision::f16) {
                v(i) = static_cast<double>(static_cast<float>(Eigen::half(static_cast<float>(v(i)))));
            }
        }
    };
    if (p == ScalePrecision::full) return;
    apply(s.h_scale);
    apply(s.l_scale);
    apply(s.g_scale);
}

/// Rotation applied to the latent factors for a given method.
inline RotationMatrix method_rotation(const LatentFactors& f, Method method, std::uint64_t seed,
                                      int iterations, const ItqOptions& itq = {}) {
    switch (method) {
        case Method::standard: return {Matrix::Identity(f.rank(), f.rank())};
        case Method::random_rotation: return random_orthogonal(f.rank(), seed);
        case Method::joint_itq: return joint_itq(f, iterations, seed, itq);
    }
    throw Error(Errc::invalid_argument, "unknown method");
}

/// Binarizes rotated factors and attaches their Dual-SVID scales.
inline QuantizedPath quantize_path(const LatentFactors& rotated, ScalePolicy policy = ScalePolicy::floor,
                                   ScalePrecision precision = ScalePrecision::full) {
    QuantizedPath p{binarize(rotated.u_factor), binarize(rotated.v_factor),
                    dual_svid(rotated, policy)};
    round_scales(p.scales, precision);
    return p;
}

/// diag(h) U_b diag(l) V_b^T diag(g).
inline Matrix reconstruct_path(const QuantizedPath& path) {
    path.validate();
    const Matrix ub = path.u_binary.to_dense();
    const Matrix vb = path.v_binary.to_dense();
    const Matrix left = path.scales.h_scale.asDiagonal() * ub * path.scales.l_scale.asDiagonal();
    const Matrix right = path.scales.g_scale.asDiagonal() * vb;
    return left * right.transpose();
}

inline Matrix decompress(const CompressedLayer& layer) {
    layer.validate();
    Matrix w = reconstruct_path(layer.paths[0]);
    for (std::size_t k = 1; k < layer.paths.size(); ++k) w += reconstruct_path(layer.paths[k]);
    return w;
}

/// Rank chosen by compress_layer: largest budget-feasible rank, capped at
/// min(d_out, d_in).
inline Index compressed_rank(Index d_out, Index d_in, double budget_bpp, bool residual) {
    const LayerDims dims{static_cast<std::uint64_t>(d_in), static_cast<std::uint64_t>(d_out)};
    const auto r = littlebit_rank_for_budget(dims, budget_bpp, residual ? 2 : 1);
    require(r >= 1, Errc::invalid_argument, "budget too small for rank 1");
    return std::min<Index>(static_cast<Index>(r), std::min(d_out, d_in));
}

/// Compresses `w` given its precomputed thin SVD.
inline CompressedLayer compress_layer(const Matrix& w, const ThinSvd& svd, const CompressOptions& opt,
                                      CompressDiagnostics* diagnostics = nullptr) {
    require(w.size() > 0, Errc::invalid_argument, "compress_layer: empty matrix");
    require(w.allFinite(), Errc::numeric, "compress_layer: non-finite input");
    require(opt.iterations >= 0, Errc::invalid_argument, "compress_layer: iterations must be >= 0");
    CompressedLayer layer;
    layer.d_out = w.rows();
    layer.d_in = w.cols();
    layer.rank = compressed_rank(w.rows(), w.cols(), opt.budget_bpp, opt.residual);
    layer.method = opt.method;
    layer.seed = opt.seed;
    layer.iterations =
        opt.method == Method::joint_itq ? static_cast<std::uint32_t>(opt.iterations) : 0;

    auto run_path = [&](const ThinSvd& s, const RotationMatrix* fixed, std::uint64_t seed) {
        const LatentFactors f = truncated_factorize(s, layer.rank);
        RotationMatrix rot =
            fixed ? *fixed : method_rotation(f, opt.method, seed, opt.iterations, opt.itq);
        const LatentFactors rotated = rotate_factors(f, rot);
        QuantizedPath p = quantize_path(rotated, opt.scale_policy, opt.scale_precision);
        if (diagnostics) {
            diagnostics->paths.push_back({distortion_profile(rotated.u_factor),
                                          distortion_profile(rotated.v_factor), rot,
                                          p.scales.floored_entries});
        }
        layer.paths.push_back(std::move(p));
        return rot;
    };

    const RotationMatrix first = run_path(svd, nullptr, opt.seed);
    if (opt.residual) {
        const Matrix error = w - reconstruct_path(layer.paths[0]);
        const ThinSvd esvd = thin_svd(error);
        if (opt.residual_seeding == ResidualSeeding::reuse) {
            run_path(esvd, &first, opt.seed);
        } else {
            run_path(esvd, nullptr, residual_seed(opt.seed));
        }
    }
    return layer;
}

inline CompressedLayer compress_layer(const Matrix& w, const CompressOptions& opt,
                                      CompressDiagnostics* diagnostics = nullptr) {
    require(w.size() > 0, Errc::invalid_argument, "compress_layer: empty matrix");
    require(w.allFinite(), Errc::numeric, "compress_layer: non-finite input");
    // Validate the budget before paying for the SVD.
    compressed_rank(w.rows(), w.cols(), opt.budget_bpp, opt.residual);
    return compress_layer(w, thin_svd(w), opt, diagnostics);
}

// ---------------------------------------------------------------------------
// Floating-point low-rank baseline

inline Matrix low_rank_approx(const ThinSvd& svd, Index rank) {
    require(rank >= 0 && rank <= svd.singular_values.size(), Errc::invalid_argument,
            "low_rank_approx: rank out of range");
    if (rank == 0) return Matrix::Zero(svd.u.rows(), svd.v.rows());
    return svd.u.leftCols(rank) * svd.singular_values.head(rank).asDiagonal() *
           svd.v.leftCols(rank).transpose();
}

/// Truncated-SVD approximation of total rank `rank`, built in `stages`
/// successive SVDs of the running residual (rank split as evenly as possible).
inline Matrix fp_lowrank_baseline(const Matrix& w, Index rank, int stages = 1) {
    require(stages >= 1, Errc::invalid_argument, "fp_lowrank_baseline: stages must be >= 1");
    require(rank >= 0 && rank <= std::min(w.rows(), w.cols()), Errc::invalid_argument,
            "fp_lowrank_baseline: rank out of range");
    Matrix approx = Matrix::Zero(w.rows(), w.cols());
    Index done = 0;
    for (int s = 0; s < stages; ++s) {
        const Index part = (rank - done) / (stages - s);
        if (part > 0) approx += low_rank_approx(thin_svd(w - approx), part);
        done += part;
    }
    return approx;
}

}  // namespace lb2
