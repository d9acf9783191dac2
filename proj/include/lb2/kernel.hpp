// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lb2/core.hpp"
#include "lb2/quantize.hpp"

namespace lb2 {

/// y = B x for a packed +-1 matrix B, computed per row as
/// 2 * (sum of x_j over set bits) - sum(x).
inline void packed_matvec(const PackedBinaryFactor& b, const double* x, double* y) {
    double total = 0.0;
    for (Index j = 0; j < b.cols(); ++j) total += x[j];
    const Index wpr = b.words_per_row();
    for (Index i = 0; i < b.rows(); ++i) {
        const std::uint64_t* row = b.row_words(i);
        double acc = 0.0;
        for (Index w = 0; w < wpr; ++w) {
            std::uint64_t bits = row[w];
            const double* xs = x + w * 64;
            while (bits) {
                acc += xs[std::countr_zero(bits)];
                bits &= bits - 1;
            }
        }
        y[i] = 2.0 * acc - total;
    }
}

inline Vector packed_matvec(const PackedBinaryFactor& b, const Vector& x) {
    require(x.size() == b.cols(), Errc::dimension_mismatch, "packed_matvec: length mismatch");
    Vector y(b.rows());
    packed_matvec(b, x.data(), y.data());
    return y;
}

/// y = B^T z, length cols.
inline void packed_matvec_transposed(const PackedBinaryFactor& b, const double* z, double* y) {
    double total = 0.0;
    for (Index j = 0; j < b.cols(); ++j) y[j] = 0.0;
    const Index wpr = b.words_per_row();
    for (Index i = 0; i < b.rows(); ++i) {
        const double zi = z[i];
        total += zi;
        const std::uint64_t* row = b.row_words(i);
        for (Index w = 0; w < wpr; ++w) {
            std::uint64_t bits = row[w];
            double* ys = y + w * 64;
            while (bits) {
                ys[std::countr_zero(bits)] += zi;
                bits &= bits - 1;
            }
        }
    }
    for (Index j = 0; j < b.cols(); ++j) y[j] = 2.0 * y[j] - total;
}

inline Vector packed_matvec_transposed(const PackedBinaryFactor& b, const Vector& z) {
    require(z.size() == b.rows(), Errc::dimension_mismatch,
            "packed_matvec_transposed: length mismatch");
    Vector y(b.cols());
    packed_matvec_transposed(b, z.data(), y.data());
    return y;
}

/// Intermediate buffers for layer_forward. One owner at a time.
struct ForwardScratch {
    Vector input;   // d_in
    Vector latent;  // r
    Vector output;  // d_out

    ForwardScratch() = default;
    explicit ForwardScratch(const CompressedLayer& layer) { bind(layer); }

    void bind(const CompressedLayer& layer) {
        input.resize(layer.d_in);
        latent.resize(layer.rank);
        output.resize(layer.d_out);
    }

    bool fits(const CompressedLayer& layer) const {
        return input.size() == layer.d_in && latent.size() == layer.rank &&
               output.size() == layer.d_out;
    }
};

/// Sum over paths of h * (U_b (l * (V_b^T (g * x)))).
inline void layer_forward(const CompressedLayer& layer, const Vector& x, ForwardScratch& scratch,
                          Vector& y) {
    require(x.size() == layer.d_in, Errc::dimension_mismatch, "layer_forward: length mismatch");
    require(scratch.fits(layer), Errc::dimension_mismatch, "layer_forward: scratch not bound");
    y.setZero(layer.d_out);
    for (const auto& p : layer.paths) {
        scratch.input = p.scales.g_scale.cwiseProduct(x);
        packed_matvec_transposed(p.v_binary, scratch.input.data(), scratch.latent.data());
        scratch.latent.array() *= p.scales.l_scale.array();
        packed_matvec(p.u_binary, scratch.latent.data(), scratch.output.data());
        y.array() += p.scales.h_scale.array() * scratch.output.array();
    }
}

inline Vector layer_forward(const CompressedLayer& layer, const Vector& x, ForwardScratch& scratch) {
    Vector y;
    layer_forward(layer, x, scratch, y);
    return y;
}

inline Vector layer_forward(const CompressedLayer& layer, const Vector& x) {
    ForwardScratch scratch(layer);
    return layer_forward(layer, x, scratch);
}

struct BenchReport {
    Index d_out = 0;
    Index d_in = 0;
    Index rank = 0;
    std::size_t paths = 0;
    int trials = 0;
    double median_ns = 0.0;
    double p95_ns = 0.0;
    double dense_median_ns = 0.0;
    std::uint64_t dense_flops = 0;  // 2 d_out d_in
    std::uint64_t packed_ops = 0;   // 2 r (d_in + d_out) add-equivalents per path

    static std::string csv_header() { return "dims,rank,paths,median_ns,p95_ns,dense_median_ns"; }

    std::string csv_row() const {
        return fmt::format("{}x{},{},{},{:.0f},{:.0f},{:.0f}", d_out, d_in, rank, paths, median_ns,
                           p95_ns, dense_median_ns);
    }
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
}

}  // namespace detail

/// Times layer_forward against a dense matvec with the decompressed weights.
inline BenchReport bench_forward(const CompressedLayer& layer, int trials, std::uint64_t seed = 0) {
    require(trials >= 1, Errc::invalid_argument, "bench_forward: trials must be >= 1");
    layer.validate();
    Rng rng(seed);
    Vector x(layer.d_in);
    for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    const Matrix dense = decompress(layer);
    ForwardScratch scratch(layer);
    Vector y(layer.d_out), yd(layer.d_out);

    using clock = std::chrono::steady_clock;
    auto ns_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::nano>(clock::now() - t0).count();
    };
    std::vector<double> packed_ns, dense_ns;
    for (int t = 0; t < trials; ++t) {
        auto t0 = clock::now();
        layer_forward(layer, x, scratch, y);
        packed_ns.push_back(ns_since(t0));
        t0 = clock::now();
        yd.noalias() = dense * x;
        dense_ns.push_back(ns_since(t0));
    }
    BenchReport r;
    r.d_out = layer.d_out;
    r.d_in = layer.d_in;
    r.rank = layer.rank;
    r.paths = layer.paths.size();
    r.trials = trials;
    r.median_ns = detail::percentile(packed_ns, 0.5);
    r.p95_ns = detail::percentile(packed_ns, 0.95);
    r.dense_median_ns = detail::percentile(dense_ns, 0.5);
    r.dense_flops = 2ULL * static_cast<std::uint64_t>(layer.d_out * layer.d_in);
    r.packed_ops = 2ULL * r.paths * static_cast<std::uint64_t>(layer.rank * (layer.d_in + layer.d_out));
    return r;
}

}  // namespace lb2
