// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "lb2/budget.hpp"
#include "lb2/quantize.hpp"
#include "lb2/spectral.hpp"

using namespace lb2;
using Catch::Approx;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_matrix(rows, cols, rng);
}

Vector positive(Index n, Rng& rng) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = 0.25 + rng.uniform();
    return v;
}

QuantizedPath random_path(Index d_out, Index d_in, Index r, std::uint64_t seed) {
    Rng rng(seed);
    QuantizedPath p{binarize(gaussian_matrix(d_out, r, rng)), binarize(gaussian_matrix(d_in, r, rng)), {}};
    p.scales.h_scale = positive(d_out, rng);
    p.scales.l_scale = positive(r, rng);
    p.scales.g_scale = positive(d_in, rng);
    return p;
}

}  // namespace

TEST_CASE("packed layout and padding", "[quantize]") {
    const PackedBinaryFactor p = binarize(Matrix::Ones(3, 70));
    CHECK(p.words_per_row() == 2);
    CHECK(p.words().size() == 6);
    for (Index i = 0; i < 3; ++i) {
        CHECK(p.row_words(i)[0] == ~std::uint64_t{0});
        CHECK(p.row_words(i)[1] == 0x3FULL);
    }
    const PackedBinaryFactor n = p.negated();
    for (auto w : n.words()) CHECK(w == 0);
    CHECK(n.negated() == p);
}

TEST_CASE("binarize matches the dense sign oracle", "[quantize]") {
    const Matrix m = gaussian(5, 7, 3);
    const PackedBinaryFactor p = binarize(m);
    CHECK((p.to_dense().array() == sign_matrix(m).array()).all());
    CHECK(binarize(p.to_dense()) == p);
    // sign(0) = +1
    CHECK(binarize(Matrix::Zero(2, 2)).to_dense() == Matrix::Ones(2, 2));
}

TEST_CASE("negating a factor complements its payload bits", "[quantize]") {
    for (Index cols : {1, 63, 64, 65, 130}) {
        const Matrix m = gaussian(4, cols, static_cast<std::uint64_t>(cols));
        CHECK(binarize(Matrix(-m)) == binarize(m).negated());
    }
}

TEST_CASE("from_words validates length and padding", "[quantize]") {
    CHECK_THROWS_AS(PackedBinaryFactor::from_words(2, 10, {0}), Error);
    CHECK_THROWS_AS(PackedBinaryFactor::from_words(1, 10, {1ULL << 12}), Error);
    const auto ok = PackedBinaryFactor::from_words(1, 10, {0x3FFULL});
    CHECK(ok.to_dense() == Matrix::Ones(1, 10));
    CHECK_NOTHROW(PackedBinaryFactor::from_words(1, 64, {~0ULL}));
}

TEST_CASE("reconstruct_path small cases", "[quantize]") {
    QuantizedPath ones{binarize(Matrix::Ones(2, 2)), binarize(Matrix::Ones(2, 2)),
                       {Vector::Ones(2), Vector::Ones(2), Vector::Ones(2), 0}};
    CHECK(reconstruct_path(ones) == Matrix::Constant(2, 2, 2.0));

    QuantizedPath r1{binarize(Matrix::Ones(2, 1)), binarize(Matrix::Ones(2, 1)), {}};
    r1.scales.h_scale = Vector{{2.0, 1.0}};
    r1.scales.l_scale = Vector{{3.0}};
    r1.scales.g_scale = Vector{{1.0, 4.0}};
    Matrix expected(2, 2);
    expected << 6, 24, 3, 12;
    CHECK(reconstruct_path(r1) == expected);
}

TEST_CASE("packed and dense reconstructions agree exactly", "[quantize]") {
    Rng shapes(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const Index d_out = 1 + static_cast<Index>(shapes.uniform() * 64);
        const Index d_in = 1 + static_cast<Index>(shapes.uniform() * 130);
        const Index r = 1 + static_cast<Index>(shapes.uniform() * 130);
        const QuantizedPath p = random_path(d_out, d_in, r, 1000 + static_cast<std::uint64_t>(trial));
        const Matrix ub = p.u_binary.to_dense(), vb = p.v_binary.to_dense();
        const Matrix oracle = (p.scales.h_scale.asDiagonal() * ub * p.scales.l_scale.asDiagonal()) *
                              (p.scales.g_scale.asDiagonal() * vb).transpose();
        CHECK((reconstruct_path(p).array() == oracle.array()).all());
    }
}

TEST_CASE("reconstruct_path rejects inconsistent shapes", "[quantize]") {
    QuantizedPath p = random_path(4, 5, 3, 1);
    p.scales.l_scale = Vector::Ones(2);
    CHECK_THROWS_AS(reconstruct_path(p), Error);
}

TEST_CASE("method parsing", "[quantize]") {
    CHECK(parse_method("standard") == Method::standard);
    CHECK(parse_method("rotate") == Method::random_rotation);
    CHECK(parse_method("itq") == Method::joint_itq);
    CHECK_THROWS_AS(parse_method("ITQ"), Error);
    for (auto m : {Method::standard, Method::random_rotation, Method::joint_itq})
        CHECK(parse_method(to_string(m)) == m);
}

TEST_CASE("model-matching input is reproduced by the standard method", "[quantize]") {
    // W = diag(h) B1 diag(l) B2^T diag(g), with B1, B2 having orthogonal
    // columns so that the SVD factors are exact scaled sign matrices.
    const Index n = 16, r = 4;
    Matrix hadamard(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) hadamard(i, j) = (std::popcount(static_cast<unsigned>(i & j)) % 2) ? -1.0 : 1.0;
    const Matrix b1 = hadamard.leftCols(r);
    const Matrix b2 = hadamard.middleCols(r, r);
    Vector l(r);
    l << 8.0, 4.0, 2.0, 1.0;
    const Matrix w = 0.7 * b1 * l.asDiagonal() * b2.transpose();

    CompressOptions opt;
    opt.method = Method::standard;
    opt.budget_bpp = static_cast<double>(littlebit_bits({n, n}, r, 1).total_bits) / (n * n);
    const CompressedLayer layer = compress_layer(w, opt);
    REQUIRE(layer.rank == r);
    CHECK((decompress(layer) - w).norm() < 1e-6 * w.norm());
}

TEST_CASE("compress_layer honors the bit budget and picks the maximal rank", "[quantize]") {
    const Matrix w = synth_power_law(96, 80, {0.3, 1.0, 80}, 5);
    for (bool residual : {false, true}) {
        for (double bpp : {1.0, 1.7, 3.0}) {
            CompressOptions opt;
            opt.budget_bpp = bpp;
            opt.residual = residual;
            opt.iterations = 5;
            const CompressedLayer layer = compress_layer(w, opt);
            const unsigned paths = residual ? 2 : 1;
            CHECK(layer.paths.size() == paths);
            const LayerDims dims{80, 96};
            const Bits allowance = budget_bits(dims, bpp);
            CHECK(layer.memory().total_bits <= allowance);
            const auto fit = littlebit_rank_for_budget(dims, bpp, paths);
            CHECK(layer.rank == std::min<Index>(static_cast<Index>(fit), 80));
            CHECK(littlebit_bits(dims, fit + 1, paths).total_bits > allowance);
        }
    }
}

TEST_CASE("compress_layer rejects budgets below rank one", "[quantize]") {
    const Matrix w = gaussian(64, 64, 1);
    CompressOptions opt;
    opt.budget_bpp = 0.01;
    CHECK_THROWS_AS(compress_layer(w, opt), Error);
    opt.budget_bpp = 1.0;
    opt.iterations = -1;
    CHECK_THROWS_AS(compress_layer(w, opt), Error);
}

TEST_CASE("iterations are recorded only for ITQ", "[quantize]") {
    const Matrix w = synth_power_law(64, 64, {0.2, 1.0, 64}, 2);
    CompressOptions opt;
    opt.iterations = 7;
    opt.method = Method::random_rotation;
    CHECK(compress_layer(w, opt).iterations == 0);
    opt.method = Method::joint_itq;
    CHECK(compress_layer(w, opt).iterations == 7);
}

TEST_CASE("ITQ with zero iterations equals the random rotation", "[quantize]") {
    const Matrix w = synth_power_law(64, 48, {0.25, 1.0, 48}, 3);
    CompressOptions opt;
    opt.seed = 11;
    opt.method = Method::random_rotation;
    const Matrix a = decompress(compress_layer(w, opt));
    opt.method = Method::joint_itq;
    opt.iterations = 0;
    const Matrix b = decompress(compress_layer(w, opt));
    CHECK((a.array() == b.array()).all());
}

TEST_CASE("method ordering on a heavy-tailed matrix", "[quantize]") {
    const Matrix w = synth_power_law(256, 256, {0.2, 1.0, 256}, 1);
    const ThinSvd svd = thin_svd(w);
    CompressOptions opt;
    opt.seed = 1;
    double previous = 1e300;
    for (auto m : {Method::standard, Method::random_rotation, Method::joint_itq}) {
        opt.method = m;
        const double e = mse(w, decompress(compress_layer(w, svd, opt)));
        CHECK(e <= previous);
        previous = e;
    }
}

TEST_CASE("residual path lowers the error at equal budget", "[quantize]") {
    // Below roughly 400x400 the second path's fixed scale cost outweighs the
    // gain for ITQ, so this runs at 512.
    const Matrix w = synth_power_law(512, 512, {0.2, 1.0, 512}, 4);
    const ThinSvd svd = thin_svd(w);
    for (auto m : {Method::standard, Method::random_rotation, Method::joint_itq}) {
        CompressOptions opt;
        opt.method = m;
        opt.seed = 2;
        const double single = mse(w, decompress(compress_layer(w, svd, opt)));
        opt.residual = true;
        const double two = mse(w, decompress(compress_layer(w, svd, opt)));
        CHECK(two < single);
    }
}

TEST_CASE("residual seeding modes", "[quantize]") {
    const Matrix w = synth_power_law(128, 128, {0.2, 1.0, 128}, 8);
    CompressOptions opt;
    opt.residual = true;
    opt.iterations = 5;
    CompressDiagnostics fresh, reuse;
    compress_layer(w, opt, &fresh);
    opt.residual_seeding = ResidualSeeding::reuse;
    compress_layer(w, opt, &reuse);
    REQUIRE(fresh.paths.size() == 2);
    REQUIRE(reuse.paths.size() == 2);
    CHECK((reuse.paths[1].rotation.entries - reuse.paths[0].rotation.entries).norm() == 0.0);
    CHECK((fresh.paths[1].rotation.entries - fresh.paths[0].rotation.entries).norm() > 1e-6);
}

TEST_CASE("decompress sums paths", "[quantize]") {
    CompressedLayer layer;
    layer.d_out = 9;
    layer.d_in = 70;
    layer.rank = 5;
    layer.paths = {random_path(9, 70, 5, 1)};
    CHECK((decompress(layer).array() == reconstruct_path(layer.paths[0]).array()).all());

    QuantizedPath floor_path = random_path(9, 70, 5, 2);
    floor_path.scales.h_scale.setConstant(kScaleFloor);
    floor_path.scales.l_scale.setConstant(kScaleFloor);
    floor_path.scales.g_scale.setConstant(kScaleFloor);
    layer.paths.push_back(floor_path);
    CHECK((decompress(layer) - reconstruct_path(layer.paths[0])).cwiseAbs().maxCoeff() < 1e-30);

    layer.paths.push_back(floor_path);
    CHECK_THROWS_AS(decompress(layer), Error);
}

TEST_CASE("reduced-precision scale modes", "[quantize]") {
    const Matrix w = synth_power_law(64, 64, {0.3, 1.0, 64}, 3);
    CompressOptions opt;
    opt.scale_precision = ScalePrecision::f16;
    const CompressedLayer layer = compress_layer(w, opt);
    for (Index i = 0; i < layer.paths[0].scales.h_scale.size(); ++i) {
        const double v = layer.paths[0].scales.h_scale(i);
        CHECK(static_cast<double>(static_cast<float>(Eigen::half(static_cast<float>(v)))) == v);
    }
    opt.scale_precision = ScalePrecision::full;
    const double full = mse(w, decompress(compress_layer(w, opt)));
    CHECK(mse(w, decompress(layer)) == Approx(full).epsilon(0.05));
}

TEST_CASE("floating-point baseline gains nothing from splitting", "[quantize]") {
    const Matrix w = synth_power_law(128, 128, {0.2, 1.0, 128}, 6);
    const double one = mse(w, fp_lowrank_baseline(w, 24, 1));
    const double two = mse(w, fp_lowrank_baseline(w, 24, 2));
    CHECK(std::abs(one - two) < 1e-6 * one);
    CHECK(mse(w, fp_lowrank_baseline(w, 0, 1)) == Approx(w.squaredNorm() / w.size()));
}
