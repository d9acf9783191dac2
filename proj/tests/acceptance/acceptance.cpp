// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance driver. Usage: lb2_acceptance [id ...]   (default: all)
// Prints one line per criterion and exits non-zero if any of them fails.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "lb2/lb2.hpp"

using namespace lb2;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Minimum of ||u - alpha sign(u)||^2 over a uniform alpha grid on [0, max|u|],
// refined by the parabola through the best grid point and its neighbours.
double grid_min_error(const Vector& u) {
    const Vector s = sign_matrix(u);
    auto err = [&](double a) { return (u - a * s).squaredNorm(); };
    const int n = 4000;
    const double hi = u.cwiseAbs().maxCoeff();
    const double step = hi / n;
    int best = 0;
    double best_err = err(0.0);
    for (int i = 1; i <= n; ++i) {
        const double e = err(i * step);
        if (e < best_err) {
            best_err = e;
            best = i;
        }
    }
    if (best == 0 || best == n) return best_err;
    const double a0 = (best - 1) * step, a1 = best * step, a2 = (best + 1) * step;
    const double e0 = err(a0), e1 = best_err, e2 = err(a2);
    const double denom = e0 - 2.0 * e1 + e2;
    if (denom <= 0.0) return best_err;
    const double a = a1 + 0.5 * step * (e0 - e2) / denom;
    return std::min(best_err, err(a));
}

Vector draw(Index r, int kind, Rng& rng) {
    Vector u(r);
    for (Index i = 0; i < r; ++i) {
        const double g = rng.normal();
        switch (kind) {
            case 0: u(i) = g; break;
            case 1: u(i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * -std::log(1.0 - rng.uniform()); break;
            case 2: u(i) = g * g * g; break;
            default: u(i) = (i == 0 ? 10.0 : 0.0) + 0.01 * g; break;
        }
    }
    return u;
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    Rng rng(101);
    const std::vector<Index> ranks{2, 4, 8, 16, 64};
    double worst = 0.0;
    int count = 0;
    for (int t = 0; t < 1000; ++t) {
        const Index r = ranks[static_cast<std::size_t>(t) % ranks.size()];
        const Vector u = draw(r, (t / 5) % 4, rng);
        const double oracle = grid_min_error(u) / u.squaredNorm();
        worst = std::max(worst, std::abs(local_distortion(u) - oracle));
        ++count;
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && secs < 5.0,
            fmt::format("{} vectors, max |lambda - grid oracle| = {:.3g} (tol 1e-6), {:.2f}s", count, worst,
                        secs)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    Rng rng(202);
    const Matrix g = gaussian_matrix(8192, 1024, rng);
    const Matrix rotated = g * random_orthogonal(1024, 7).entries;
    const DistortionProfile p = distortion_profile(rotated);
    const double secs = seconds_since(t0);
    const bool ok = p.mean_lambda >= 0.353 && p.mean_lambda <= 0.374 && secs < 30.0;
    return {ok, fmt::format("mean lambda = {:.5f} in [0.353, 0.374] (1 - 2/pi = {:.5f}), {:.1f}s", p.mean_lambda,
                            1.0 - 2.0 / std::numbers::pi, secs)};
}

Outcome criterion3() {
    const auto t0 = Clock::now();
    int monotone_runs = 0, dominated = 0, strict = 0;
    double worst_drop = 0.0, kurt = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix w = sweep_matrix(512, 0.25, 1000 + seed, 0.5);
        const LatentFactors f = truncated_factorize(w, 64);
        const Matrix z = stack_factors(f);
        kurt += kurtosis(z) / 20.0;
        const double tol = 1e-9 * z.norm();
        double prev = -1.0, first_lambda = 0.0, last_lambda = 0.0;
        bool monotone = true;
        joint_itq(f, 50, seed, {}, [&](const ItqStep& s) {
            const double l1 = s.projected.lpNorm<1>();
            if (s.iteration > 0 && l1 < prev - tol) monotone = false;
            if (s.iteration > 0) worst_drop = std::max(worst_drop, prev - l1);
            prev = l1;
            const double lambda = distortion_profile(s.projected).mean_lambda;
            if (s.iteration == 0) first_lambda = lambda;
            last_lambda = lambda;
        });
        monotone_runs += monotone;
        dominated += last_lambda <= first_lambda;
        strict += last_lambda < first_lambda;
    }
    const double secs = seconds_since(t0);
    const bool ok = monotone_runs == 20 && dominated == 20 && strict >= 18 && secs < 120.0;
    return {ok, fmt::format("monotone {}/20, lambda_itq <= lambda_rot {}/20, strictly lower {}/20 (need 18), "
                            "largest L1 drop {:.3g}, factor kurtosis {:.2f}, {:.1f}s",
                            monotone_runs, dominated, strict, std::max(worst_drop, 0.0), kurt, secs)};
}

Outcome criterion4() {
    const auto t0 = Clock::now();
    SweepConfig cfg;
    for (int i = 0; i <= 14; ++i) cfg.gammas.push_back(std::round((0.10 + 0.05 * i) * 1e12) / 1e12);
    cfg.size = 1024;
    cfg.bpps = {1.0};
    cfg.seeds = {0, 1, 2};
    cfg.iterations = 50;
    cfg.residual = false;
    const auto rows = run_sweep(cfg);
    const auto fp = mean_curve(rows, 1.0, "fp16");
    const auto st = mean_curve(rows, 1.0, "standard");
    const auto ro = mean_curve(rows, 1.0, "rotate");
    const auto it = mean_curve(rows, 1.0, "itq");
    int ordered = 0;
    for (const auto& [g, m] : st) ordered += it.at(g) <= ro.at(g) && ro.at(g) <= m;
    const auto xs = crossover_gamma(st, fp), xr = crossover_gamma(ro, fp), xi = crossover_gamma(it, fp);
    const double secs = seconds_since(t0);
    auto show = [](const std::optional<double>& x) { return x ? fmt::format("{:.3f}", *x) : std::string("none"); };
    const bool cross_ok = xs && xr && xi && *xs < *xr && *xr < *xi && *xs >= 0.28 && *xs <= 0.45 &&
                          *xi >= 0.42 && *xi <= 0.62;
    const bool ok = ordered == static_cast<int>(st.size()) && cross_ok && secs < 1200.0;
    return {ok, fmt::format("pointwise itq <= rotate <= standard at {}/{} gammas; crossovers standard={} "
                            "rotate={} itq={} (bands [0.28,0.45], [0.42,0.62]), {:.0f}s",
                            ordered, st.size(), show(xs), show(xr), show(xi), secs)};
}

Outcome criterion5() {
    const auto t0 = Clock::now();
    const std::vector<Method> methods{Method::standard, Method::random_rotation, Method::joint_itq};
    int wins[3] = {0, 0, 0};
    double gain[3] = {0, 0, 0};
    double worst_split = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix w = sweep_matrix(1024, 0.2, 500 + seed);
        const ThinSvd svd = thin_svd(w);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            CompressOptions opt;
            opt.budget_bpp = 1.0;
            opt.method = methods[m];
            opt.seed = seed;
            opt.residual = false;
            const double single = mse(w, decompress(compress_layer(w, svd, opt)));
            opt.residual = true;
            const double two = mse(w, decompress(compress_layer(w, svd, opt)));
            wins[m] += two < single;
            gain[m] += (1.0 - two / single) / 10.0;
        }
        const auto r = static_cast<Index>(fp16_rank_for_budget({1024, 1024}, 1.0).rank);
        const double one = mse(w, fp_lowrank_baseline(w, r, 1));
        const double split = mse(w, fp_lowrank_baseline(w, r, 2));
        worst_split = std::max(worst_split, std::abs(split - one) / one);
    }
    const double secs = seconds_since(t0);
    const bool ok = wins[0] == 10 && wins[1] == 10 && wins[2] == 10 && worst_split < 1e-6 && secs < 600.0;
    return {ok, fmt::format("two-path wins standard {}/10 rotate {}/10 itq {}/10 (mean gain {:.2f}% {:.2f}% "
                            "{:.2f}%); fp16 split rel diff {:.2g} (tol 1e-6), {:.0f}s",
                            wins[0], wins[1], wins[2], 100 * gain[0], 100 * gain[1], 100 * gain[2], worst_split,
                            secs)};
}

std::uint64_t brute_rank(const LayerDims& d, double bpp, unsigned paths) {
    const Bits allowance = budget_bits(d, bpp);
    std::uint64_t r = 0;
    while (littlebit_bits(d, r + 1, paths).total_bits <= allowance) ++r;
    return r;
}

Outcome criterion6() {
    const auto t0 = Clock::now();
    const LayerDims sq{4096, 4096};
    int failures = 0, checks = 0;
    auto expect = [&](bool c) {
        ++checks;
        failures += !c;
    };
    expect(littlebit_rank_for_budget(sq, 1.0) == 1006);
    expect(littlebit_rank_for_budget(sq, 0.1) == 86);
    expect(onebit_bits(sq).total_bits == 16'908'288ULL);
    for (std::uint64_t din : {128, 256, 4096, 11008 - 11008 % 128, 12800})
        for (std::uint64_t dout : {1, 77, 4096, 11008}) {
            const MemoryReport g = gptq_bits({din, dout});
            expect(g.total_bits * 4 == 9 * g.n_params);
        }
    for (std::uint64_t din : {64, 300, 1024, 4096, 11008})
        for (std::uint64_t dout : {64, 512, 4096, 11008})
            for (double bpp : {0.1, 0.25, 0.5, 0.75, 1.0, 1.5})
                for (unsigned paths : {1U, 2U}) {
                    const LayerDims d{din, dout};
                    if (budget_bits(d, bpp) <= 16ULL * paths * d.sum()) continue;
                    expect(littlebit_rank_for_budget(d, bpp, paths) == brute_rank(d, bpp, paths));
                }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 1.0,
            fmt::format("{}/{} exact matches (rank 1006, rank 86, onebit 16908288, gptq 2.25N, brute force), "
                        "{:.3f}s",
                        checks - failures, checks, secs)};
}

Outcome criterion7() {
    const auto t0 = Clock::now();
    Rng rng(707);
    const std::vector<Index> edges{1, 2, 63, 64, 65, 127, 128, 129, 191, 192, 193};
    auto pick = [&](int t, int salt) {
        if ((t + salt) % 3 == 0) return edges[rng.next() % edges.size()];
        return static_cast<Index>(1 + rng.next() % 260);
    };
    double worst_mv = 0.0, worst_fw = 0.0;
    ForwardScratch scratch;
    for (int t = 0; t < 500; ++t) {
        const Index d_out = pick(t, 0), d_in = pick(t, 1), r = pick(t, 2);
        const PackedBinaryFactor b = binarize(gaussian_matrix(d_out, d_in, rng));
        const Vector x = gaussian_matrix(d_in, 1, rng);
        const Vector oracle = b.to_dense() * x;
        worst_mv = std::max(worst_mv, (packed_matvec(b, x) - oracle).norm() / oracle.norm());

        CompressedLayer layer;
        layer.d_out = d_out;
        layer.d_in = d_in;
        layer.rank = r;
        for (int k = 0; k < 1 + t % 2; ++k) {
            QuantizedPath p{binarize(gaussian_matrix(d_out, r, rng)), binarize(gaussian_matrix(d_in, r, rng)), {}};
            p.scales.h_scale = gaussian_matrix(d_out, 1, rng).cwiseAbs().array() + 0.1;
            p.scales.l_scale = gaussian_matrix(r, 1, rng).cwiseAbs().array() + 0.1;
            p.scales.g_scale = gaussian_matrix(d_in, 1, rng).cwiseAbs().array() + 0.1;
            layer.paths.push_back(std::move(p));
        }
        scratch.bind(layer);
        const Vector dense = decompress(layer) * x;
        worst_fw = std::max(worst_fw, (layer_forward(layer, x, scratch) - dense).norm() / dense.norm());
    }
    const double secs = seconds_since(t0);
    return {worst_mv < 1e-5 && worst_fw < 1e-4 && secs < 30.0,
            fmt::format("500 cases, max rel err packed_matvec {:.2g} (tol 1e-5), layer_forward {:.2g} (tol 1e-4), "
                        "{:.2f}s",
                        worst_mv, worst_fw, secs)};
}

Outcome criterion8() {
    const auto t0 = Clock::now();
    const Matrix w = synth_power_law(4096, 512, {0.15, 1.0, 512}, 808, SynthOptions{0.5});
    const LatentFactors f = truncated_factorize(w, 512);
    const std::uint64_t seed = 3;
    const DistortionProfile st = distortion_profile(f.u_factor);
    const DistortionProfile ro = distortion_profile(rotate_factors(f, random_orthogonal(512, seed)).u_factor);
    const DistortionProfile it = distortion_profile(rotate_factors(f, joint_itq(f, 50, seed)).u_factor);
    const double drop = 1.0 - ro.max_lambda / st.max_lambda;
    const double secs = seconds_since(t0);
    const bool ok = drop >= 0.40 && it.mean_lambda < ro.mean_lambda && secs < 120.0;
    return {ok, fmt::format("max lambda {:.3f} -> {:.3f} -> {:.3f} (rotation drop {:.0f}%, need 40%); "
                            "mean lambda {:.3f} -> {:.3f} -> {:.3f}, {:.1f}s",
                            st.max_lambda, ro.max_lambda, it.max_lambda, 100 * drop, st.mean_lambda,
                            ro.mean_lambda, it.mean_lambda, secs)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8};
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
    if (ids.empty())
        for (int i = 1; i <= 9; ++i) ids.push_back(i);

    int failed = 0;
    for (int id : ids) {
        if (id == 9) {
            std::cout << "criterion 9: OUT OF SCOPE model-scale perplexity, zero-shot accuracy, QAT curves and "
                         "GPU speedups need LLM training and inference infrastructure; covered indirectly by 1-8\n";
            continue;
        }
        if (id < 1 || id > 8) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(id - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << fmt::format("criterion {}: {} {}\n", id, o.pass ? "PASS" : "FAIL", o.detail) << std::flush;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
