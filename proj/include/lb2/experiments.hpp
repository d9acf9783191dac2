// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "lb2/budget.hpp"
#include "lb2/factorize.hpp"
#include "lb2/metrics.hpp"
#include "lb2/quantize.hpp"
#include "lb2/spectral.hpp"

namespace lb2 {

/// Runs task(0..count-1) on up to `jobs` threads. The first exception is
/// rethrown after all workers stop.
inline void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& task) {
    jobs = std::max(1U, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Break-even sweep

/// "fp16" is the floating-point tiny-rank baseline; others name a binary Method.
inline constexpr std::string_view kFp16Method = "fp16";

struct SweepConfig {
    std::vector<double> gammas;
    Index size = 1024;
    std::vector<double> bpps{1.0};
    std::vector<std::string> methods{"fp16", "standard", "rotate", "itq"};
    std::vector<std::uint64_t> seeds{0};
    bool residual = false;
    int iterations = 50;
    double coherence = 0.0;
    unsigned jobs = 1;
};

struct SweepRow {
    double gamma = 0.0;
    double bpp = 0.0;
    std::string method;
    double mse = 0.0;
    Index rank = 0;
    std::uint64_t seed = 0;

    static std::string csv_header() { return "gamma,bpp,method,mse,rank,seed"; }

    std::string csv_row() const {
        return fmt::format("{:.9g},{:.9g},{},{:.9g},{},{}", gamma, bpp, method, mse, rank, seed);
    }
};

inline Matrix sweep_matrix(Index size, double gamma, std::uint64_t seed, double coherence = 0.0) {
    return synth_power_law(size, size, SpectrumModel{gamma, 1.0, size}, seed, SynthOptions{coherence});
}

/// Evaluates one method at one budget for a matrix with known SVD.
inline SweepRow sweep_cell(const Matrix& w, const ThinSvd& svd, double gamma, double bpp,
                           const std::string& method, std::uint64_t seed, bool residual,
                           int iterations) {
    SweepRow row{gamma, bpp, method, 0.0, 0, seed};
    if (method == kFp16Method) {
        const LayerDims dims{static_cast<std::uint64_t>(w.cols()), static_cast<std::uint64_t>(w.rows())};
        const auto r = std::min<Index>(static_cast<Index>(fp16_rank_for_budget(dims, bpp).rank),
                                       std::min(w.rows(), w.cols()));
        row.rank = r;
        row.mse = mse(w, low_rank_approx(svd, r));
        return row;
    }
    CompressOptions opt;
    opt.budget_bpp = bpp;
    opt.method = parse_method(method);
    opt.residual = residual;
    opt.seed = seed;
    opt.iterations = iterations;
    const CompressedLayer layer = compress_layer(w, svd, opt);
    row.rank = layer.rank;
    row.mse = mse(w, decompress(layer));
    return row;
}

namespace detail {

inline int method_order(const std::string& m) {
    static const std::vector<std::string> order{"fp16", "standard", "rotate", "itq"};
    const auto it = std::find(order.begin(), order.end(), m);
    return static_cast<int>(it - order.begin());
}

}  // namespace detail

/// One row per (gamma, bpp, method, seed), sorted in that key order regardless
/// of completion order.
inline std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
    require(!cfg.gammas.empty() && !cfg.bpps.empty() && !cfg.methods.empty() && !cfg.seeds.empty(),
            Errc::invalid_argument, "sweep: gammas, bpps, methods and seeds must be non-empty");
    require(cfg.size >= 8, Errc::invalid_argument, "sweep: size must be >= 8");
    for (const auto& m : cfg.methods)
        if (m != kFp16Method) parse_method(m);

    std::vector<std::pair<double, std::uint64_t>> cells;
    for (double g : cfg.gammas)
        for (auto s : cfg.seeds) cells.emplace_back(g, s);
    std::vector<std::vector<SweepRow>> out(cells.size());

    parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
        const auto [gamma, seed] = cells[i];
        const Matrix w = sweep_matrix(cfg.size, gamma, seed, cfg.coherence);
        const ThinSvd svd = thin_svd(w);
        for (double bpp : cfg.bpps)
            for (const auto& m : cfg.methods)
                out[i].push_back(sweep_cell(w, svd, gamma, bpp, m, seed, cfg.residual, cfg.iterations));
    });

    std::vector<SweepRow> rows;
    for (auto& v : out) rows.insert(rows.end(), v.begin(), v.end());
    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return std::make_tuple(a.gamma, a.bpp, detail::method_order(a.method), a.method, a.seed) <
               std::make_tuple(b.gamma, b.bpp, detail::method_order(b.method), b.method, b.seed);
    });
    return rows;
}

/// Mean MSE over seeds, keyed by gamma, for one (bpp, method).
inline std::map<double, double> mean_curve(const std::vector<SweepRow>& rows, double bpp,
                                           const std::string& method) {
    std::map<double, std::pair<double, int>> acc;
    for (const auto& r : rows) {
        if (r.bpp != bpp || r.method != method) continue;
        auto& a = acc[r.gamma];
        a.first += r.mse;
        a.second += 1;
    }
    std::map<double, double> curve;
    for (const auto& [g, a] : acc) curve[g] = a.first / a.second;
    return curve;
}

/// First gamma where `curve` rises above `baseline`, linearly interpolated in
/// log(curve / baseline) between grid points. nullopt when it never does or
/// is already above at the first point.
inline std::optional<double> crossover_gamma(const std::map<double, double>& curve,
                                             const std::map<double, double>& baseline) {
    std::optional<std::pair<double, double>> prev;
    for (const auto& [g, m] : curve) {
        const auto it = baseline.find(g);
        if (it == baseline.end()) continue;
        const double d = std::log(m / it->second);
        if (d > 0.0) {
            if (!prev) return std::nullopt;
            const auto [g0, d0] = *prev;
            return g0 + (g - g0) * (-d0) / (d - d0);
        }
        prev = {g, d};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// ITQ trace

struct ItqTraceRow {
    int iter = 0;
    double l1_objective = 0.0;
    double mean_lambda = 0.0;
    double max_lambda = 0.0;
    double wall_ms = 0.0;

    static std::string csv_header() { return "iter,l1_objective,mean_lambda,max_lambda,wall_ms"; }

    std::string csv_row() const {
        return fmt::format("{},{:.12g},{:.9g},{:.9g},{:.3f}", iter, l1_objective, mean_lambda,
                           max_lambda, wall_ms);
    }
};

/// Per-iteration ||Z R||_1 and row distortion of Z R for the stacked factors.
/// wall_ms is cumulative optimizer time, excluding the statistics themselves.
inline std::vector<ItqTraceRow> itq_trace(const LatentFactors& factors, int iterations,
                                          std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    std::vector<ItqTraceRow> rows;
    double elapsed_ms = 0.0;
    auto resume = clock::now();
    joint_itq(factors, iterations, seed, {}, [&](const ItqStep& step) {
        elapsed_ms += std::chrono::duration<double, std::milli>(clock::now() - resume).count();
        const DistortionProfile p = distortion_profile(step.projected);
        rows.push_back({step.iteration, step.projected.template lpNorm<1>(), p.mean_lambda,
                        p.max_lambda, elapsed_ms});
        resume = clock::now();
    });
    return rows;
}

inline std::vector<ItqTraceRow> itq_trace(const Matrix& w, Index rank, int iterations,
                                          std::uint64_t seed) {
    return itq_trace(truncated_factorize(w, rank), iterations, seed);
}

// ---------------------------------------------------------------------------
// Matrix analysis

struct AnalysisReport {
    Index d_out = 0;
    Index d_in = 0;
    Index rank = 0;
    double gamma_hat = 0.0;
    std::vector<double> top_singular_values;
    double coherence_u = 0.0;  // of U[:, :rank]
    double coherence_v = 0.0;  // of V[:, :rank]
    double mean_lambda = 0.0;  // rows of the truncated u factor
    double max_lambda = 0.0;
    Index argmax_row = 0;
    double kurtosis = 0.0;

    /// key,value lines; values at 9 significant digits.
    std::vector<std::pair<std::string, std::string>> fields() const {
        auto num = [](double v) { return fmt::format("{:.9g}", v); };
        std::vector<std::pair<std::string, std::string>> f{
            {"d_out", std::to_string(d_out)},
            {"d_in", std::to_string(d_in)},
            {"rank", std::to_string(rank)},
            {"gamma_hat", num(gamma_hat)},
            {"coherence_u", num(coherence_u)},
            {"coherence_v", num(coherence_v)},
            {"mean_lambda", num(mean_lambda)},
            {"max_lambda", num(max_lambda)},
            {"argmax_row", std::to_string(argmax_row)},
            {"kurtosis", num(kurtosis)},
        };
        for (std::size_t k = 0; k < top_singular_values.size(); ++k)
            f.emplace_back(fmt::format("sigma_{}", k + 1), num(top_singular_values[k]));
        return f;
    }

    std::string to_csv() const {
        std::string s = "key,value\n";
        for (const auto& [k, v] : fields()) s += k + "," + v + "\n";
        return s;
    }
};

inline AnalysisReport analyze_matrix(const Matrix& w, Index rank, Index top_k = 8) {
    require(rank >= 1 && rank <= std::min(w.rows(), w.cols()), Errc::invalid_argument,
            "analyze: rank out of range");
    const ThinSvd svd = thin_svd(w);
    AnalysisReport rep;
    rep.d_out = w.rows();
    rep.d_in = w.cols();
    rep.rank = rank;
    rep.gamma_hat = estimate_gamma(svd.singular_values);
    for (Index k = 0; k < std::min<Index>(top_k, svd.singular_values.size()); ++k)
        rep.top_singular_values.push_back(svd.singular_values(k));
    rep.coherence_u = coherence(svd.u.leftCols(rank));
    rep.coherence_v = coherence(svd.v.leftCols(rank));
    const DistortionProfile p = distortion_profile(truncated_factorize(svd, rank).u_factor);
    rep.mean_lambda = p.mean_lambda;
    rep.max_lambda = p.max_lambda;
    rep.argmax_row = p.argmax_row;
    rep.kurtosis = kurtosis(w);
    return rep;
}

}  // namespace lb2
