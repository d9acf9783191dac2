// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "lb2/lb2.hpp"

namespace lb2::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

inline int exit_code_for(Errc e) {
    switch (e) {
        case Errc::invalid_argument:
        case Errc::dimension_mismatch: return kUsage;
        case Errc::io:
        case Errc::corrupt: return kIo;
        case Errc::numeric: return kNumeric;
    }
    return kUsage;
}

/// "0.1,0.2,0.4" or "start:stop:step" (inclusive stop, rounding-tolerant).
inline std::vector<double> parse_number_list(const std::string& text) {
    std::vector<double> out;
    auto to_double = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        require(pos == s.size() && !s.empty() && std::isfinite(v), Errc::invalid_argument,
                "bad number '" + s + "' in list '" + text + "'");
        return v;
    };
    if (std::count(text.begin(), text.end(), ':') == 2) {
        const auto a = text.find(':'), b = text.rfind(':');
        const double start = to_double(text.substr(0, a));
        const double stop = to_double(text.substr(a + 1, b - a - 1));
        const double step = to_double(text.substr(b + 1));
        require(step > 0.0 && stop >= start, Errc::invalid_argument, "bad range '" + text + "'");
        const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
        // Round to 12 digits so 0.1 + 3 * 0.05 prints as 0.25.
        for (long k = 0; k <= n; ++k)
            out.push_back(std::round((start + static_cast<double>(k) * step) * 1e12) / 1e12);
        return out;
    }
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(to_double(item));
    require(!out.empty(), Errc::invalid_argument, "empty list");
    return out;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    require(!out.empty(), Errc::invalid_argument, "empty list");
    return out;
}

inline unsigned default_jobs() {
    if (const char* env = std::getenv("LB2_JOBS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    }
    return 1;
}

/// Writes `text` to `path`, or to `out` when path is empty or "-".
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    require(static_cast<bool>(f), Errc::io, "cannot open '" + path + "' for writing");
    f << text;
    require(static_cast<bool>(f), Errc::io, "error writing '" + path + "'");
}

struct SeedOption {
    std::uint64_t value = 0;
    bool given = false;

    /// Explicit seed, or a fresh one reported on `err` for reproducibility.
    std::uint64_t resolve(std::ostream& err) {
        if (!given) {
            std::random_device rd;
            value = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            given = true;
            fmt::print(err, "seed={}\n", value);
        }
        return value;
    }
};

inline void add_seed(CLI::App* cmd, SeedOption& seed) {
    cmd->add_option_function<std::uint64_t>(
        "--seed",
        [&seed](const std::uint64_t& v) {
            seed.value = v;
            seed.given = true;
        },
        "RNG seed (random and printed when omitted)");
}

inline std::string format_layer_summary(const CompressedLayer& layer, double mse_value,
                                        const CompressDiagnostics& diag) {
    const MemoryReport mem = layer.memory();
    std::string s = fmt::format("rank={} paths={} method={} bits={} bpp={:.6f} mse={:.9g}\n",
                                layer.rank, layer.paths.size(), to_string(layer.method),
                                mem.total_bits, mem.bpp(), mse_value);
    for (std::size_t k = 0; k < diag.paths.size(); ++k) {
        const auto& p = diag.paths[k];
        s += fmt::format(
            "path{} u_mean_lambda={:.6f} u_max_lambda={:.6f} v_mean_lambda={:.6f} "
            "v_max_lambda={:.6f} floored_scales={}\n",
            k + 1, p.u_profile.mean_lambda, p.u_profile.max_lambda, p.v_profile.mean_lambda,
            p.v_profile.max_lambda, p.floored_scales);
    }
    return s;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"lb2: sub-1-bit binary low-rank matrix compression"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    std::function<void()> action;

    // synth ------------------------------------------------------------------
    struct {
        Index d_out = 1024, d_in = 1024, rank = 0;
        double gamma = 0.3, scale_c = 1.0, coherence = 0.0;
        std::string out, dtype = "f32";
        SeedOption seed;
    } synth;
    auto* c_synth = app.add_subcommand("synth", "Write a power-law-spectrum test matrix");
    c_synth->add_option("--d-out", synth.d_out, "Rows")->check(CLI::PositiveNumber);
    c_synth->add_option("--d-in", synth.d_in, "Columns")->check(CLI::PositiveNumber);
    c_synth->add_option("--gamma", synth.gamma, "Spectral decay rate")->check(CLI::NonNegativeNumber);
    c_synth->add_option("--scale-c", synth.scale_c, "Leading singular value");
    c_synth->add_option("--rank", synth.rank, "Modeled singular values (default min dim)");
    c_synth->add_option("--coherence", synth.coherence, "Spike strength of the left basis");
    c_synth->add_option("--dtype", synth.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    c_synth->add_option("--out,-o", synth.out, "Output LB2M file")->required();
    add_seed(c_synth, synth.seed);
    c_synth->callback([&] {
        action = [&] {
            const Index rank = synth.rank > 0 ? synth.rank : std::min(synth.d_out, synth.d_in);
            const Matrix w = synth_power_law(synth.d_out, synth.d_in,
                                             SpectrumModel{synth.gamma, synth.scale_c, rank},
                                             synth.seed.resolve(err), SynthOptions{synth.coherence});
            save_matrix(synth.out, w, synth.dtype == "f64" ? DType::f64 : DType::f32);
            fmt::print(out, "wrote {} ({}x{}, gamma={})\n", synth.out, w.rows(), w.cols(), synth.gamma);
        };
    });

    // compress ---------------------------------------------------------------
    struct {
        std::string input, out, method = "itq", seeding = "fresh", policy = "floor";
        double bpp = 1.0;
        bool residual = false;
        int iters = 50;
        SeedOption seed;
    } comp;
    auto* c_comp = app.add_subcommand("compress", "Compress an LB2M matrix into an LB2C layer");
    c_comp->add_option("input", comp.input, "Input LB2M file")->required();
    c_comp->add_option("--bpp", comp.bpp, "Bit budget per parameter")->required();
    c_comp->add_option("--method", comp.method, "standard|rotate|itq")
        ->check(CLI::IsMember({"standard", "rotate", "itq"}));
    c_comp->add_flag("--residual", comp.residual, "Add a residual binary path");
    c_comp->add_option("--iters", comp.iters, "ITQ iterations")->check(CLI::NonNegativeNumber);
    c_comp->add_option("--residual-seeding", comp.seeding, "fresh|reuse")
        ->check(CLI::IsMember({"fresh", "reuse"}));
    c_comp->add_option("--scale-policy", comp.policy, "floor|reject")
        ->check(CLI::IsMember({"floor", "reject"}));
    c_comp->add_option("--out,-o", comp.out, "Output LB2C file")->required();
    add_seed(c_comp, comp.seed);
    c_comp->callback([&] {
        action = [&] {
            const Matrix w = load_matrix(comp.input);
            CompressOptions opt;
            opt.budget_bpp = comp.bpp;
            opt.method = parse_method(comp.method);
            opt.residual = comp.residual;
            opt.iterations = comp.iters;
            opt.residual_seeding =
                comp.seeding == "reuse" ? ResidualSeeding::reuse : ResidualSeeding::fresh;
            opt.scale_policy = comp.policy == "reject" ? ScalePolicy::reject : ScalePolicy::floor;
            opt.seed = comp.seed.resolve(err);
            CompressDiagnostics diag;
            const CompressedLayer layer = compress_layer(w, opt, &diag);
            const Bytes bytes = serialize_layer(layer);
            write_file(comp.out, bytes);
            // Report the error of what was actually stored (f32 scales).
            const double e = mse(w, decompress(deserialize_layer(bytes)));
            out << format_layer_summary(layer, e, diag);
            for (const auto& p : diag.paths)
                if (p.floored_scales > 0)
                    fmt::print(err, "warning: {} scale entries floored at {:g}\n", p.floored_scales,
                               kScaleFloor);
        };
    });

    // decompress -------------------------------------------------------------
    struct {
        std::string input, out, dtype = "f32";
    } dec;
    auto* c_dec = app.add_subcommand("decompress", "Expand an LB2C layer into an LB2M matrix");
    c_dec->add_option("input", dec.input, "Input LB2C file")->required();
    c_dec->add_option("--out,-o", dec.out, "Output LB2M file")->required();
    c_dec->add_option("--dtype", dec.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
    c_dec->callback([&] {
        action = [&] {
            const Matrix w = decompress(load_layer(dec.input));
            save_matrix(dec.out, w, dec.dtype == "f64" ? DType::f64 : DType::f32);
            fmt::print(out, "wrote {} ({}x{})\n", dec.out, w.rows(), w.cols());
        };
    });

    // sweep-breakeven --------------------------------------------------------
    struct {
        std::string gammas = "0.1:0.8:0.05", bpps = "1.0", methods = "fp16,standard,rotate,itq",
                    seeds = "0", out;
        Index size = 1024;
        int iters = 50;
        bool residual = false;
        double coherence = 0.0;
        unsigned jobs = default_jobs();
    } sw;
    auto* c_sw = app.add_subcommand("sweep-breakeven", "MSE versus spectral decay rate");
    c_sw->add_option("--gammas", sw.gammas, "List or start:stop:step");
    c_sw->add_option("--size", sw.size, "Square matrix size")->check(CLI::PositiveNumber);
    c_sw->add_option("--bpp", sw.bpps, "Budget list");
    c_sw->add_option("--methods", sw.methods, "Subset of fp16,standard,rotate,itq");
    c_sw->add_option("--seeds", sw.seeds, "Seed list");
    c_sw->add_option("--iters", sw.iters, "ITQ iterations")->check(CLI::NonNegativeNumber);
    c_sw->add_flag("--residual", sw.residual, "Two-path binary layers");
    c_sw->add_option("--coherence", sw.coherence, "Spike strength of the left basis");
    c_sw->add_option("--jobs,-j", sw.jobs, "Worker threads (default $LB2_JOBS or 1)")
        ->check(CLI::PositiveNumber);
    c_sw->add_option("--out,-o", sw.out, "CSV output (default stdout)");
    c_sw->callback([&] {
        action = [&] {
            SweepConfig cfg;
            cfg.gammas = parse_number_list(sw.gammas);
            cfg.size = sw.size;
            cfg.bpps = parse_number_list(sw.bpps);
            cfg.methods = split_list(sw.methods);
            cfg.seeds.clear();
            for (double s : parse_number_list(sw.seeds)) {
                require(s >= 0.0 && s == std::floor(s), Errc::invalid_argument, "seeds must be integers");
                cfg.seeds.push_back(static_cast<std::uint64_t>(s));
            }
            cfg.iterations = sw.iters;
            cfg.residual = sw.residual;
            cfg.coherence = sw.coherence;
            cfg.jobs = sw.jobs;
            std::string csv = SweepRow::csv_header() + "\n";
            for (const auto& row : run_sweep(cfg)) csv += row.csv_row() + "\n";
            emit(sw.out, csv, out);
        };
    });

    // itq-trace --------------------------------------------------------------
    struct {
        std::string input, out;
        Index rank = 64;
        int iters = 50;
        SeedOption seed;
    } tr;
    auto* c_tr = app.add_subcommand("itq-trace", "Per-iteration Joint-ITQ statistics");
    c_tr->add_option("input", tr.input, "Input LB2M file")->required();
    c_tr->add_option("--rank", tr.rank, "Latent rank")->check(CLI::PositiveNumber);
    c_tr->add_option("--iters", tr.iters, "Iterations")->check(CLI::NonNegativeNumber);
    c_tr->add_option("--out,-o", tr.out, "CSV output (default stdout)");
    add_seed(c_tr, tr.seed);
    c_tr->callback([&] {
        action = [&] {
            const Matrix w = load_matrix(tr.input);
            std::string csv = ItqTraceRow::csv_header() + "\n";
            for (const auto& row : itq_trace(w, tr.rank, tr.iters, tr.seed.resolve(err)))
                csv += row.csv_row() + "\n";
            emit(tr.out, csv, out);
        };
    });

    // budget -----------------------------------------------------------------
    struct {
        std::string manifest, format = "table";
    } bud;
    auto* c_bud = app.add_subcommand("budget", "Memory report for a layer manifest");
    c_bud->add_option("--manifest,-m", bud.manifest, "Manifest file")->required();
    c_bud->add_option("--format", bud.format, "table|csv")->check(CLI::IsMember({"table", "csv"}));
    c_bud->callback([&] {
        action = [&] {
            std::ifstream in(bud.manifest);
            require(static_cast<bool>(in), Errc::io, "cannot open '" + bud.manifest + "'");
            const ModelReport rep = model_aggregate(parse_manifest(in));
            auto rank_str = [](const LayerReport& l) {
                return l.rank ? std::to_string(*l.rank) : std::string("-");
            };
            if (bud.format == "csv") {
                out << "name,d_out,d_in,method,rank,bits,bpp\n";
                for (const auto& l : rep.layers)
                    fmt::print(out, "{},{},{},{},{},{},{:.9g}\n", l.spec.name, l.spec.dims.d_out,
                               l.spec.dims.d_in, to_string(l.spec.method), rank_str(l),
                               l.memory.total_bits, l.memory.bpp());
                fmt::print(out, "body,,,,,{},{:.9g}\n", rep.body.total_bits, rep.body.bpp());
                fmt::print(out, "total,,,,,{},{:.9g}\n", rep.total.total_bits, rep.total.bpp());
            } else {
                fmt::print(out, "{:<24} {:>7} {:>7} {:>11} {:>6} {:>14} {:>9}\n", "name", "d_out",
                           "d_in", "method", "rank", "bits", "bpp");
                for (const auto& l : rep.layers)
                    fmt::print(out, "{:<24} {:>7} {:>7} {:>11} {:>6} {:>14} {:>9.4f}\n", l.spec.name,
                               l.spec.dims.d_out, l.spec.dims.d_in, to_string(l.spec.method),
                               rank_str(l), l.memory.total_bits, l.memory.bpp());
                fmt::print(out, "body:  {} bits, {:.4f} GB, {:.4f} bpp\n", rep.body.total_bits,
                           ModelReport::gigabytes(rep.body.total_bits), rep.body.bpp());
                fmt::print(out, "total: {} bits, {:.4f} GB, {:.4f} bpp\n", rep.total.total_bits,
                           ModelReport::gigabytes(rep.total.total_bits), rep.total.bpp());
            }
        };
    });

    // analyze ----------------------------------------------------------------
    struct {
        std::string input, out;
        Index rank = 0, top_k = 8;
    } an;
    auto* c_an = app.add_subcommand("analyze", "Spectral and distortion report for a matrix");
    c_an->add_option("input", an.input, "Input LB2M file")->required();
    c_an->add_option("--rank", an.rank, "Rank for factor statistics (default min(64, min dim))");
    c_an->add_option("--top-k", an.top_k, "Singular values to list")->check(CLI::NonNegativeNumber);
    c_an->add_option("--out,-o", an.out, "CSV output (default stdout)");
    c_an->callback([&] {
        action = [&] {
            const Matrix w = load_matrix(an.input);
            const Index rank = an.rank > 0 ? an.rank : std::min<Index>(64, std::min(w.rows(), w.cols()));
            emit(an.out, analyze_matrix(w, rank, an.top_k).to_csv(), out);
        };
    });

    // matvec-bench -----------------------------------------------------------
    struct {
        std::string input, out;
        int trials = 100;
    } mb;
    auto* c_mb = app.add_subcommand("matvec-bench", "Time the packed forward pass");
    c_mb->add_option("input", mb.input, "Input LB2C file")->required();
    c_mb->add_option("--trials", mb.trials, "Repetitions")->check(CLI::PositiveNumber);
    c_mb->add_option("--out,-o", mb.out, "CSV output (default stdout)");
    c_mb->callback([&] {
        action = [&] {
            const BenchReport r = bench_forward(load_layer(mb.input), mb.trials);
            emit(mb.out, BenchReport::csv_header() + "\n" + r.csv_row() + "\n", out);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (action) action();
        return kOk;
    } catch (const Error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kNumeric;
    }
}

}  // namespace lb2::cli
