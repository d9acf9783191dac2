// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lb2/core.hpp"

namespace lb2 {

using Bits = std::uint64_t;

struct LayerDims {
    std::uint64_t d_in = 0;
    std::uint64_t d_out = 0;

    std::uint64_t n_params() const { return d_in * d_out; }
    std::uint64_t sum() const { return d_in + d_out; }

    void validate() const {
        require(d_in >= 1 && d_out >= 1, Errc::invalid_argument,
                "LayerDims: dimensions must be positive");
    }
};

struct MemoryComponent {
    std::string label;
    Bits bits = 0;
};

struct MemoryReport {
    Bits total_bits = 0;
    std::uint64_t n_params = 0;
    std::vector<MemoryComponent> breakdown;

    double bpp() const {
        return n_params == 0 ? 0.0
                             : static_cast<double>(total_bits) / static_cast<double>(n_params);
    }

    void add(std::string label, Bits bits) {
        breakdown.push_back({std::move(label), bits});
        total_bits += bits;
    }
};

/// floor(budget_bpp * n_params), the integer bit allowance of a layer.
inline Bits budget_bits(const LayerDims& dims, double budget_bpp) {
    require(std::isfinite(budget_bpp) && budget_bpp > 0.0, Errc::invalid_argument,
            "budget: bpp must be positive");
    return static_cast<Bits>(std::floor(static_cast<long double>(budget_bpp) *
                                        static_cast<long double>(dims.n_params())));
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

/// LittleBit footprint with `paths` residual paths, FP16 scales:
///   paths * r * (d_in + d_out + 16) + 16 * paths * (d_in + d_out).
/// paths = 2 is the standard residual layout.
inline MemoryReport littlebit_bits(const LayerDims& dims, std::uint64_t rank, unsigned paths = 2) {
    dims.validate();
    require(paths == 1 || paths == 2, Errc::invalid_argument, "littlebit_bits: paths must be 1 or 2");
    MemoryReport m;
    m.n_params = dims.n_params();
    m.add("binary factors", paths * rank * dims.sum());
    m.add("io scales", 16ULL * paths * dims.sum());
    m.add("latent scales", 16ULL * paths * rank);
    return m;
}

/// Largest rank whose littlebit_bits fits within floor(budget_bpp * N).
/// Throws when the budget does not exceed the fixed scale cost.
inline std::uint64_t littlebit_rank_for_budget(const LayerDims& dims, double budget_bpp,
                                               unsigned paths = 2) {
    dims.validate();
    require(paths == 1 || paths == 2, Errc::invalid_argument,
            "littlebit_rank_for_budget: paths must be 1 or 2");
    const Bits total = budget_bits(dims, budget_bpp);
    const Bits fixed = 16ULL * paths * dims.sum();
    require(total > fixed, Errc::invalid_argument,
            "budget too small: does not exceed the fixed scale cost");
    return (total - fixed) / (paths * (dims.sum() + 16));
}

inline MemoryReport onebit_bits(const LayerDims& dims) {
    dims.validate();
    MemoryReport m;
    m.n_params = dims.n_params();
    m.add("binary weights", dims.n_params());
    m.add("row and column scales", 16ULL * dims.sum());
    return m;
}

/// 2-bit weights with one FP16 scale and zero-point per group of `group_size`
/// consecutive weights.
inline MemoryReport gptq_bits(const LayerDims& dims, std::uint64_t group_size = 128) {
    dims.validate();
    require(group_size >= 1, Errc::invalid_argument, "gptq_bits: group_size must be >= 1");
    MemoryReport m;
    m.n_params = dims.n_params();
    m.add("quantized weights", 2ULL * dims.n_params());
    m.add("scales and zero points", ceil_div(dims.n_params(), group_size) * 32ULL);
    return m;
}

struct SalientConfig {
    std::uint64_t block_k = 128;
    std::uint64_t salient_c = 128;
};

namespace detail {

inline void check_salient(const LayerDims& dims, const SalientConfig& cfg, const char* what) {
    dims.validate();
    require(cfg.block_k >= 1, Errc::invalid_argument, std::string(what) + ": block_k must be >= 1");
    require(cfg.salient_c <= dims.d_in, Errc::invalid_argument,
            std::string(what) + ": salient_c exceeds d_in");
}

}  // namespace detail

/// n = d_out, m = d_in.
inline MemoryReport billm_bits(const LayerDims& dims, const SalientConfig& cfg = {}) {
    detail::check_salient(dims, cfg, "billm_bits");
    const std::uint64_t n = dims.d_out, m = dims.d_in, c = cfg.salient_c;
    const std::uint64_t blocks = ceil_div(m, cfg.block_k);
    MemoryReport r;
    r.n_params = dims.n_params();
    r.add("salient weights", 2 * n * c);
    r.add("salient scales", blocks * 3 * n * 16);
    r.add("binary weights", n * (m - c));
    r.add("binary scales", blocks * 2 * n * 16 * 2);
    r.add("bitmaps", n * m + m);
    return r;
}

/// ARB row-column variant, n = d_out, m = d_in.
inline MemoryReport arb_bits(const LayerDims& dims, const SalientConfig& cfg = {}) {
    detail::check_salient(dims, cfg, "arb_bits");
    const std::uint64_t n = dims.d_out, m = dims.d_in, c = cfg.salient_c;
    const std::uint64_t blocks = ceil_div(m, cfg.block_k);
    MemoryReport r;
    r.n_params = dims.n_params();
    r.add("salient weights", 2 * n * c);
    r.add("salient scales", (blocks * 2 * n + 2 * c) * 16);
    r.add("binary weights", n * (m - c));
    r.add("binary scales", (blocks * n + (m - c)) * 16 * 2);
    r.add("bitmaps", n * m + m);
    return r;
}

struct Fp16Rank {
    std::uint64_t rank = 0;
    bool empty = true;  // budget below a single rank-1 component
};

/// Tiny-rank FP16 baseline: rank r stores two FP16 factors, 16 r (d_in + d_out) bits.
inline Fp16Rank fp16_rank_for_budget(const LayerDims& dims, double budget_bpp) {
    dims.validate();
    const std::uint64_t r = budget_bits(dims, budget_bpp) / (16ULL * dims.sum());
    return {r, r == 0};
}

inline MemoryReport fp16_lowrank_bits(const LayerDims& dims, std::uint64_t rank) {
    dims.validate();
    MemoryReport m;
    m.n_params = dims.n_params();
    m.add("fp16 factors", 16ULL * rank * dims.sum());
    return m;
}

inline MemoryReport fp16_dense_bits(const LayerDims& dims) {
    dims.validate();
    MemoryReport m;
    m.n_params = dims.n_params();
    m.add("fp16 weights", 16ULL * dims.n_params());
    return m;
}

// ---------------------------------------------------------------------------
// Model manifests

enum class BudgetMethod { littlebit, littlebit_single, onebit, gptq, billm, arb, fp16 };

inline std::string_view to_string(BudgetMethod m) {
    switch (m) {
        case BudgetMethod::littlebit: return "littlebit";
        case BudgetMethod::littlebit_single: return "littlebit1";
        case BudgetMethod::onebit: return "onebit";
        case BudgetMethod::gptq: return "gptq";
        case BudgetMethod::billm: return "billm";
        case BudgetMethod::arb: return "arb";
        case BudgetMethod::fp16: return "fp16";
    }
    return "?";
}

inline BudgetMethod parse_budget_method(std::string_view s) {
    for (auto m : {BudgetMethod::littlebit, BudgetMethod::littlebit_single, BudgetMethod::onebit,
                   BudgetMethod::gptq, BudgetMethod::billm, BudgetMethod::arb, BudgetMethod::fp16}) {
        if (s == to_string(m)) return m;
    }
    throw Error(Errc::invalid_argument, "unknown budget method '" + std::string(s) + "'");
}

enum class Scope { body, head };

struct LayerSpec {
    std::string name;
    LayerDims dims;
    BudgetMethod method = BudgetMethod::littlebit;
    std::optional<double> bpp;  // required for littlebit*, optional for fp16 (none = dense)
    Scope scope = Scope::body;
};

/// Non-linear parameters (norms, embeddings) stored at FP16.
struct ExtraParams {
    std::string name;
    std::uint64_t count = 0;
    Scope scope = Scope::head;
};

struct Manifest {
    std::vector<LayerSpec> layers;
    std::vector<ExtraParams> extras;
};

struct LayerReport {
    LayerSpec spec;
    std::optional<std::uint64_t> rank;
    MemoryReport memory;
};

struct ModelReport {
    std::vector<LayerReport> layers;
    MemoryReport body;
    MemoryReport total;

    static double gigabytes(Bits bits) { return static_cast<double>(bits) / 8.0 / 1e9; }
};

inline LayerReport layer_report(const LayerSpec& spec) {
    LayerReport out{spec, std::nullopt, {}};
    auto need_bpp = [&] {
        require(spec.bpp.has_value(), Errc::invalid_argument,
                "layer '" + spec.name + "': method requires a bpp value");
        return *spec.bpp;
    };
    switch (spec.method) {
        case BudgetMethod::littlebit:
        case BudgetMethod::littlebit_single: {
            const unsigned paths = spec.method == BudgetMethod::littlebit ? 2 : 1;
            const auto r = littlebit_rank_for_budget(spec.dims, need_bpp(), paths);
            out.rank = r;
            out.memory = littlebit_bits(spec.dims, r, paths);
            break;
        }
        case BudgetMethod::onebit: out.memory = onebit_bits(spec.dims); break;
        case BudgetMethod::gptq: out.memory = gptq_bits(spec.dims); break;
        case BudgetMethod::billm: out.memory = billm_bits(spec.dims); break;
        case BudgetMethod::arb: out.memory = arb_bits(spec.dims); break;
        case BudgetMethod::fp16:
            if (spec.bpp) {
                const auto r = fp16_rank_for_budget(spec.dims, *spec.bpp).rank;
                out.rank = r;
                out.memory = fp16_lowrank_bits(spec.dims, r);
            } else {
                out.memory = fp16_dense_bits(spec.dims);
            }
            break;
    }
    return out;
}

/// Per-layer reports plus body and total sums. Extras are charged 16 bits per
/// parameter.
inline ModelReport model_aggregate(const Manifest& manifest) {
    ModelReport rep;
    auto charge = [&](Scope scope, const std::string& label, Bits bits, std::uint64_t params) {
        rep.total.add(label, bits);
        rep.total.n_params += params;
        if (scope == Scope::body) {
            rep.body.add(label, bits);
            rep.body.n_params += params;
        }
    };
    for (const auto& spec : manifest.layers) {
        rep.layers.push_back(layer_report(spec));
        const auto& lr = rep.layers.back();
        charge(spec.scope, spec.name, lr.memory.total_bits, lr.memory.n_params);
    }
    for (const auto& e : manifest.extras) charge(e.scope, e.name, 16ULL * e.count, e.count);
    return rep;
}

namespace detail {

inline Scope parse_scope(const std::string& s, int line_no) {
    if (s == "body") return Scope::body;
    if (s == "head") return Scope::head;
    throw Error(Errc::invalid_argument,
                "manifest line " + std::to_string(line_no) + ": unknown scope '" + s + "'");
}

inline std::uint64_t parse_count(const std::string& s, int line_no, const char* field) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    require(pos == s.size() && !s.empty() && s[0] != '-', Errc::invalid_argument,
            "manifest line " + std::to_string(line_no) + ": bad " + field + " '" + s + "'");
    return v;
}

}  // namespace detail

/// Line format:
///   name d_out d_in method bpp [body|head]     ("-" for an absent bpp)
///   extra name count [body|head]
/// Blank lines and text after '#' are ignored.
inline Manifest parse_manifest(std::istream& in) {
    Manifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        const std::string where = "manifest line " + std::to_string(line_no);

        if (tok[0] == "extra") {
            require(tok.size() == 3 || tok.size() == 4, Errc::invalid_argument,
                    where + ": expected 'extra name count [scope]'");
            ExtraParams e{tok[1], detail::parse_count(tok[2], line_no, "count"), Scope::head};
            if (tok.size() == 4) e.scope = detail::parse_scope(tok[3], line_no);
            m.extras.push_back(e);
            continue;
        }
        require(tok.size() == 5 || tok.size() == 6, Errc::invalid_argument,
                where + ": expected 'name d_out d_in method bpp [scope]'");
        LayerSpec s;
        s.name = tok[0];
        s.dims.d_out = detail::parse_count(tok[1], line_no, "d_out");
        s.dims.d_in = detail::parse_count(tok[2], line_no, "d_in");
        require(s.dims.d_out > 0 && s.dims.d_in > 0, Errc::invalid_argument,
                where + ": dimensions must be positive");
        s.method = parse_budget_method(tok[3]);
        if (tok[4] != "-") {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(tok[4], &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            require(pos == tok[4].size() && std::isfinite(v) && v > 0.0, Errc::invalid_argument,
                    where + ": bad bpp '" + tok[4] + "'");
            s.bpp = v;
        }
        if (tok.size() == 6) s.scope = detail::parse_scope(tok[5], line_no);
        m.layers.push_back(std::move(s));
    }
    return m;
}

inline Manifest parse_manifest(const std::string& text) {
    std::istringstream in(text);
    return parse_manifest(in);
}

}  // namespace lb2
