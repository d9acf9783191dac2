// Copyright 2026 The lb2 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lb2/core.hpp"

namespace lb2 {

/// Power-law spectrum sigma_k = scale_c * k^(-gamma), k = 1..rank_d.
struct SpectrumModel {
    double gamma = 0.0;
    double scale_c = 1.0;
    Index rank_d = 1;

    void validate() const {
        require(std::isfinite(gamma) && gamma >= 0.0, Errc::invalid_argument,
                "SpectrumModel: gamma must be >= 0");
        require(std::isfinite(scale_c) && scale_c > 0.0, Errc::invalid_argument,
                "SpectrumModel: scale_c must be > 0");
        require(rank_d >= 1, Errc::invalid_argument, "SpectrumModel: rank_d must be >= 1");
    }

    double sigma(Index k) const {
        return scale_c * std::pow(static_cast<double>(k), -gamma);
    }

    Vector singular_values() const {
        Vector s(rank_d);
        for (Index k = 0; k < rank_d; ++k) s(k) = sigma(k + 1);
        return s;
    }
};

struct SynthOptions {
    // Spike strength of the left basis (see random_orthonormal); 0 = isotropic.
    double coherence = 0.0;
};

/// W = U diag(sigma) V^T with seeded orthonormal U (d_out x rank_d) and
/// V (d_in x rank_d). Singular values beyond rank_d are zero.
inline Matrix synth_power_law(Index d_out, Index d_in, const SpectrumModel& model,
                              std::uint64_t seed, const SynthOptions& options = {}) {
    model.validate();
    require(d_out >= 1 && d_in >= 1, Errc::dimension_mismatch,
            "synth_power_law: dimensions must be positive");
    require(model.rank_d <= std::min(d_out, d_in), Errc::dimension_mismatch,
            "synth_power_law: rank_d exceeds min(d_out, d_in)");
    const Matrix u = random_orthonormal(d_out, model.rank_d, splitmix64(seed), options.coherence);
    const Matrix v = random_orthonormal(d_in, model.rank_d, splitmix64(seed ^ 0x5bd1e995ULL));
    return u * model.singular_values().asDiagonal() * v.transpose();
}

/// Values below this multiple of eps * sigma_1 are treated as numerically zero.
inline constexpr double kSpectrumCutoff = 1e3;

/// Number of leading entries of a descending spectrum above the numerical-zero
/// cutoff.
inline std::size_t significant_count(std::span<const double> s) {
    if (s.empty() || !(s[0] > 0.0)) return 0;
    const double floor = kSpectrumCutoff * std::numeric_limits<double>::epsilon() * s[0];
    std::size_t n = 0;
    while (n < s.size() && s[n] >= floor) ++n;
    return n;
}

/// Decay rate from an OLS fit of log(sigma_k) against log(k); returns -slope.
inline double estimate_gamma(std::span<const double> singular_values) {
    require(singular_values.size() >= 8, Errc::invalid_argument,
            "estimate_gamma: need at least 8 singular values");
    for (std::size_t k = 0; k < singular_values.size(); ++k) {
        require(std::isfinite(singular_values[k]) && singular_values[k] > 0.0,
                Errc::invalid_argument, "estimate_gamma: singular values must be positive");
    }
    const std::size_t n = significant_count(singular_values);
    require(n >= 2, Errc::numeric, "estimate_gamma: spectrum is numerically rank-1");

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mean_x += std::log(static_cast<double>(k + 1));
        mean_y += std::log(singular_values[k]);
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = std::log(static_cast<double>(k + 1)) - mean_x;
        sxy += dx * (std::log(singular_values[k]) - mean_y);
        sxx += dx * dx;
    }
    return -(sxy / sxx);
}

inline double estimate_gamma(const Vector& singular_values) {
    return estimate_gamma(std::span<const double>(singular_values.data(),
                                                  static_cast<std::size_t>(singular_values.size())));
}

/// Lower integration limit for the quantization-cost integral. The continuous
/// spectrum integrates from k = 1 because the integral from 0 diverges for
/// gamma >= 1/2.
inline constexpr double kQuantCostLowerLimit = 1.0;

/// Closed form of the integral of C^2 x^(-2 gamma) over [a, b].
inline double power_law_energy(double gamma, double scale_c, double a, double b) {
    const double p = 1.0 - 2.0 * gamma;
    const double c2 = scale_c * scale_c;
    if (std::abs(p) < 1e-12) return c2 * std::log(b / a);
    return c2 * (std::pow(b, p) - std::pow(a, p)) / p;
}

struct BreakEvenReport {
    double tail_gain = 0.0;
    double quant_cost = 0.0;
    bool binary_wins = false;
    double gamma = 0.0;
    double lambda_coeff = 0.0;
    Index rank_a = 0;
    Index rank_b = 0;
};

/// Compares the energy recovered by expanding rank from rank_a to rank_b
/// against lambda_coeff times the energy retained at rank_b.
inline BreakEvenReport breakeven_predict(const SpectrumModel& model, double lambda_coeff,
                                         Index rank_a, Index rank_b) {
    model.validate();
    require(std::isfinite(lambda_coeff) && lambda_coeff >= 0.0 && lambda_coeff <= 1.0,
            Errc::invalid_argument, "breakeven_predict: lambda must lie in [0, 1]");
    require(1 <= rank_a && rank_a < rank_b && rank_b <= model.rank_d, Errc::invalid_argument,
            "breakeven_predict: need 1 <= rank_a < rank_b <= rank_d");
    BreakEvenReport r;
    r.gamma = model.gamma;
    r.lambda_coeff = lambda_coeff;
    r.rank_a = rank_a;
    r.rank_b = rank_b;
    const auto a = static_cast<double>(rank_a);
    const auto b = static_cast<double>(rank_b);
    r.tail_gain = power_law_energy(model.gamma, model.scale_c, a, b);
    r.quant_cost =
        lambda_coeff * power_law_energy(model.gamma, model.scale_c, kQuantCostLowerLimit, b);
    r.binary_wins = r.tail_gain > r.quant_cost;
    return r;
}

/// Critical decay rate where tail gain equals quantization cost, found by
/// bisection on [0, gamma_max]. nullopt when the sign does not change there.
inline std::optional<double> breakeven_gamma(double lambda_coeff, Index rank_a, Index rank_b,
                                             double gamma_max = 4.0) {
    auto margin = [&](double g) {
        SpectrumModel m{g, 1.0, rank_b};
        const auto r = breakeven_predict(m, lambda_coeff, rank_a, rank_b);
        return r.tail_gain - r.quant_cost;
    };
    double lo = 0.0, hi = gamma_max;
    double f_lo = margin(lo), f_hi = margin(hi);
    if (f_lo <= 0.0 || f_hi > 0.0) return std::nullopt;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (margin(mid) > 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace lb2
