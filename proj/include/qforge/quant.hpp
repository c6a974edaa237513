// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qforge/common.hpp"
#include "qforge/tensor.hpp"

namespace qforge {

enum class QuantScheme { asymmetric, symmetric };

// Affine map x ~ scale * (code - zero_point) onto signed b-bit codes.
struct QuantParams {
    int bits = 8;
    double scale = 1.0;
    std::int32_t zero_point = 0;
    QuantScheme scheme = QuantScheme::asymmetric;

    std::int32_t qmin() const { return -(std::int32_t(1) << (bits - 1)); }
    std::int32_t qmax() const { return (std::int32_t(1) << (bits - 1)) - 1; }

    double dequant_min() const { return scale * (qmin() - zero_point); }
    double dequant_max() const { return scale * (qmax() - zero_point); }
};

// S = (beta - alpha) / (2^b - 1)
// Z = clamp(round((2^(b-1) - 1) - beta / S), -2^(b-1), 2^(b-1) - 1)
inline QuantParams qparams_asymmetric(double alpha, double beta, int bits) {
    if (bits < 2 || bits > 8) throw ContractError("qparams: bits must be in [2,8]");
    if (!(beta > alpha))
        throw ContractError("qparams_asymmetric: degenerate range [" + std::to_string(alpha) +
                            ", " + std::to_string(beta) + "]");
    QuantParams qp;
    qp.bits = bits;
    qp.scheme = QuantScheme::asymmetric;
    qp.scale = (beta - alpha) / static_cast<double>((std::int64_t(1) << bits) - 1);
    const double z = static_cast<double>(qp.qmax()) - beta / qp.scale;
    qp.zero_point =
        static_cast<std::int32_t>(clamp_val<std::int64_t>(round_half_away(z), qp.qmin(), qp.qmax()));
    return qp;
}

// S = max(|alpha|, |beta|) / (2^(b-1) - 1), Z = 0.
inline QuantParams qparams_symmetric(double alpha, double beta, int bits) {
    if (bits < 2 || bits > 8) throw ContractError("qparams: bits must be in [2,8]");
    const double m = std::max(std::fabs(alpha), std::fabs(beta));
    if (m <= 0.0) throw ContractError("qparams_symmetric: all-zero range");
    QuantParams qp;
    qp.bits = bits;
    qp.scheme = QuantScheme::symmetric;
    qp.scale = m / static_cast<double>(qp.qmax());
    qp.zero_point = 0;
    return qp;
}

inline std::int32_t quantize_value(double x, const QuantParams& qp) {
    const std::int64_t q = round_half_away(x / qp.scale) + qp.zero_point;
    return static_cast<std::int32_t>(clamp_val<std::int64_t>(q, qp.qmin(), qp.qmax()));
}

inline double dequantize_value(std::int64_t q, const QuantParams& qp) {
    return qp.scale * static_cast<double>(q - qp.zero_point);
}

inline std::vector<std::int32_t> quantize(const std::vector<double>& x, const QuantParams& qp) {
    std::vector<std::int32_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize_value(x[i], qp);
    return out;
}

inline std::vector<double> dequantize(const std::vector<std::int32_t>& q, const QuantParams& qp) {
    std::vector<double> out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out[i] = dequantize_value(q[i], qp);
    return out;
}

// Running [alpha, beta] of observed values. Two update rules:
//  - min_max: the range only ever widens (default). The straight-through
//    gradient mask never clips values the network actually produced, which
//    QAT convergence depends on.
//  - ema: exponential moving average of batch extremes (momentum 0.01).
//    Tracks the mean window extreme, so distribution tails clip; kept for
//    sensitivity experiments.
// Frozen observers stop updating; export requires frozen ones.
enum class ObserverRule { min_max, ema };

struct RangeObserver {
    double alpha = 0.0;
    double beta = 0.0;
    bool seen = false;
    bool frozen = false;
    ObserverRule rule = ObserverRule::min_max;
    double momentum = 0.01;  // ema rule only

    void update(const std::vector<double>& values) {
        if (frozen || values.empty()) return;
        double lo = values[0], hi = values[0];
        for (double v : values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!seen) {
            alpha = lo;
            beta = hi;
            seen = true;
        } else if (rule == ObserverRule::min_max) {
            alpha = std::min(alpha, lo);
            beta = std::max(beta, hi);
        } else {
            alpha = (1.0 - momentum) * alpha + momentum * lo;
            beta = (1.0 - momentum) * beta + momentum * hi;
        }
    }

    void update(const Tensor& t) { update(t.data()); }

    // Read-out policy: the range is first extended to contain zero, so the
    // zero point of Eq.-style parameters never clamps and zero stays exactly
    // representable; a still-degenerate range is widened instead of erroring,
    // since early epochs can produce constant activations.
    QuantParams qparams(int bits, QuantScheme scheme = QuantScheme::asymmetric) const {
        if (!seen) throw StateError("RangeObserver: qparams before any observation");
        double a = std::min(alpha, 0.0), b = std::max(beta, 0.0);
        if (!(b - a > 1e-12)) {
            a -= 1e-6;
            b += 1e-6;
        }
        return scheme == QuantScheme::asymmetric ? qparams_asymmetric(a, b, bits)
                                                 : qparams_symmetric(a, b, bits);
    }
};

// Requantization-flavored conversion: round half up (floor(x/S + 0.5)),
// the float twin of the integer add-before-shift rule. Used wherever a
// QAT boundary mirrors an integer requantization rather than a fresh
// real-to-integer conversion, so simulator and integer path share one
// rounding pair.
inline std::int32_t quantize_value_half_up(double x, const QuantParams& qp) {
    const std::int64_t q =
        static_cast<std::int64_t>(std::floor(x / qp.scale + 0.5)) + qp.zero_point;
    return static_cast<std::int32_t>(clamp_val<std::int64_t>(q, qp.qmin(), qp.qmax()));
}

enum class FqRounding { half_away, half_up };

// Fake quantization: forward is dequantize(quantize(x)); backward is the
// straight-through estimator, passing the gradient where x lies inside the
// representable interval and zeroing it outside. half_away follows the
// real-to-integer conversion rule; half_up mirrors integer requantization.
inline Tensor fake_quantize(Graph& g, Tensor x, const QuantParams& qp,
                            FqRounding rounding = FqRounding::half_away) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    if (rounding == FqRounding::half_away) {
        for (std::size_t i = 0; i < x.size(); ++i)
            out.data()[i] = dequantize_value(quantize_value(x.data()[i], qp), qp);
    } else {
        for (std::size_t i = 0; i < x.size(); ++i)
            out.data()[i] = dequantize_value(quantize_value_half_up(x.data()[i], qp), qp);
    }
    const double lo = qp.dequant_min(), hi = qp.dequant_max();
    detail::prepare(g, out, {x});
    g.record([x, out, lo, hi]() mutable {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x.data()[i] >= lo && x.data()[i] <= hi) x.grad()[i] += out.grad()[i];
    });
    return out;
}

// Fixed-point format of the integer softmax, shared by the QAT simulator,
// the integer runtime and the RTL generator: 2^x is evaluated through a
// 2^kSoftmaxFracBits-entry lookup table and every output row sums to
// 2^kSoftmaxFracBits up to integer-division remainders.
inline constexpr int kSoftmaxFracBits = 8;

// LUT[r] = round(2^(r / 2^f) * 2^f), the fractional-power table.
inline std::vector<std::int32_t> build_exp2_lut(int frac_bits) {
    const std::size_t entries = std::size_t(1) << frac_bits;
    std::vector<std::int32_t> lut(entries);
    for (std::size_t r = 0; r < entries; ++r)
        lut[r] = static_cast<std::int32_t>(round_half_away(
            std::ldexp(std::exp2(static_cast<double>(r) / static_cast<double>(entries)),
                       frac_bits)));
    return lut;
}

inline const std::vector<std::int32_t>& shared_exp2_lut() {
    static const std::vector<std::int32_t> lut = build_exp2_lut(kSoftmaxFracBits);
    return lut;
}

// Core of the fixed-point softmax row: p holds round(score * log2(e) * 2^f)
// values; out receives probabilities in [0, 2^f] that sum to 2^f up to
// integer-division remainders. Exact integer arithmetic, no floats.
inline void softmax_fixed_row(const std::int64_t* p, std::size_t n, int frac_bits,
                              const std::vector<std::int32_t>& lut, std::int32_t* out) {
    const std::int64_t frac_mask = (std::int64_t(1) << frac_bits) - 1;
    std::int64_t pmax = p[0];
    for (std::size_t c = 1; c < n; ++c) pmax = std::max(pmax, p[c]);
    std::int64_t sum = 0;
    std::vector<std::int64_t> e(n);
    for (std::size_t c = 0; c < n; ++c) {
        const std::int64_t t = p[c] - pmax;            // <= 0
        const std::int64_t ipart = t >> frac_bits;     // arithmetic shift: floor
        const std::int64_t frac = t & frac_mask;
        const std::int64_t down = -ipart;
        e[c] = down < 31 ? (lut[static_cast<std::size_t>(frac)] >> down) : 0;
        sum += e[c];
    }
    for (std::size_t c = 0; c < n; ++c)
        out[c] = static_cast<std::int32_t>((e[c] << frac_bits) / sum);
}


// Integer rescaling plan: multiplier/shift pair approximating a positive
// real ratio, M = round(ratio * 2^s) with M in [2^14, 2^31) when the cap
// s <= 40 allows it. Application is
//   y = ((acc * M + 2^(s-1)) >> s) + Z_out, clamped to the output range,
// i.e. round-half-up via add-before-arithmetic-shift.
struct RequantPlan {
    std::int64_t multiplier = 0;
    int shift = 0;
    QuantParams out;

    std::int32_t apply(std::int64_t acc) const {
        std::int64_t v = acc * multiplier;
        if (shift > 0) v += std::int64_t(1) << (shift - 1);
        v >>= shift;
        v += out.zero_point;
        return static_cast<std::int32_t>(clamp_val<std::int64_t>(v, out.qmin(), out.qmax()));
    }

    // Same arithmetic without the clamp/zero-point, for fixed-point
    // intermediates (softmax input conversion).
    std::int64_t apply_raw(std::int64_t acc) const {
        std::int64_t v = acc * multiplier;
        if (shift > 0) v += std::int64_t(1) << (shift - 1);
        return v >> shift;
    }

    double encoded_ratio() const {
        return static_cast<double>(multiplier) / std::ldexp(1.0, shift);
    }
};

inline RequantPlan plan_requant(double real_ratio, const QuantParams& out_qp) {
    if (!(real_ratio > 0.0)) throw ContractError("plan_requant: ratio must be positive");
    constexpr int kMaxShift = 40;
    constexpr std::int64_t kMaxMult = (std::int64_t(1) << 31) - 1;

    // Largest shift (<= cap) whose multiplier still fits 31 bits. That
    // normalizes M into [2^30, 2^31) for all but tiny ratios, which keeps
    // |applied - round(acc*ratio)| <= 1 across the 32-bit accumulator range.
    int s = kMaxShift;
    std::int64_t m = round_half_away(std::ldexp(real_ratio, s));
    while (m > kMaxMult && s > 0) {
        --s;
        m = round_half_away(std::ldexp(real_ratio, s));
    }
    if (m > kMaxMult)
        throw ContractError("plan_requant: ratio too large to encode: " +
                            std::to_string(real_ratio));
    if (m == 0)
        throw ContractError("plan_requant: ratio underflows at shift cap: " +
                            std::to_string(real_ratio));
    RequantPlan plan;
    plan.multiplier = m;
    plan.shift = s;
    plan.out = out_qp;
    return plan;
}


// Conversion plan from score codes to the fixed-point exponent argument:
// p = round(score * log2(e) * 2^f), with log2(e) folded into the ratio.
inline RequantPlan softmax_input_plan(const QuantParams& scores_qp) {
    QuantParams fixed;
    fixed.bits = 8;  // marker only; the plan is applied raw
    fixed.scale = std::ldexp(1.0, -kSoftmaxFracBits);
    fixed.zero_point = 0;
    return plan_requant(
        scores_qp.scale * std::log2(std::exp(1.0)) * std::ldexp(1.0, kSoftmaxFracBits), fixed);
}

// QAT twin of the integer softmax: the forward pass runs the exact integer
// pipeline on the (already fake-quantized) scores and decodes the
// fixed-point probabilities; the backward pass passes gradients through
// the softmax Jacobian evaluated at the decoded probabilities.
inline Tensor simulated_fixed_softmax(Graph& g, Tensor scores, const QuantParams& scores_qp) {
    const std::size_t rows = scores.rows(), cols = scores.cols();
    const auto& lut = shared_exp2_lut();
    const RequantPlan in_plan = softmax_input_plan(scores_qp);
    Tensor out = Tensor::zeros(rows, cols);
    std::vector<std::int64_t> p(cols);
    std::vector<std::int32_t> probs(cols);
    const double inv_two_f = std::ldexp(1.0, -kSoftmaxFracBits);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::int64_t code = quantize_value(scores.at(r, c), scores_qp);
            p[c] = in_plan.apply_raw(code - scores_qp.zero_point);
        }
        softmax_fixed_row(p.data(), cols, kSoftmaxFracBits, lut, probs.data());
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = probs[c] * inv_two_f;
    }
    detail::prepare(g, out, {scores});
    g.record([scores, out]() mutable {
        for (std::size_t r = 0; r < scores.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < scores.cols(); ++c)
                dot += out.grad_at(r, c) * out.at(r, c);
            for (std::size_t c = 0; c < scores.cols(); ++c)
                scores.grad_at(r, c) += out.at(r, c) * (out.grad_at(r, c) - dot);
        }
    });
    return out;
}

}  // namespace qforge
