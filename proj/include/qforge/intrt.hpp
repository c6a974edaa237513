// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qforge/common.hpp"
#include "qforge/model.hpp"
#include "qforge/quant.hpp"

namespace qforge {

// b-bit (or fixed-point) codes with their quantization parameters. Values
// are stored as int32; transient accumulators are int64 inside the ops.
struct IntTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> data;
    QuantParams qp;

    static IntTensor filled(std::size_t r, std::size_t c, std::int32_t v, QuantParams qp_) {
        IntTensor t;
        t.rows = r;
        t.cols = c;
        t.data.assign(r * c, v);
        t.qp = std::move(qp_);
        return t;
    }

    std::int32_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::int32_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
};

inline IntTensor quantize_tensor(const Tensor& x, const QuantParams& qp) {
    IntTensor t;
    t.rows = x.rows();
    t.cols = x.cols();
    t.qp = qp;
    t.data = quantize(x.data(), qp);
    return t;
}

inline Tensor dequantize_tensor(const IntTensor& x) {
    Tensor t = Tensor::zeros(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        t.data()[i] = dequantize_value(x.data[i], x.qp);
    return t;
}

// Code-space conversion between two affine scales:
// q_out = plan((q_in - Z_in)) where plan encodes S_in/S_out and adds Z_out.
struct CodeRescale {
    QuantParams in_qp;
    RequantPlan plan;

    std::int32_t apply(std::int32_t q) const {
        return plan.apply(static_cast<std::int64_t>(q) - in_qp.zero_point);
    }
};

// Quantized linear layer: b-bit weights, 32-bit symmetric bias at scale
// S_in * S_w, and the accumulator requantization plan.
struct IntLinear {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    QuantParams w_qp;
    std::vector<std::int32_t> weights;  // row-major in_dim x out_dim
    std::vector<std::int32_t> bias;     // out_dim
    RequantPlan plan;
};

// Frozen BatchNorm compiled to per-channel multiply / shift / offset:
//   y = clamp(((q - Z_in) * M + offset + 2^(s-1)) >> s) + Z_out.
// M may be negative (gamma sign); the affine term is folded into the
// pre-shift offset so the whole channel transform rounds exactly once.
// The shift is fixed at kBnShift, which keeps M and offset within int32
// for the generated RTL.
inline constexpr int kBnShift = 20;

struct FoldedBatchNorm {
    QuantParams in_qp;
    QuantParams out_qp;
    std::vector<std::int32_t> multiplier;
    std::vector<std::int32_t> shift;
    std::vector<std::int32_t> offset;  // pre-shift additive constant
};

// Integer softmax constants: code -> fixed-point conversion (log2(e) and
// 2^f folded into the ratio), the 2^f-entry 2^x fraction table, and the
// fixed-point -> code recoding plan.
struct IntSoftmax {
    int frac_bits = kSoftmaxFracBits;
    QuantParams in_qp;
    RequantPlan in_plan;   // (q - Z_in) -> p ~ round(score * log2(e) * 2^f)
    std::vector<std::int32_t> exp2_lut;  // round(2^(r/2^f) * 2^f)
    RequantPlan out_plan;  // row-normalized [0, 2^f] -> attn codes
};

struct IntModel {
    ModelConfig config;
    QuantParams input_qp;
    QuantParams output_qp;

    IntLinear embed;  // consumes input codes, produces embed codes
    QuantParams emb_qp;
    std::vector<std::int32_t> pe_codes;  // n*d at emb_qp

    IntLinear q_proj, k_proj, v_proj;
    QuantParams q_qp, k_qp, v_qp;
    RequantPlan scores_plan;  // acc(S_q*S_k), 1/sqrt(d) folded into the ratio
    QuantParams scores_qp;
    IntSoftmax softmax;
    QuantParams attn_qp;
    RequantPlan mix_plan;  // acc(S_attn*S_v)
    QuantParams mix_qp;
    IntLinear attn_out;
    QuantParams attn_out_qp;

    CodeRescale res1_a, res1_b;
    QuantParams res1_qp;
    FoldedBatchNorm bn1;
    QuantParams bn1_qp;

    IntLinear ffn_up;
    QuantParams ffn_hidden_qp;
    std::int32_t ffn_relu_floor = 0;  // quantize(0) in the hidden scale
    IntLinear ffn_down;
    QuantParams ffn_down_qp;

    CodeRescale res2_a, res2_b;
    QuantParams res2_qp;
    FoldedBatchNorm bn2;
    QuantParams bn2_qp;

    CodeRescale gap_rescale;  // pooled bn2 codes -> gap scale
    QuantParams gap_qp;
    IntLinear out_proj;  // consumes gap codes
};

// Per-stage operation counts from an actual integer forward. The counts are
// exact tallies of MAC/element operations, and double as the input to the
// cycle model.
struct OpTally {
    std::vector<std::pair<std::string, std::uint64_t>> stages;

    void add(std::string name, std::uint64_t ops) { stages.emplace_back(std::move(name), ops); }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& [name, ops] : stages) t += ops;
        return t;
    }
};

struct IntForwardResult {
    IntTensor output;
    OpTally tally;
};

// ---- integer ops ----------------------------------------------------------

// acc = sum (x - Z_x) * (w - Z_w) + bias, then requantize via the plan.
inline IntTensor int_linear(const IntTensor& x, const IntLinear& layer) {
    if (x.cols != layer.in_dim)
        throw DimensionError("int_linear: input has " + std::to_string(x.cols) +
                             " cols, layer expects " + std::to_string(layer.in_dim));
    IntTensor out;
    out.rows = x.rows;
    out.cols = layer.out_dim;
    out.qp = layer.plan.out;
    out.data.resize(out.rows * out.cols);
    const std::int64_t zx = x.qp.zero_point;
    const std::int64_t zw = layer.w_qp.zero_point;
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < layer.out_dim; ++c) {
            std::int64_t acc = layer.bias[c];
            for (std::size_t i = 0; i < layer.in_dim; ++i)
                acc += (static_cast<std::int64_t>(x.at(r, i)) - zx) *
                       (static_cast<std::int64_t>(layer.weights[i * layer.out_dim + c]) - zw);
            assert(acc >= INT32_MIN && acc <= INT32_MAX);  // 32-bit accumulator contract
            out.at(r, c) = layer.plan.apply(acc);
        }
    return out;
}

// acc[i][j] = sum_k (a[i][k]-Za) * (b[j][k]-Zb)  -- b indexed transposed.
inline std::vector<std::int64_t> int_matmul_nt(const IntTensor& a, const IntTensor& b) {
    if (a.cols != b.cols) throw DimensionError("int_matmul_nt: inner dims disagree");
    std::vector<std::int64_t> acc(a.rows * b.rows, 0);
    const std::int64_t za = a.qp.zero_point, zb = b.qp.zero_point;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            std::int64_t s = 0;
            for (std::size_t k = 0; k < a.cols; ++k)
                s += (static_cast<std::int64_t>(a.at(i, k)) - za) *
                     (static_cast<std::int64_t>(b.at(j, k)) - zb);
            assert(s >= INT32_MIN && s <= INT32_MAX);
            acc[i * b.rows + j] = s;
        }
    return acc;
}

// acc[i][j] = sum_k (a[i][k]-Za) * (b[k][j]-Zb)
inline std::vector<std::int64_t> int_matmul_nn(const IntTensor& a, const IntTensor& b) {
    if (a.cols != b.rows) throw DimensionError("int_matmul_nn: inner dims disagree");
    std::vector<std::int64_t> acc(a.rows * b.cols, 0);
    const std::int64_t za = a.qp.zero_point, zb = b.qp.zero_point;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.cols; ++j) {
            std::int64_t s = 0;
            for (std::size_t k = 0; k < a.cols; ++k)
                s += (static_cast<std::int64_t>(a.at(i, k)) - za) *
                     (static_cast<std::int64_t>(b.at(k, j)) - zb);
            assert(s >= INT32_MIN && s <= INT32_MAX);
            acc[i * b.cols + j] = s;
        }
    return acc;
}

// Saturating add of two operands already in the destination scale:
// q = clamp(qa + qb - Z, qmin, qmax).
inline std::int32_t saturating_add(std::int32_t qa, std::int32_t qb, const QuantParams& qp) {
    const std::int64_t v = static_cast<std::int64_t>(qa) + qb - qp.zero_point;
    return static_cast<std::int32_t>(clamp_val<std::int64_t>(v, qp.qmin(), qp.qmax()));
}

// Row-wise fixed-point softmax probabilities in [0, 2^f]: scores are
// converted to fixed point (f fraction bits, natural-log base folded into
// the plan), shifted by the row max, exponentiated through the 2^x table
// and normalized so each row sums to 2^f up to integer-division
// remainders.
inline std::vector<std::int32_t> int_softmax_fixed(const IntTensor& scores, const IntSoftmax& sm) {
    std::vector<std::int32_t> out(scores.data.size());
    std::vector<std::int64_t> p(scores.cols);
    for (std::size_t r = 0; r < scores.rows; ++r) {
        for (std::size_t c = 0; c < scores.cols; ++c)
            p[c] = sm.in_plan.apply_raw(static_cast<std::int64_t>(scores.at(r, c)) -
                                        sm.in_qp.zero_point);
        softmax_fixed_row(p.data(), scores.cols, sm.frac_bits, sm.exp2_lut,
                          out.data() + r * scores.cols);
    }
    return out;
}

// Full integer softmax: fixed-point probabilities recoded to b-bit codes.
inline IntTensor int_softmax(const IntTensor& scores, const IntSoftmax& sm) {
    const std::vector<std::int32_t> probs = int_softmax_fixed(scores, sm);
    IntTensor out;
    out.rows = scores.rows;
    out.cols = scores.cols;
    out.qp = sm.out_plan.out;
    out.data.resize(scores.data.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out.data[i] = sm.out_plan.apply(probs[i]);
    return out;
}

inline IntTensor folded_batchnorm(const IntTensor& x, const FoldedBatchNorm& bn) {
    IntTensor out;
    out.rows = x.rows;
    out.cols = x.cols;
    out.qp = bn.out_qp;
    out.data.resize(x.data.size());
    const std::int64_t zin = bn.in_qp.zero_point;
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) {
            std::int64_t v = (static_cast<std::int64_t>(x.at(r, c)) - zin) * bn.multiplier[c] +
                             bn.offset[c];
            const int s = bn.shift[c];
            if (s > 0) v += std::int64_t(1) << (s - 1);
            v >>= s;
            v += bn.out_qp.zero_point;
            out.at(r, c) =
                static_cast<std::int32_t>(clamp_val<std::int64_t>(v, bn.out_qp.qmin(), bn.out_qp.qmax()));
        }
    return out;
}

// ---- export ----------------------------------------------------------------

namespace detail {

inline IntLinear export_linear(const Tensor& w, const Tensor& b, const QuantParams& in_qp,
                               const QuantParams& out_qp, int bits, double extra_ratio = 1.0) {
    IntLinear layer;
    layer.in_dim = w.rows();
    layer.out_dim = w.cols();
    layer.w_qp = weight_qparams(w, bits);
    layer.weights = quantize(w.data(), layer.w_qp);
    const double bias_scale = in_qp.scale * layer.w_qp.scale;
    layer.bias.resize(layer.out_dim);
    for (std::size_t j = 0; j < layer.out_dim; ++j)
        layer.bias[j] = static_cast<std::int32_t>(clamp_val<std::int64_t>(
            round_half_away(b.at(0, j) / bias_scale), INT32_MIN, INT32_MAX));
    layer.plan = plan_requant(bias_scale * extra_ratio / out_qp.scale, out_qp);
    return layer;
}

inline CodeRescale make_rescale(const QuantParams& from, const QuantParams& to) {
    CodeRescale r;
    r.in_qp = from;
    r.plan = plan_requant(from.scale / to.scale, to);
    return r;
}

inline FoldedBatchNorm fold_batchnorm(const Tensor& gamma, const Tensor& beta,
                                      const BatchNormStats& stats, const QuantParams& in_qp,
                                      const QuantParams& out_qp, double eps = 1e-5) {
    if (!stats.initialized) throw StateError("fold_batchnorm: statistics not initialized");
    FoldedBatchNorm bn;
    bn.in_qp = in_qp;
    bn.out_qp = out_qp;
    const std::size_t d = gamma.cols();
    bn.multiplier.resize(d);
    bn.shift.resize(d);
    bn.offset.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        const double a = gamma.at(0, c) / std::sqrt(stats.running_var[c] + eps);
        const double b = beta.at(0, c) - a * stats.running_mean[c];
        const double ratio = a * in_qp.scale / out_qp.scale;
        bn.shift[c] = kBnShift;
        bn.multiplier[c] = static_cast<std::int32_t>(clamp_val<std::int64_t>(
            round_half_away(std::ldexp(ratio, kBnShift)), INT32_MIN, INT32_MAX));
        bn.offset[c] = static_cast<std::int32_t>(clamp_val<std::int64_t>(
            round_half_away(std::ldexp(b / out_qp.scale, kBnShift)), INT32_MIN, INT32_MAX));
    }
    return bn;
}

inline std::vector<std::int32_t> int_softmax_fixed(const IntTensor& scores, const IntSoftmax& sm) {
    std::vector<std::int32_t> out(scores.data.size());
    std::vector<std::int64_t> p(scores.cols);
    for (std::size_t r = 0; r < scores.rows; ++r) {
        for (std::size_t c = 0; c < scores.cols; ++c)
            p[c] = sm.in_plan.apply_raw(static_cast<std::int64_t>(scores.at(r, c)) -
                                        sm.in_qp.zero_point);
        softmax_fixed_row(p.data(), scores.cols, sm.frac_bits, sm.exp2_lut,
                          out.data() + r * scores.cols);
    }
    return out;
}}  // namespace detail

// Compiles a calibrated QAT model into a self-contained integer model:
// asymmetric b-bit weights, symmetric 32-bit biases and BatchNorm
// statistics, one requantization plan per layer boundary, the positional
// codes and the softmax constants. No float is needed at inference.
inline IntModel export_int(TransformerModel& m) {
    if (!m.observers.all_frozen())
        throw StateError("export_int: observers must be frozen after training");
    if (!m.bn1.initialized || !m.bn2.initialized)
        throw StateError("export_int: BatchNorm statistics not initialized");
    const ModelConfig& cfg = m.config;
    const int bits = cfg.bits;
    const auto qp = [&](const RangeObserver& o) { return o.qparams(bits); };

    IntModel im;
    im.config = cfg;
    im.input_qp = qp(m.observers.input);
    im.output_qp = qp(m.observers.output);
    im.emb_qp = qp(m.observers.embed);
    im.q_qp = qp(m.observers.q);
    im.k_qp = qp(m.observers.k);
    im.v_qp = qp(m.observers.v);
    im.scores_qp = qp(m.observers.scores);
    im.attn_qp = qp(m.observers.attn);
    im.mix_qp = qp(m.observers.mix);
    im.attn_out_qp = qp(m.observers.attn_out);
    im.res1_qp = qp(m.observers.res1);
    im.bn1_qp = qp(m.observers.bn1);
    im.ffn_hidden_qp = qp(m.observers.ffn_hidden);
    im.ffn_down_qp = qp(m.observers.ffn_down);
    im.res2_qp = qp(m.observers.res2);
    im.bn2_qp = qp(m.observers.bn2);

    im.embed = detail::export_linear(m.w_in, m.b_in, im.input_qp, im.emb_qp, bits);
    im.pe_codes = quantize(m.pe.data(), im.emb_qp);

    im.q_proj = detail::export_linear(m.w_q, m.b_q, im.emb_qp, im.q_qp, bits);
    im.k_proj = detail::export_linear(m.w_k, m.b_k, im.emb_qp, im.k_qp, bits);
    im.v_proj = detail::export_linear(m.w_v, m.b_v, im.emb_qp, im.v_qp, bits);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    im.scores_plan =
        plan_requant(im.q_qp.scale * im.k_qp.scale * inv_sqrt_d / im.scores_qp.scale, im.scores_qp);

    im.softmax.frac_bits = kSoftmaxFracBits;
    im.softmax.in_qp = im.scores_qp;
    im.softmax.in_plan = softmax_input_plan(im.scores_qp);
    im.softmax.exp2_lut = shared_exp2_lut();
    im.softmax.out_plan =
        plan_requant(std::ldexp(1.0, -kSoftmaxFracBits) / im.attn_qp.scale, im.attn_qp);

    im.mix_plan = plan_requant(im.attn_qp.scale * im.v_qp.scale / im.mix_qp.scale, im.mix_qp);
    im.attn_out = detail::export_linear(m.w_attn_out, m.b_attn_out, im.mix_qp, im.attn_out_qp, bits);

    im.res1_a = detail::make_rescale(im.emb_qp, im.res1_qp);
    im.res1_b = detail::make_rescale(im.attn_out_qp, im.res1_qp);
    im.bn1 = detail::fold_batchnorm(m.gamma1, m.beta1, m.bn1, im.res1_qp, im.bn1_qp);

    im.ffn_up = detail::export_linear(m.w_ffn_up, m.b_ffn_up, im.bn1_qp, im.ffn_hidden_qp, bits);
    im.ffn_relu_floor = quantize_value(0.0, im.ffn_hidden_qp);
    im.ffn_down =
        detail::export_linear(m.w_ffn_down, m.b_ffn_down, im.ffn_hidden_qp, im.ffn_down_qp, bits);

    im.res2_a = detail::make_rescale(im.bn1_qp, im.res2_qp);
    im.res2_b = detail::make_rescale(im.ffn_down_qp, im.res2_qp);
    im.bn2 = detail::fold_batchnorm(m.gamma2, m.beta2, m.bn2, im.res2_qp, im.bn2_qp);

    im.gap_qp = qp(m.observers.gap);
    im.gap_rescale = detail::make_rescale(im.bn2_qp, im.gap_qp);
    im.out_proj = detail::export_linear(m.w_out, m.b_out, im.gap_qp, im.output_qp, bits);
    return im;
}

// ---- integer forward --------------------------------------------------------

// Full integer-only inference over one quantized window. Every arithmetic
// step is integer; the returned tally is the exact per-stage operation
// count consumed by the cycle model.
inline IntForwardResult int_forward(const IntModel& im, const IntTensor& x_q) {
    const ModelConfig& cfg = im.config;
    const std::size_t n = cfg.window, d = cfg.d_model, h = cfg.d_ff(), k = cfg.outputs;
    if (x_q.rows != n || x_q.cols != cfg.features)
        throw DimensionError("int_forward: input must be " + std::to_string(n) + "x" +
                             std::to_string(cfg.features));
    if (x_q.qp.bits != im.input_qp.bits || x_q.qp.zero_point != im.input_qp.zero_point ||
        x_q.qp.scale != im.input_qp.scale)
        throw ContractError("int_forward: input quantized with foreign parameters");

    OpTally tally;

    // Input projection plus positional codes in the shared embed scale.
    IntTensor e = int_linear(x_q, im.embed);
    for (std::size_t i = 0; i < e.data.size(); ++i)
        e.data[i] = saturating_add(e.data[i], im.pe_codes[i], im.emb_qp);
    e.qp = im.emb_qp;
    tally.add("embed", static_cast<std::uint64_t>(n) * cfg.features * d + n * d);

    IntTensor qm = int_linear(e, im.q_proj);
    tally.add("q_proj", static_cast<std::uint64_t>(n) * d * d);
    IntTensor km = int_linear(e, im.k_proj);
    tally.add("k_proj", static_cast<std::uint64_t>(n) * d * d);
    IntTensor vm = int_linear(e, im.v_proj);
    tally.add("v_proj", static_cast<std::uint64_t>(n) * d * d);

    // scores = Q K^T with the 1/sqrt(d) scale folded into the plan.
    std::vector<std::int64_t> acc = int_matmul_nt(qm, km);
    IntTensor scores;
    scores.rows = n;
    scores.cols = n;
    scores.qp = im.scores_qp;
    scores.data.resize(n * n);
    for (std::size_t i = 0; i < acc.size(); ++i) scores.data[i] = im.scores_plan.apply(acc[i]);
    tally.add("scores", static_cast<std::uint64_t>(n) * d * n);

    IntTensor attn = int_softmax(scores, im.softmax);
    tally.add("softmax", 2ull * n * n);

    acc = int_matmul_nn(attn, vm);
    IntTensor mix;
    mix.rows = n;
    mix.cols = d;
    mix.qp = im.mix_qp;
    mix.data.resize(n * d);
    for (std::size_t i = 0; i < acc.size(); ++i) mix.data[i] = im.mix_plan.apply(acc[i]);
    tally.add("mix", static_cast<std::uint64_t>(n) * n * d);

    IntTensor ao = int_linear(mix, im.attn_out);
    tally.add("attn_out", static_cast<std::uint64_t>(n) * d * d);

    IntTensor r1;
    r1.rows = n;
    r1.cols = d;
    r1.qp = im.res1_qp;
    r1.data.resize(n * d);
    for (std::size_t i = 0; i < r1.data.size(); ++i)
        r1.data[i] = saturating_add(im.res1_a.apply(e.data[i]), im.res1_b.apply(ao.data[i]),
                                    im.res1_qp);
    tally.add("res1", static_cast<std::uint64_t>(n) * d);

    IntTensor b1 = folded_batchnorm(r1, im.bn1);
    tally.add("bn1", static_cast<std::uint64_t>(n) * d);

    IntTensor hidden = int_linear(b1, im.ffn_up);
    for (auto& v : hidden.data) v = std::max(v, im.ffn_relu_floor);
    tally.add("ffn_up", static_cast<std::uint64_t>(n) * d * h);

    IntTensor down = int_linear(hidden, im.ffn_down);
    tally.add("ffn_down", static_cast<std::uint64_t>(n) * h * d);

    IntTensor r2;
    r2.rows = n;
    r2.cols = d;
    r2.qp = im.res2_qp;
    r2.data.resize(n * d);
    for (std::size_t i = 0; i < r2.data.size(); ++i)
        r2.data[i] = saturating_add(im.res2_a.apply(b1.data[i]), im.res2_b.apply(down.data[i]),
                                    im.res2_qp);
    tally.add("res2", static_cast<std::uint64_t>(n) * d);

    IntTensor b2 = folded_batchnorm(r2, im.bn2);
    tally.add("bn2", static_cast<std::uint64_t>(n) * d);

    // Integer global average pool: channel sums divided by n (round half
    // up) on the bn2 grid, then rescaled to the dedicated gap boundary.
    IntTensor pooled;
    pooled.rows = 1;
    pooled.cols = d;
    pooled.qp = im.gap_qp;
    pooled.data.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        std::int64_t s = 0;
        for (std::size_t r = 0; r < n; ++r) s += b2.at(r, c);
        pooled.data[c] = im.gap_rescale.apply(static_cast<std::int32_t>(
            div_round_half_up(s, static_cast<std::int64_t>(n))));
    }
    tally.add("gap", static_cast<std::uint64_t>(n) * d);

    IntTensor y = int_linear(pooled, im.out_proj);
    tally.add("out_proj", static_cast<std::uint64_t>(d) * k);

    return {std::move(y), std::move(tally)};
}

// Stage (name, op-count) list for a configuration, identical by
// construction to the tally int_forward produces.
inline std::vector<std::pair<std::string, std::uint64_t>> stage_op_counts(
    const ModelConfig& cfg) {
    const std::uint64_t n = cfg.window, m = cfg.features, d = cfg.d_model, h = cfg.d_ff(),
                        k = cfg.outputs;
    return {
        {"embed", n * m * d + n * d},
        {"q_proj", n * d * d},
        {"k_proj", n * d * d},
        {"v_proj", n * d * d},
        {"scores", n * d * n},
        {"softmax", 2 * n * n},
        {"mix", n * n * d},
        {"attn_out", n * d * d},
        {"res1", n * d},
        {"bn1", n * d},
        {"ffn_up", n * d * h},
        {"ffn_down", n * h * d},
        {"res2", n * d},
        {"bn2", n * d},
        {"gap", n * d},
        {"out_proj", d * k},
    };
}

}  // namespace qforge
