// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qforge/common.hpp"
#include "qforge/quant.hpp"
#include "qforge/rng.hpp"
#include "qforge/tensor.hpp"

namespace qforge {

enum class Task { forecasting, classification, anomaly };

inline std::string task_name(Task t) {
    switch (t) {
        case Task::forecasting: return "forecasting";
        case Task::classification: return "classification";
        default: return "anomaly";
    }
}

inline Task task_from_name(const std::string& s) {
    if (s == "forecasting" || s == "forecast") return Task::forecasting;
    if (s == "classification" || s == "classify") return Task::classification;
    if (s == "anomaly") return Task::anomaly;
    throw ContractError("unknown task: " + s);
}

// Architecture hyperparameters. d_ff is always 4*d_model; the builder does
// not enforce the search grid on d_model, only the search space does.
struct ModelConfig {
    std::size_t window = 24;    // n time steps
    std::size_t features = 1;   // m input features
    std::size_t outputs = 1;    // k
    std::size_t d_model = 16;
    int bits = 8;               // quantized-mode bitwidth
    Task task = Task::forecasting;

    std::size_t d_ff() const { return 4 * d_model; }

    void validate() const {
        if (window < 1 || features < 1 || outputs < 1 || d_model < 1)
            throw ContractError("ModelConfig: all dimensions must be >= 1");
        if (bits < 2 || bits > 8) throw ContractError("ModelConfig: bits must be in [2,8]");
    }
};

// Closed-form trainable parameter count:
//   input projection (m*d + d) + Q/K/V 3*(d^2 + d) + attention output
//   (d^2 + d) + FFN up (4d^2 + 4d) + FFN down (4d^2 + d) + two affine
//   BatchNorms (4d) + output projection (d*k + k).
// The positional encoding is a constant table and contributes nothing.
inline std::size_t count_parameters(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model, m = cfg.features, k = cfg.outputs;
    return (m * d + d) + 3 * (d * d + d) + (d * d + d) + (4 * d * d + 4 * d) +
           (4 * d * d + d) + 4 * d + (d * k + k);
}

// Fixed sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)),
// PE[t, 2i+1] = cos(t / 10000^(2i/d)).
inline Tensor positional_encoding(std::size_t n, std::size_t d) {
    if (n < 1 || d < 1) throw ContractError("positional_encoding: n, d must be >= 1");
    Tensor pe = Tensor::zeros(n, d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = j / 2;
            const double angle =
                static_cast<double>(t) /
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
            pe.at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

enum class ForwardMode { full_precision, qat };
enum class Phase { train, eval };

// Activation-boundary observers, in pipeline order.
struct ObserverSet {
    RangeObserver input, embed, q, k, v, scores, attn, mix, attn_out, res1, bn1, ffn_hidden,
        ffn_down, res2, bn2, gap, output;

    template <typename F>
    void for_each(F&& f) {
        f("input", input);
        f("embed", embed);
        f("q", q);
        f("k", k);
        f("v", v);
        f("scores", scores);
        f("attn", attn);
        f("mix", mix);
        f("attn_out", attn_out);
        f("res1", res1);
        f("bn1", bn1);
        f("ffn_hidden", ffn_hidden);
        f("ffn_down", ffn_down);
        f("res2", res2);
        f("bn2", bn2);
        f("gap", gap);
        f("output", output);
    }

    void freeze() {
        for_each([](const char*, RangeObserver& o) { o.frozen = true; });
    }
    bool all_frozen() {
        bool ok = true;
        for_each([&](const char*, RangeObserver& o) { ok = ok && o.frozen && o.seen; });
        return ok;
    }
};

struct TransformerModel {
    ModelConfig config;

    Tensor w_in, b_in;        // m x d, 1 x d
    Tensor w_q, b_q, w_k, b_k, w_v, b_v;  // d x d, 1 x d
    Tensor w_attn_out, b_attn_out;        // d x d, 1 x d
    Tensor w_ffn_up, b_ffn_up;            // d x 4d, 1 x 4d
    Tensor w_ffn_down, b_ffn_down;        // 4d x d, 1 x d
    Tensor w_out, b_out;                  // d x k, 1 x k
    Tensor gamma1, beta1, gamma2, beta2;  // 1 x d each
    BatchNormStats bn1, bn2;
    Tensor pe;  // n x d, constant

    ObserverSet observers;

    std::vector<Tensor> parameters() {
        return {w_in,   b_in,   w_q,     b_q,        w_k,      b_k,        w_v,    b_v,
                w_attn_out, b_attn_out, w_ffn_up, b_ffn_up, w_ffn_down, b_ffn_down,
                w_out,  b_out,  gamma1,  beta1,      gamma2,   beta2};
    }

    void zero_grads() {
        for (auto& p : parameters()) p.zero_grad();
    }
};

namespace detail {

inline Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
    // Uniform fan-in scaling: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor w = Tensor::zeros(rows, cols);
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    w.set_requires_grad(true);
    return w;
}

inline Tensor init_bias(std::size_t cols, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor b = Tensor::zeros(1, cols);
    for (double& v : b.data()) v = rng.uniform(-bound, bound);
    b.set_requires_grad(true);
    return b;
}

// Per-forward weight quantization parameters straight from the tensor's
// current range (weights use no running observer). The range is extended
// to contain zero, same policy as observer read-out: the zero point of the
// affine map must not clamp.
inline QuantParams weight_qparams(const Tensor& w, int bits) {
    double lo = 0.0, hi = 0.0;
    for (double v : w.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi - lo > 1e-12)) {
        lo -= 1e-6;
        hi += 1e-6;
    }
    return qparams_asymmetric(lo, hi, bits);
}

}  // namespace detail

inline TransformerModel build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TransformerModel m;
    m.config = cfg;
    Rng rng(seed);
    const std::size_t n = cfg.window, mm = cfg.features, d = cfg.d_model, k = cfg.outputs,
                      h = cfg.d_ff();
    m.w_in = detail::init_weight(mm, d, rng);
    m.b_in = detail::init_bias(d, mm, rng);
    m.w_q = detail::init_weight(d, d, rng);
    m.b_q = detail::init_bias(d, d, rng);
    m.w_k = detail::init_weight(d, d, rng);
    m.b_k = detail::init_bias(d, d, rng);
    m.w_v = detail::init_weight(d, d, rng);
    m.b_v = detail::init_bias(d, d, rng);
    m.w_attn_out = detail::init_weight(d, d, rng);
    m.b_attn_out = detail::init_bias(d, d, rng);
    m.w_ffn_up = detail::init_weight(d, h, rng);
    m.b_ffn_up = detail::init_bias(h, d, rng);
    m.w_ffn_down = detail::init_weight(h, d, rng);
    m.b_ffn_down = detail::init_bias(d, h, rng);
    m.w_out = detail::init_weight(d, k, rng);
    m.b_out = detail::init_bias(k, d, rng);
    m.gamma1 = Tensor::full(1, d, 1.0).set_requires_grad(true);
    m.beta1 = Tensor::zeros(1, d).set_requires_grad(true);
    m.gamma2 = Tensor::full(1, d, 1.0).set_requires_grad(true);
    m.beta2 = Tensor::zeros(1, d).set_requires_grad(true);
    m.pe = positional_encoding(n, d);
    return m;
}

namespace detail {

struct QatCtx {
    TransformerModel* model;
    Graph* graph;
    bool active;       // fake quantization on
    bool update_obs;   // observers learn from this forward
    int bits;

    Tensor weights(const Tensor& w) {
        if (!active) return w;
        return fake_quantize(*graph, w, weight_qparams(w, bits));
    }
};

}  // namespace detail

// Forward pass over a minibatch of windows (each n x m) -> one 1 x k
// prediction per window. QAT mode wraps every weight and every activation
// boundary in fake quantization. BatchNorm in the train phase computes its
// statistics over the stacked rows of the whole minibatch, so per-window
// means survive normalization; eval uses the running statistics and is
// therefore independent per window.
inline std::vector<Tensor> forward_batch(Graph& g, TransformerModel& m,
                                         const std::vector<Tensor>& xs, ForwardMode mode,
                                         Phase phase = Phase::eval) {
    const ModelConfig& cfg = m.config;
    if (xs.empty()) throw DimensionError("forward_batch: empty batch");
    for (const Tensor& x : xs)
        if (x.rows() != cfg.window || x.cols() != cfg.features)
            throw DimensionError("forward: input must be " + std::to_string(cfg.window) + "x" +
                                 std::to_string(cfg.features) + ", got " + x.shape_str());
    const BnMode bn_mode = phase == Phase::train ? BnMode::train : BnMode::eval;
    detail::QatCtx q{&m, &g, mode == ForwardMode::qat,
                     mode == ForwardMode::qat && phase == Phase::train, cfg.bits};
    const std::size_t batch = xs.size();
    const std::size_t n = cfg.window;

    // Boundary fake quantization over the whole minibatch: one observer
    // update, identical parameters for every window.
    // Every activation boundary is produced by an integer requantization
    // on the deployed path, so its float twin rounds half up; weights and
    // raw inputs are fresh real-to-integer conversions and round half away.
    auto boundary_all = [&](std::vector<Tensor> ts, RangeObserver& obs) {
        if (!q.active) return ts;
        if (q.update_obs)
            for (const Tensor& t : ts) obs.update(t);
        const QuantParams qp = obs.qparams(q.bits);
        for (Tensor& t : ts) t = fake_quantize(g, t, qp, FqRounding::half_up);
        return ts;
    };
    auto linear_all = [&](const std::vector<Tensor>& ts, const Tensor& w, const Tensor& b) {
        const Tensor wq = q.weights(w);
        std::vector<Tensor> out;
        out.reserve(ts.size());
        for (const Tensor& t : ts) out.push_back(add_bias(g, matmul(g, t, wq), b));
        return out;
    };
    // Saturating add in the destination scale, the float twin of the
    // integer runtime's zero-point-corrected add.
    auto quantized_add_all = [&](const std::vector<Tensor>& as, const std::vector<Tensor>& bs,
                                 RangeObserver& obs, FqRounding b_rounding) {
        std::vector<Tensor> raw;
        for (std::size_t i = 0; i < as.size(); ++i) raw.push_back(add(g, as[i], bs[i]));
        if (!q.active) return raw;
        if (q.update_obs)
            for (const Tensor& t : raw) obs.update(t);
        const QuantParams qp = obs.qparams(q.bits);
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < as.size(); ++i) {
            Tensor sum = add(g, fake_quantize(g, as[i], qp, FqRounding::half_up),
                             fake_quantize(g, bs[i], qp, b_rounding));
            out.push_back(clamp(g, sum, qp.dequant_min(), qp.dequant_max()));
        }
        return out;
    };
    // BatchNorm over the stacked rows of every window in the batch.
    auto batchnorm_all = [&](const std::vector<Tensor>& ts, Tensor& gamma, Tensor& beta,
                             BatchNormStats& stats) {
        Tensor stacked = batch == 1 ? ts[0] : concat_rows(g, ts);
        Tensor normed = batchnorm(g, stacked, gamma, beta, stats, bn_mode);
        std::vector<Tensor> out;
        if (batch == 1) {
            out.push_back(normed);
        } else {
            for (std::size_t i = 0; i < batch; ++i)
                out.push_back(slice_rows(g, normed, i * n, n));
        }
        return out;
    };

    // raw input boundary: fresh real-to-integer conversion, half away
    std::vector<Tensor> x = xs;
    if (q.active) {
        if (q.update_obs)
            for (const Tensor& t : x) m.observers.input.update(t);
        const QuantParams qp = m.observers.input.qparams(q.bits);
        for (Tensor& t : x) t = fake_quantize(g, t, qp, FqRounding::half_away);
    }

    // Input projection, then positional encoding in the embed scale.
    std::vector<Tensor> u = linear_all(x, m.w_in, m.b_in);
    std::vector<Tensor> e;
    if (q.active) {
        std::vector<Tensor> pes(batch, m.pe);
        e = quantized_add_all(u, pes, m.observers.embed, FqRounding::half_away);
    } else {
        for (const Tensor& t : u) e.push_back(add(g, t, m.pe));
    }

    // One-head self-attention.
    std::vector<Tensor> qm = boundary_all(linear_all(e, m.w_q, m.b_q), m.observers.q);
    std::vector<Tensor> km = boundary_all(linear_all(e, m.w_k, m.b_k), m.observers.k);
    std::vector<Tensor> vm = boundary_all(linear_all(e, m.w_v, m.b_v), m.observers.v);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    std::vector<Tensor> scores;
    for (std::size_t i = 0; i < batch; ++i)
        scores.push_back(mul_scalar(g, matmul(g, qm[i], transpose(g, km[i])), inv_sqrt_d));
    scores = boundary_all(scores, m.observers.scores);
    std::vector<Tensor> attn;
    if (q.active) {
        // exact integer-softmax semantics during QAT so training adapts to
        // the deployed fixed-point pipeline
        const QuantParams sqp = m.observers.scores.qparams(cfg.bits);
        for (const Tensor& s : scores) attn.push_back(simulated_fixed_softmax(g, s, sqp));
    } else {
        for (const Tensor& s : scores) attn.push_back(softmax_rows(g, s));
    }
    attn = boundary_all(attn, m.observers.attn);
    std::vector<Tensor> mix;
    for (std::size_t i = 0; i < batch; ++i) mix.push_back(matmul(g, attn[i], vm[i]));
    mix = boundary_all(mix, m.observers.mix);
    std::vector<Tensor> attn_out =
        boundary_all(linear_all(mix, m.w_attn_out, m.b_attn_out), m.observers.attn_out);

    std::vector<Tensor> res1;
    if (q.active) {
        res1 = quantized_add_all(e, attn_out, m.observers.res1, FqRounding::half_up);
    } else {
        for (std::size_t i = 0; i < batch; ++i) res1.push_back(add(g, e[i], attn_out[i]));
    }
    std::vector<Tensor> b1 =
        boundary_all(batchnorm_all(res1, m.gamma1, m.beta1, m.bn1), m.observers.bn1);

    // Feedforward.
    std::vector<Tensor> hidden = linear_all(b1, m.w_ffn_up, m.b_ffn_up);
    for (Tensor& t : hidden) t = relu(g, t);
    hidden = boundary_all(hidden, m.observers.ffn_hidden);
    std::vector<Tensor> down =
        boundary_all(linear_all(hidden, m.w_ffn_down, m.b_ffn_down), m.observers.ffn_down);

    std::vector<Tensor> res2;
    if (q.active) {
        res2 = quantized_add_all(b1, down, m.observers.res2, FqRounding::half_up);
    } else {
        for (std::size_t i = 0; i < batch; ++i) res2.push_back(add(g, b1[i], down[i]));
    }
    std::vector<Tensor> b2 =
        boundary_all(batchnorm_all(res2, m.gamma2, m.beta2, m.bn2), m.observers.bn2);

    // Pooling gets its own boundary: the pooled spread is much tighter
    // than the bn2 range, so a dedicated scale keeps the output layer's
    // input resolution fine. The integer pipeline divides channel sums on
    // the bn2 grid before rescaling; the intermediate fake quantization
    // mirrors that rounding step.
    std::vector<Tensor> pooled;
    for (const Tensor& t : b2) {
        Tensor p = global_avg_pool(g, t);
        if (q.active)
            p = fake_quantize(g, p, m.observers.bn2.qparams(cfg.bits), FqRounding::half_up);
        pooled.push_back(p);
    }
    pooled = boundary_all(pooled, m.observers.gap);

    std::vector<Tensor> out =
        boundary_all(linear_all(pooled, m.w_out, m.b_out), m.observers.output);
    return out;
}

// Single-window forward, 1 x k output. In the train phase BatchNorm sees
// only this window's rows; training code uses forward_batch.
inline Tensor forward(Graph& g, TransformerModel& m, const Tensor& x, ForwardMode mode,
                      Phase phase = Phase::eval) {
    return forward_batch(g, m, {x}, mode, phase)[0];
}

// Runs QAT-mode training forwards over the given windows so observers see
// realistic ranges and BatchNorm accumulates running statistics. Used by
// tests and tools that need an exportable model without a full fit.
inline void calibrate(TransformerModel& m, const std::vector<Tensor>& windows,
                      std::size_t batch_size = 32) {
    for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
        const std::size_t end = std::min(windows.size(), begin + batch_size);
        std::vector<Tensor> batch(windows.begin() + begin, windows.begin() + end);
        Graph g;
        g.set_recording(false);
        forward_batch(g, m, batch, ForwardMode::qat, Phase::train);
    }
}

// Deployment footprint in bytes: b-bit parameters, the two largest live
// activation buffers at b bits (ping-pong scheduling), and the constant
// pool (positional codes, softmax LUT, requantization and folded-BN
// constants, the 32-bit bias excess over b bits).
struct FootprintBreakdown {
    std::size_t param_bytes = 0;
    std::size_t buffer_bytes = 0;
    std::size_t constant_bytes = 0;
    std::size_t total() const { return param_bytes + buffer_bytes + constant_bytes; }
};

inline FootprintBreakdown footprint_breakdown(const ModelConfig& cfg, int bits) {
    const std::size_t n = cfg.window, d = cfg.d_model, k = cfg.outputs;
    const std::size_t params = count_parameters(cfg);
    FootprintBreakdown fp;
    fp.param_bytes = (params * static_cast<std::size_t>(bits) + 7) / 8;

    std::size_t sizes[3] = {n * d, n * n, n * cfg.d_ff()};
    std::sort(sizes, sizes + 3);
    const std::size_t buf_codes = sizes[1] + sizes[2];
    fp.buffer_bytes = (buf_codes * static_cast<std::size_t>(bits) + 7) / 8;

    const std::size_t pe_bits = n * d * static_cast<std::size_t>(bits);
    const std::size_t lut_bits = (std::size_t(1) << kSoftmaxFracBits) * (kSoftmaxFracBits + 2);
    const std::size_t plan_bits = 17 * 48;  // 17 plans: 32-bit M, 8-bit shift, 8-bit zp
    const std::size_t bn_bits = 2 * d * (32 + 8 + 32);
    const std::size_t bias_count = 10 * d + k;
    const std::size_t bias_excess_bits = bias_count * static_cast<std::size_t>(32 - bits);
    fp.constant_bytes = (pe_bits + lut_bits + plan_bits + bn_bits + bias_excess_bits + 7) / 8;
    return fp;
}

inline std::size_t estimate_footprint(const ModelConfig& cfg, int bits) {
    return footprint_breakdown(cfg, bits).total();
}

}  // namespace qforge
