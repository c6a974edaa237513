// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "qforge/intrt.hpp"
#include "qforge/model_io.hpp"
#include "support/fixtures.hpp"

using namespace qforge;
using qforge::testing::calibrated_model;
using qforge::testing::random_window;
using qforge::testing::tiny_config;

TEST_CASE("export requires frozen observers and BN statistics") {
    TransformerModel m = build(tiny_config(), 1);
    CHECK_THROWS_AS(export_int(m), StateError);

    // calibrated but unfrozen
    Rng rng(2);
    std::vector<Tensor> calib;
    for (int i = 0; i < 10; ++i) calib.push_back(random_window(m.config, rng));
    calibrate(m, calib);
    CHECK_THROWS_AS(export_int(m), StateError);

    m.observers.freeze();
    CHECK_NOTHROW(export_int(m));
}

TEST_CASE("all-zero model exports zero weights and zero-point offsets") {
    ModelConfig cfg = tiny_config();
    TransformerModel m = build(cfg, 3);
    for (Tensor& p : m.parameters())
        if (!p.same_storage(m.gamma1) && !p.same_storage(m.gamma2))
            std::fill(p.data().begin(), p.data().end(), 0.0);
    Rng rng(4);
    std::vector<Tensor> calib;
    for (int i = 0; i < 10; ++i) calib.push_back(random_window(cfg, rng));
    calibrate(m, calib);
    m.observers.freeze();
    IntModel im = export_int(m);

    for (const IntLinear* lin : {&im.embed, &im.q_proj, &im.ffn_up, &im.out_proj}) {
        for (const std::int32_t w : lin->weights)
            CHECK(dequantize_value(w, lin->w_qp) == 0.0);
        for (const std::int32_t b : lin->bias) CHECK(b == 0);
    }
    // zero input -> output decodes to ~0, i.e. codes sit at the zero point
    IntTensor x = IntTensor::filled(cfg.window, cfg.features, quantize_value(0.0, im.input_qp),
                                    im.input_qp);
    IntTensor y = int_forward(im, x).output;
    for (const std::int32_t c : y.data)
        CHECK(std::fabs(dequantize_value(c, im.output_qp)) <= 2.0 * im.output_qp.scale);
}

TEST_CASE("export/import round trip preserves int_forward bit-exactly") {
    TransformerModel m = calibrated_model(tiny_config(6, 2, 2, 8), 7);
    IntModel im = export_int(m);
    const std::string path =
        (std::filesystem::temp_directory_path() / "qforge_roundtrip.json").string();
    save_model(m, path, &im);
    IntModel im2 = load_int_model(path);

    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        Tensor x = random_window(m.config, rng);
        IntTensor xq = quantize_tensor(x, im.input_qp);
        CHECK(int_forward(im, xq).output.data == int_forward(im2, xq).output.data);
    }
    std::filesystem::remove(path);
}

TEST_CASE("bias quantization obeys the affine-product rule") {
    TransformerModel m = calibrated_model(tiny_config(4, 2, 3, 8), 9);
    IntModel im = export_int(m);
    const double bias_scale = im.emb_qp.scale * im.q_proj.w_qp.scale;
    for (std::size_t j = 0; j < im.q_proj.out_dim; ++j) {
        const double back = im.q_proj.bias[j] * bias_scale;
        CHECK(std::fabs(back - m.b_q.at(0, j)) <= bias_scale / 2.0 + 1e-12);
    }
}

TEST_CASE("int_linear zero-point annihilation and identity fixture") {
    SECTION("input stuck at the zero point leaves only the bias") {
        IntLinear layer;
        layer.in_dim = 3;
        layer.out_dim = 2;
        layer.w_qp = qparams_asymmetric(-1.0, 1.0, 8);
        layer.weights = {5, -3, 7, 2, 100, -90};
        layer.bias = {1000, -2000};
        QuantParams out = qparams_asymmetric(-1.0, 1.0, 8);
        layer.plan = plan_requant(0.001, out);
        QuantParams in_qp = qparams_asymmetric(-2.0, 2.0, 8);
        IntTensor x = IntTensor::filled(2, 3, in_qp.zero_point, in_qp);
        IntTensor y = int_linear(x, layer);
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(y.at(r, 0) == layer.plan.apply(1000));
            CHECK(y.at(r, 1) == layer.plan.apply(-2000));
        }
    }

    SECTION("identity-like weights with unit ratio pass codes through") {
        IntLinear layer;
        layer.in_dim = 4;
        layer.out_dim = 4;
        layer.w_qp.bits = 8;
        layer.w_qp.scale = 1.0;
        layer.w_qp.zero_point = 0;
        layer.weights.assign(16, 0);
        for (int i = 0; i < 4; ++i) layer.weights[i * 4 + i] = 1;
        layer.bias.assign(4, 0);
        QuantParams io;
        io.bits = 8;
        io.scale = 0.05;
        io.zero_point = 0;
        layer.plan = plan_requant(1.0, io);
        IntTensor x;
        x.rows = 2;
        x.cols = 4;
        x.qp = io;
        x.data = {5, -7, 100, -100, 0, 1, -1, 127};
        IntTensor y = int_linear(x, layer);
        CHECK(y.data == x.data);
    }

    SECTION("1x1x1 layer against the float path") {
        Rng rng(12);
        for (int i = 0; i < 200; ++i) {
            const QuantParams in_qp = qparams_asymmetric(-1.0, 1.5, 8);
            Tensor w = Tensor::from_rows({{rng.uniform(-1.0, 1.0)}});
            Tensor b = Tensor::from_rows({{rng.uniform(-0.3, 0.3)}});
            const QuantParams out_qp = qparams_asymmetric(-2.0, 2.0, 8);
            IntLinear layer = qforge::detail::export_linear(w, b, in_qp, out_qp, 8);
            IntTensor x;
            x.rows = 1;
            x.cols = 1;
            x.qp = in_qp;
            x.data = {static_cast<std::int32_t>(in_qp.qmin() +
                                                static_cast<std::int32_t>(rng.below(256)))};
            IntTensor y = int_linear(x, layer);
            // float path over the same quantized operands
            const double x_f = dequantize_value(x.data[0], in_qp);
            const double w_f = dequantize_value(layer.weights[0], layer.w_qp);
            const double want = clamp_val(x_f * w_f + b.at(0, 0), out_qp.dequant_min(),
                                          out_qp.dequant_max());
            CHECK(std::fabs(dequantize_value(y.data[0], out_qp) - want) <= out_qp.scale);
        }
    }
}

namespace {

IntSoftmax make_softmax(const QuantParams& scores_qp, const QuantParams& attn_qp) {
    IntSoftmax sm;
    sm.frac_bits = kSoftmaxFracBits;
    sm.in_qp = scores_qp;
    QuantParams fixed;
    fixed.bits = 8;
    fixed.scale = std::ldexp(1.0, -kSoftmaxFracBits);
    fixed.zero_point = 0;
    sm.in_plan = plan_requant(
        scores_qp.scale * std::log2(std::exp(1.0)) * std::ldexp(1.0, kSoftmaxFracBits), fixed);
    sm.exp2_lut = build_exp2_lut(kSoftmaxFracBits);
    sm.out_plan = plan_requant(std::ldexp(1.0, -kSoftmaxFracBits) / attn_qp.scale, attn_qp);
    return sm;
}

}  // namespace

TEST_CASE("integer softmax") {
    const QuantParams scores_qp = qparams_asymmetric(-4.0, 4.0, 8);
    const QuantParams attn_qp = qparams_asymmetric(0.0, 1.0, 8);
    IntSoftmax sm = make_softmax(scores_qp, attn_qp);
    const int two_f = 1 << sm.frac_bits;

    SECTION("constant rows are uniform with row sums near 2^f") {
        IntTensor scores = IntTensor::filled(3, 5, 17, scores_qp);
        const auto probs = int_softmax_fixed(scores, sm);
        for (std::size_t r = 0; r < 3; ++r) {
            std::int64_t sum = 0;
            for (std::size_t c = 0; c < 5; ++c) {
                CHECK(probs[r * 5 + c] == probs[r * 5]);
                sum += probs[r * 5 + c];
            }
            CHECK(sum >= two_f - 5);
            CHECK(sum <= two_f + 5);
        }
    }

    SECTION("a dominant score saturates its row") {
        IntTensor scores;
        scores.rows = 1;
        scores.cols = 2;
        scores.qp = scores_qp;
        scores.data = {scores_qp.qmax(), scores_qp.qmin()};
        const auto probs = int_softmax_fixed(scores, sm);
        CHECK(probs[0] >= two_f - 2);
        CHECK(probs[1] <= 1);
    }

    SECTION("random rows track the float softmax within the fixed-point budget") {
        Rng rng(15);
        const double tol = 2.0 / two_f + std::ldexp(1.0, 1 - 8);
        for (int trial = 0; trial < 10000 / 8; ++trial) {
            IntTensor scores;
            scores.rows = 8;
            scores.cols = 6;
            scores.qp = scores_qp;
            scores.data.resize(48);
            for (auto& v : scores.data)
                v = static_cast<std::int32_t>(scores_qp.qmin() +
                                              static_cast<std::int32_t>(rng.below(256)));
            IntTensor out = int_softmax(scores, sm);
            for (std::size_t r = 0; r < 8; ++r) {
                double mx = -1e300, sum = 0.0;
                std::vector<double> ref(6);
                for (std::size_t c = 0; c < 6; ++c) {
                    ref[c] = dequantize_value(scores.at(r, c), scores_qp);
                    mx = std::max(mx, ref[c]);
                }
                for (std::size_t c = 0; c < 6; ++c) {
                    ref[c] = std::exp(ref[c] - mx);
                    sum += ref[c];
                }
                for (std::size_t c = 0; c < 6; ++c) {
                    const double got = dequantize_value(out.at(r, c), attn_qp);
                    REQUIRE(std::fabs(got - ref[c] / sum) <= tol);
                }
            }
        }
    }
}

TEST_CASE("integer GAP rounding bound") {
    for (std::int64_t n : {2, 3, 5, 24}) {
        for (std::int64_t sum = -1000; sum <= 1000; sum += 7) {
            const std::int64_t out = div_round_half_up(sum, n);
            CHECK(std::llabs(n * out - sum) <= n - n / 2);  // = ceil(n/2); half-up bound
        }
    }
}

TEST_CASE("int_forward determinism, tally, and input contract") {
    TransformerModel m = calibrated_model(tiny_config(5, 2, 3, 8), 17);
    IntModel im = export_int(m);
    Rng rng(18);
    Tensor x = random_window(m.config, rng);
    IntTensor xq = quantize_tensor(x, im.input_qp);

    IntForwardResult r1 = int_forward(im, xq);
    IntForwardResult r2 = int_forward(im, xq);
    CHECK(r1.output.data == r2.output.data);

    const auto expect = stage_op_counts(m.config);
    REQUIRE(r1.tally.stages.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(r1.tally.stages[i].first == expect[i].first);
        CHECK(r1.tally.stages[i].second == expect[i].second);
    }

    IntTensor foreign = xq;
    foreign.qp.scale *= 2.0;
    CHECK_THROWS_AS(int_forward(im, foreign), ContractError);
}

TEST_CASE("integer path tracks the qat forward on a calibrated model") {
    ModelConfig cfg = tiny_config(8, 1, 1, 8);
    TransformerModel m = calibrated_model(cfg, 23, 100);
    IntModel im = export_int(m);
    const double s_out = im.output_qp.scale;

    // Wiring smoke test on an untrained model: the final projection maps
    // coarse bn2 codes onto a much finer output grid, so a looser gate is
    // used here; the pinned 3-code / 95% budget is asserted on the trained
    // fixture in the acceptance suite.
    Rng rng(24);
    std::size_t within = 0;
    const std::size_t total = 300;
    for (std::size_t i = 0; i < total; ++i) {
        Tensor x = random_window(cfg, rng);
        IntTensor xq = quantize_tensor(x, im.input_qp);
        const double got = dequantize_value(int_forward(im, xq).output.data[0], im.output_qp);
        Graph g;
        g.set_recording(false);
        const double want = forward(g, m, x, ForwardMode::qat, Phase::eval).at(0, 0);
        if (std::fabs(got - want) <= 3.0 * s_out) ++within;
    }
    CHECK(within >= total * 85 / 100);
}

TEST_CASE("golden vectors include the zero vector and reproduce outputs") {
    TransformerModel m = calibrated_model(tiny_config(), 31);
    IntModel im = export_int(m);
    GoldenVectors gv = make_golden_vectors(im, 12, 5);
    REQUIRE(gv.count == 12);
    const std::int32_t zero = quantize_value(0.0, im.input_qp);
    for (const std::int32_t v : gv.inputs[0]) CHECK(v == zero);
    for (std::size_t v = 0; v < gv.count; ++v) {
        IntTensor x;
        x.rows = im.config.window;
        x.cols = im.config.features;
        x.qp = im.input_qp;
        x.data = gv.inputs[v];
        CHECK(int_forward(im, x).output.data == gv.outputs[v]);
    }
}
