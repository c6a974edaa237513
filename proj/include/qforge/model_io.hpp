// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "qforge/common.hpp"
#include "qforge/intrt.hpp"
#include "qforge/model.hpp"

namespace qforge {

using json = nlohmann::ordered_json;

// ---- json mappers ----------------------------------------------------------

inline json config_to_json(const ModelConfig& cfg) {
    return json{{"task", task_name(cfg.task)}, {"window", cfg.window},
                {"features", cfg.features},    {"outputs", cfg.outputs},
                {"d_model", cfg.d_model},      {"bits", cfg.bits}};
}

inline ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.task = task_from_name(j.at("task").get<std::string>());
    cfg.window = j.at("window").get<std::size_t>();
    cfg.features = j.at("features").get<std::size_t>();
    cfg.outputs = j.at("outputs").get<std::size_t>();
    cfg.d_model = j.at("d_model").get<std::size_t>();
    cfg.bits = j.at("bits").get<int>();
    cfg.validate();
    return cfg;
}

inline std::string config_hash(const ModelConfig& cfg) {
    return hex64(fnv1a64(config_to_json(cfg).dump()));
}

inline json tensor_to_json(const Tensor& t) {
    return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

inline Tensor tensor_from_json(const json& j, bool requires_grad = false) {
    Tensor t = Tensor::zeros(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto& d = j.at("data");
    if (d.size() != t.size()) throw SchemaError("tensor data length mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = d[i].get<double>();
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

inline json qp_to_json(const QuantParams& qp) {
    return json{{"bits", qp.bits},
                {"scale", qp.scale},
                {"zero_point", qp.zero_point},
                {"scheme", qp.scheme == QuantScheme::asymmetric ? "asymmetric" : "symmetric"}};
}

inline QuantParams qp_from_json(const json& j) {
    QuantParams qp;
    qp.bits = j.at("bits").get<int>();
    qp.scale = j.at("scale").get<double>();
    qp.zero_point = j.at("zero_point").get<std::int32_t>();
    qp.scheme = j.at("scheme").get<std::string>() == "symmetric" ? QuantScheme::symmetric
                                                                 : QuantScheme::asymmetric;
    return qp;
}

inline json plan_to_json(const RequantPlan& p) {
    return json{{"multiplier", p.multiplier}, {"shift", p.shift}, {"out_qp", qp_to_json(p.out)}};
}

inline RequantPlan plan_from_json(const json& j) {
    RequantPlan p;
    p.multiplier = j.at("multiplier").get<std::int64_t>();
    p.shift = j.at("shift").get<int>();
    p.out = qp_from_json(j.at("out_qp"));
    return p;
}

inline json linear_to_json(const IntLinear& l) {
    return json{{"in_dim", l.in_dim},   {"out_dim", l.out_dim}, {"w_qp", qp_to_json(l.w_qp)},
                {"weights", l.weights}, {"bias", l.bias},       {"plan", plan_to_json(l.plan)}};
}

inline IntLinear linear_from_json(const json& j) {
    IntLinear l;
    l.in_dim = j.at("in_dim").get<std::size_t>();
    l.out_dim = j.at("out_dim").get<std::size_t>();
    l.w_qp = qp_from_json(j.at("w_qp"));
    l.weights = j.at("weights").get<std::vector<std::int32_t>>();
    l.bias = j.at("bias").get<std::vector<std::int32_t>>();
    l.plan = plan_from_json(j.at("plan"));
    if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim)
        throw SchemaError("linear layer array sizes inconsistent");
    return l;
}

inline json rescale_to_json(const CodeRescale& r) {
    return json{{"in_qp", qp_to_json(r.in_qp)}, {"plan", plan_to_json(r.plan)}};
}

inline CodeRescale rescale_from_json(const json& j) {
    CodeRescale r;
    r.in_qp = qp_from_json(j.at("in_qp"));
    r.plan = plan_from_json(j.at("plan"));
    return r;
}

inline json folded_bn_to_json(const FoldedBatchNorm& bn) {
    return json{{"in_qp", qp_to_json(bn.in_qp)},
                {"out_qp", qp_to_json(bn.out_qp)},
                {"multiplier", bn.multiplier},
                {"shift", bn.shift},
                {"offset", bn.offset}};
}

inline FoldedBatchNorm folded_bn_from_json(const json& j) {
    FoldedBatchNorm bn;
    bn.in_qp = qp_from_json(j.at("in_qp"));
    bn.out_qp = qp_from_json(j.at("out_qp"));
    bn.multiplier = j.at("multiplier").get<std::vector<std::int32_t>>();
    bn.shift = j.at("shift").get<std::vector<std::int32_t>>();
    bn.offset = j.at("offset").get<std::vector<std::int32_t>>();
    return bn;
}

inline json int_model_to_json(const IntModel& im) {
    json j;
    j["input_qp"] = qp_to_json(im.input_qp);
    j["output_qp"] = qp_to_json(im.output_qp);
    j["emb_qp"] = qp_to_json(im.emb_qp);
    j["q_qp"] = qp_to_json(im.q_qp);
    j["k_qp"] = qp_to_json(im.k_qp);
    j["v_qp"] = qp_to_json(im.v_qp);
    j["scores_qp"] = qp_to_json(im.scores_qp);
    j["attn_qp"] = qp_to_json(im.attn_qp);
    j["mix_qp"] = qp_to_json(im.mix_qp);
    j["attn_out_qp"] = qp_to_json(im.attn_out_qp);
    j["res1_qp"] = qp_to_json(im.res1_qp);
    j["bn1_qp"] = qp_to_json(im.bn1_qp);
    j["ffn_hidden_qp"] = qp_to_json(im.ffn_hidden_qp);
    j["ffn_down_qp"] = qp_to_json(im.ffn_down_qp);
    j["res2_qp"] = qp_to_json(im.res2_qp);
    j["bn2_qp"] = qp_to_json(im.bn2_qp);
    j["pe_codes"] = im.pe_codes;
    j["linears"] = json{{"embed", linear_to_json(im.embed)},
                        {"q_proj", linear_to_json(im.q_proj)},
                        {"k_proj", linear_to_json(im.k_proj)},
                        {"v_proj", linear_to_json(im.v_proj)},
                        {"attn_out", linear_to_json(im.attn_out)},
                        {"ffn_up", linear_to_json(im.ffn_up)},
                        {"ffn_down", linear_to_json(im.ffn_down)},
                        {"out_proj", linear_to_json(im.out_proj)}};
    j["scores_plan"] = plan_to_json(im.scores_plan);
    j["softmax"] = json{{"frac_bits", im.softmax.frac_bits},
                        {"in_qp", qp_to_json(im.softmax.in_qp)},
                        {"in_plan", plan_to_json(im.softmax.in_plan)},
                        {"exp2_lut", im.softmax.exp2_lut},
                        {"out_plan", plan_to_json(im.softmax.out_plan)}};
    j["mix_plan"] = plan_to_json(im.mix_plan);
    j["gap_qp"] = qp_to_json(im.gap_qp);
    j["gap_rescale"] = rescale_to_json(im.gap_rescale);
    j["res1_a"] = rescale_to_json(im.res1_a);
    j["res1_b"] = rescale_to_json(im.res1_b);
    j["res2_a"] = rescale_to_json(im.res2_a);
    j["res2_b"] = rescale_to_json(im.res2_b);
    j["bn1"] = folded_bn_to_json(im.bn1);
    j["bn2"] = folded_bn_to_json(im.bn2);
    j["ffn_relu_floor"] = im.ffn_relu_floor;
    return j;
}

inline IntModel int_model_from_json(const ModelConfig& cfg, const json& j) {
    IntModel im;
    im.config = cfg;
    im.input_qp = qp_from_json(j.at("input_qp"));
    im.output_qp = qp_from_json(j.at("output_qp"));
    im.emb_qp = qp_from_json(j.at("emb_qp"));
    im.q_qp = qp_from_json(j.at("q_qp"));
    im.k_qp = qp_from_json(j.at("k_qp"));
    im.v_qp = qp_from_json(j.at("v_qp"));
    im.scores_qp = qp_from_json(j.at("scores_qp"));
    im.attn_qp = qp_from_json(j.at("attn_qp"));
    im.mix_qp = qp_from_json(j.at("mix_qp"));
    im.attn_out_qp = qp_from_json(j.at("attn_out_qp"));
    im.res1_qp = qp_from_json(j.at("res1_qp"));
    im.bn1_qp = qp_from_json(j.at("bn1_qp"));
    im.ffn_hidden_qp = qp_from_json(j.at("ffn_hidden_qp"));
    im.ffn_down_qp = qp_from_json(j.at("ffn_down_qp"));
    im.res2_qp = qp_from_json(j.at("res2_qp"));
    im.bn2_qp = qp_from_json(j.at("bn2_qp"));
    im.pe_codes = j.at("pe_codes").get<std::vector<std::int32_t>>();
    const json& lin = j.at("linears");
    im.embed = linear_from_json(lin.at("embed"));
    im.q_proj = linear_from_json(lin.at("q_proj"));
    im.k_proj = linear_from_json(lin.at("k_proj"));
    im.v_proj = linear_from_json(lin.at("v_proj"));
    im.attn_out = linear_from_json(lin.at("attn_out"));
    im.ffn_up = linear_from_json(lin.at("ffn_up"));
    im.ffn_down = linear_from_json(lin.at("ffn_down"));
    im.out_proj = linear_from_json(lin.at("out_proj"));
    im.scores_plan = plan_from_json(j.at("scores_plan"));
    const json& sm = j.at("softmax");
    im.softmax.frac_bits = sm.at("frac_bits").get<int>();
    im.softmax.in_qp = qp_from_json(sm.at("in_qp"));
    im.softmax.in_plan = plan_from_json(sm.at("in_plan"));
    im.softmax.exp2_lut = sm.at("exp2_lut").get<std::vector<std::int32_t>>();
    im.softmax.out_plan = plan_from_json(sm.at("out_plan"));
    im.mix_plan = plan_from_json(j.at("mix_plan"));
    im.gap_qp = qp_from_json(j.at("gap_qp"));
    im.gap_rescale = rescale_from_json(j.at("gap_rescale"));
    im.res1_a = rescale_from_json(j.at("res1_a"));
    im.res1_b = rescale_from_json(j.at("res1_b"));
    im.res2_a = rescale_from_json(j.at("res2_a"));
    im.res2_b = rescale_from_json(j.at("res2_b"));
    im.bn1 = folded_bn_from_json(j.at("bn1"));
    im.bn2 = folded_bn_from_json(j.at("bn2"));
    im.ffn_relu_floor = j.at("ffn_relu_floor").get<std::int32_t>();
    return im;
}

// ---- whole-model document ---------------------------------------------------

// One schema for both artifacts: cmd_train writes the float/QAT document,
// and the integer export adds the "int" section to the same layout.
inline json model_to_json(TransformerModel& m, const IntModel* im = nullptr) {
    json j;
    j["schema"] = "qforge-model-v1";
    j["config"] = config_to_json(m.config);
    j["config_hash"] = config_hash(m.config);
    json weights;
    weights["input_proj.w"] = tensor_to_json(m.w_in);
    weights["input_proj.b"] = tensor_to_json(m.b_in);
    weights["q_proj.w"] = tensor_to_json(m.w_q);
    weights["q_proj.b"] = tensor_to_json(m.b_q);
    weights["k_proj.w"] = tensor_to_json(m.w_k);
    weights["k_proj.b"] = tensor_to_json(m.b_k);
    weights["v_proj.w"] = tensor_to_json(m.w_v);
    weights["v_proj.b"] = tensor_to_json(m.b_v);
    weights["attn_out.w"] = tensor_to_json(m.w_attn_out);
    weights["attn_out.b"] = tensor_to_json(m.b_attn_out);
    weights["ffn_up.w"] = tensor_to_json(m.w_ffn_up);
    weights["ffn_up.b"] = tensor_to_json(m.b_ffn_up);
    weights["ffn_down.w"] = tensor_to_json(m.w_ffn_down);
    weights["ffn_down.b"] = tensor_to_json(m.b_ffn_down);
    weights["output_proj.w"] = tensor_to_json(m.w_out);
    weights["output_proj.b"] = tensor_to_json(m.b_out);
    weights["bn1.gamma"] = tensor_to_json(m.gamma1);
    weights["bn1.beta"] = tensor_to_json(m.beta1);
    weights["bn2.gamma"] = tensor_to_json(m.gamma2);
    weights["bn2.beta"] = tensor_to_json(m.beta2);
    j["weights"] = std::move(weights);
    json bn;
    for (const auto& [name, stats] : {std::pair<const char*, const BatchNormStats&>{"bn1", m.bn1},
                                      {"bn2", m.bn2}}) {
        bn[name] = json{{"running_mean", stats.running_mean},
                        {"running_var", stats.running_var},
                        {"initialized", stats.initialized}};
    }
    j["batchnorm"] = std::move(bn);
    json obs;
    m.observers.for_each([&](const char* name, RangeObserver& o) {
        obs[name] = json{{"alpha", o.alpha},
                         {"beta", o.beta},
                         {"seen", o.seen},
                         {"frozen", o.frozen},
                         {"rule", o.rule == ObserverRule::min_max ? "min_max" : "ema"},
                         {"momentum", o.momentum}};
    });
    j["observers"] = std::move(obs);
    if (im != nullptr) j["int"] = int_model_to_json(*im);
    return j;
}

inline TransformerModel model_from_json(const json& j) {
    if (j.value("schema", "") != "qforge-model-v1")
        throw SchemaError("unrecognized model schema");
    TransformerModel m = build(config_from_json(j.at("config")), 0);
    const json& w = j.at("weights");
    auto load = [&](const char* name, Tensor& dst) { dst = tensor_from_json(w.at(name), true); };
    load("input_proj.w", m.w_in);
    load("input_proj.b", m.b_in);
    load("q_proj.w", m.w_q);
    load("q_proj.b", m.b_q);
    load("k_proj.w", m.w_k);
    load("k_proj.b", m.b_k);
    load("v_proj.w", m.w_v);
    load("v_proj.b", m.b_v);
    load("attn_out.w", m.w_attn_out);
    load("attn_out.b", m.b_attn_out);
    load("ffn_up.w", m.w_ffn_up);
    load("ffn_up.b", m.b_ffn_up);
    load("ffn_down.w", m.w_ffn_down);
    load("ffn_down.b", m.b_ffn_down);
    load("output_proj.w", m.w_out);
    load("output_proj.b", m.b_out);
    load("bn1.gamma", m.gamma1);
    load("bn1.beta", m.beta1);
    load("bn2.gamma", m.gamma2);
    load("bn2.beta", m.beta2);
    const json& bn = j.at("batchnorm");
    auto load_bn = [&](const char* name, BatchNormStats& stats) {
        stats.running_mean = bn.at(name).at("running_mean").get<std::vector<double>>();
        stats.running_var = bn.at(name).at("running_var").get<std::vector<double>>();
        stats.initialized = bn.at(name).at("initialized").get<bool>();
    };
    load_bn("bn1", m.bn1);
    load_bn("bn2", m.bn2);
    const json& obs = j.at("observers");
    m.observers.for_each([&](const char* name, RangeObserver& o) {
        const json& oj = obs.at(name);
        o.alpha = oj.at("alpha").get<double>();
        o.beta = oj.at("beta").get<double>();
        o.seen = oj.at("seen").get<bool>();
        o.frozen = oj.at("frozen").get<bool>();
        o.rule = oj.at("rule").get<std::string>() == "ema" ? ObserverRule::ema
                                                           : ObserverRule::min_max;
        o.momentum = oj.at("momentum").get<double>();
    });
    return m;
}

inline void save_model(TransformerModel& m, const std::string& path,
                       const IntModel* im = nullptr) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << model_to_json(m, im).dump(1) << "\n";
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline TransformerModel load_model(const std::string& path) {
    return model_from_json(load_json_file(path));
}

inline IntModel load_int_model(const std::string& path) {
    const json j = load_json_file(path);
    if (!j.contains("int"))
        throw SchemaError(path + ": no integer export section; run export first");
    return int_model_from_json(config_from_json(j.at("config")), j.at("int"));
}

// Golden vectors for the generated testbench: inputs (window codes, row
// major) and expected output codes, one integer per line, vector after
// vector. Vector 0 is always the all-zero real input.
struct GoldenVectors {
    std::size_t count = 0;
    std::vector<std::vector<std::int32_t>> inputs;
    std::vector<std::vector<std::int32_t>> outputs;
};

inline GoldenVectors make_golden_vectors(const IntModel& im, std::size_t count,
                                         std::uint64_t seed) {
    GoldenVectors gv;
    Rng rng(seed);
    for (std::size_t v = 0; v < count; ++v) {
        IntTensor x;
        x.rows = im.config.window;
        x.cols = im.config.features;
        x.qp = im.input_qp;
        x.data.resize(x.rows * x.cols);
        if (v == 0) {
            const std::int32_t zero = quantize_value(0.0, im.input_qp);
            std::fill(x.data.begin(), x.data.end(), zero);
        } else {
            const std::int64_t span =
                static_cast<std::int64_t>(im.input_qp.qmax()) - im.input_qp.qmin() + 1;
            for (auto& c : x.data)
                c = static_cast<std::int32_t>(im.input_qp.qmin() +
                                              static_cast<std::int64_t>(rng.below(span)));
        }
        gv.inputs.push_back(x.data);
        gv.outputs.push_back(int_forward(im, x).output.data);
    }
    gv.count = count;
    return gv;
}

}  // namespace qforge
