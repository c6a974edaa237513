// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one function per criterion, each printing a single
// pass/fail line. Run all (no args) or one criterion by number.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "qforge/codegen.hpp"
#include "qforge/data.hpp"
#include "qforge/hwmodel.hpp"
#include "qforge/intrt.hpp"
#include "qforge/model.hpp"
#include "qforge/model_io.hpp"
#include "qforge/quant.hpp"
#include "qforge/rng.hpp"
#include "qforge/search.hpp"
#include "qforge/tensor.hpp"
#include "qforge/train.hpp"

using namespace qforge;
namespace fs = std::filesystem;

namespace {

// ---- shared fixture helpers ---------------------------------------------------

struct TaskFixture {
    WindowSet train, val, test;
    MinMax denorm;
    ModelConfig cfg;
};

TaskFixture sine_fixture(std::size_t window, std::size_t d_model, int bits) {
    SeriesDataset ds = synth_task("sine-forecast", 0);
    auto splits = split_chronological(ds, {});
    TaskFixture f;
    f.denorm.fit(splits[0], 0, splits[0].steps());
    for (auto& p : splits) f.denorm.transform(p);
    f.train = make_windows(splits[0], window);
    f.val = make_windows(splits[1], window);
    f.test = make_windows(splits[2], window);
    f.cfg.window = window;
    f.cfg.features = 1;
    f.cfg.outputs = 1;
    f.cfg.d_model = d_model;
    f.cfg.bits = bits;
    f.cfg.task = Task::forecasting;
    return f;
}

struct ClassFixture {
    WindowSet train, val, test;
    ModelConfig cfg;
};

ClassFixture shapelet_fixture(std::size_t d_model, int bits) {
    SeriesDataset ds = synth_task("shapelet-classify", 0);
    WindowSet all = make_class_windows(ds, 32);
    auto parts = split_windows_stratified(all, {}, 0);
    ClassFixture f;
    f.train = std::move(parts[0]);
    f.val = std::move(parts[1]);
    f.test = std::move(parts[2]);
    f.cfg.window = 32;
    f.cfg.features = 1;
    f.cfg.outputs = 3;
    f.cfg.d_model = d_model;
    f.cfg.bits = bits;
    f.cfg.task = Task::classification;
    return f;
}

double int_rmse(const IntModel& im, const TaskFixture& f) {
    std::vector<Tensor> preds;
    for (const Tensor& x : f.test.inputs) {
        IntTensor xq = quantize_tensor(x, im.input_qp);
        preds.push_back(dequantize_tensor(int_forward(im, xq).output));
    }
    return metric_forecast_rmse(preds, f.test.targets, &f.denorm, {0});
}

double float_rmse(TransformerModel& m, const TaskFixture& f, ForwardMode mode) {
    std::vector<Tensor> preds;
    for (const Tensor& x : f.test.inputs) {
        Graph g;
        g.set_recording(false);
        preds.push_back(forward(g, m, x, mode, Phase::eval));
    }
    return metric_forecast_rmse(preds, f.test.targets, &f.denorm, {0});
}

double int_accuracy(const IntModel& im, const ClassFixture& f) {
    std::vector<std::size_t> cls;
    for (const Tensor& x : f.test.inputs) {
        IntTensor xq = quantize_tensor(x, im.input_qp);
        cls.push_back(argmax_row(dequantize_tensor(int_forward(im, xq).output)));
    }
    return metric_accuracy(cls, f.test.class_targets);
}

double float_accuracy(TransformerModel& m, const ClassFixture& f, ForwardMode mode) {
    std::vector<std::size_t> cls;
    for (const Tensor& x : f.test.inputs) {
        Graph g;
        g.set_recording(false);
        cls.push_back(argmax_row(forward(g, m, x, mode, Phase::eval)));
    }
    return metric_accuracy(cls, f.test.class_targets);
}

// ---- criterion 1 ---------------------------------------------------------------

bool criterion_params(std::string& detail) {
    ModelConfig c;
    c.window = 24;
    auto count = [&](std::size_t m, std::size_t k, std::size_t d) {
        c.features = m;
        c.outputs = k;
        c.d_model = d;
        return count_parameters(c);
    };
    const bool table = count(1, 1, 16) == 3329 && count(9, 6, 8) == 1006 &&
                       count(3, 6, 40) == 20126 && count(17, 10, 8) == 1106 &&
                       count(8, 1, 24) == 7465;
    // Documented expected mismatch: the published 897 needs m = 1; the
    // described seven-feature input gives 945.
    const bool airu = count(7, 1, 8) == 945 && count(1, 1, 8) == 897;
    detail = "PeMS/UCIHAR/WISDM/ALFA/SKAB exact; AirU 897 matches m=1 (m=7 gives 945)";
    return table && airu;
}

// ---- criterion 2 ---------------------------------------------------------------

bool criterion_energy(std::string& detail) {
    const struct {
        double p, t, e;
    } rows[] = {{65.0, 1.203, 0.078}, {64.0, 0.570, 0.036}, {65.0, 1.034, 0.067},
                {71.0, 12.04, 0.855}, {62.0, 0.527, 0.033}, {68.0, 2.261, 0.154}};
    double worst = 0.0;
    for (const auto& r : rows)
        worst = std::max(worst, std::fabs(energy_mj(r.p, r.t) - r.e));
    std::ostringstream os;
    os << "max |P*T - E| = " << worst << " mJ (limit 0.0005)";
    detail = os.str();
    return worst <= 0.0005;
}

// ---- criterion 3 ---------------------------------------------------------------

bool criterion_quant(std::string& detail) {
    Rng rng(3);
    for (int bits : {4, 6, 8}) {
        const QuantParams qp = qparams_asymmetric(-1.7, 2.4, bits);
        const double lo = qp.dequant_min(), hi = qp.dequant_max();
        for (int i = 0; i < 100000; ++i) {
            const double x = rng.uniform(lo, hi);
            const double back = dequantize_value(quantize_value(x, qp), qp);
            if (std::fabs(x - back) > qp.scale / 2.0 + 1e-12) {
                detail = "round-trip bound violated at b=" + std::to_string(bits);
                return false;
            }
        }
    }
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.uniform(-50.0, 50.0);
        const double b = rng.uniform(-50.0, 50.0);
        if (std::max(std::fabs(a), std::fabs(b)) == 0.0) continue;
        for (int bits : {4, 6, 8})
            if (qparams_symmetric(a, b, bits).zero_point != 0) {
                detail = "symmetric zero point nonzero";
                return false;
            }
    }
    QuantParams wide;
    wide.bits = 8;
    wide.scale = 1.0;
    wide.zero_point = 0;
    std::int64_t max_err = 0;
    double worst_rel = 0.0;
    for (int i = 0; i < 1000000; ++i) {
        const double ratio = std::exp(rng.uniform(std::log(1e-5), std::log(4.0)));
        const RequantPlan plan = plan_requant(ratio, wide);
        worst_rel = std::max(worst_rel, std::fabs(plan.encoded_ratio() - ratio) / ratio);
        const std::int64_t acc = static_cast<std::int64_t>(rng.below(1u << 22)) - (1 << 21);
        const std::int64_t got = plan.apply_raw(acc);
        const std::int64_t want = round_half_away(static_cast<double>(acc) * ratio);
        max_err = std::max<std::int64_t>(max_err, std::llabs(got - want));
    }
    std::ostringstream os;
    os << "round-trip/symmetric ok; requant max |err| = " << max_err
       << " (limit 1), ratio rel err " << worst_rel << " (limit 2^-13)";
    detail = os.str();
    return max_err <= 1 && worst_rel <= std::ldexp(1.0, -13);
}

// ---- criterion 4 ---------------------------------------------------------------

bool grads_close(const std::vector<Tensor>& leaves, const std::function<double()>& eval,
                 double tol = 1e-4) {
    for (const Tensor& leaf : leaves) {
        for (std::size_t i = 0; i < leaf.size(); ++i) {
            Tensor mut = leaf;
            const double orig = mut.data()[i];
            mut.data()[i] = orig + 1e-4;
            const double fp = eval();
            mut.data()[i] = orig - 1e-4;
            const double fm = eval();
            mut.data()[i] = orig;
            const double fd = (fp - fm) / 2e-4;
            const double denom = std::max({1.0, std::fabs(fd), std::fabs(leaf.grad()[i])});
            if (std::fabs(leaf.grad()[i] - fd) / denom > tol) return false;
        }
    }
    return true;
}

bool criterion_gradients(std::string& detail) {
    // (a) mixed-op micro-instances
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(seed + 1);
        const std::size_t n = 2 + rng.below(5);
        const std::size_t d = 2 + rng.below(5);
        const std::size_t r = 2 + rng.below(5);
        auto rand_t = [&](std::size_t rows, std::size_t cols, bool grad) {
            Tensor t = Tensor::zeros(rows, cols);
            for (double& v : t.data()) v = rng.uniform(-1.2, 1.2);
            if (grad) t.set_requires_grad(true);
            return t;
        };
        Tensor a = rand_t(n, d, true), b = rand_t(d, r, true), bias = rand_t(1, r, true);
        Tensor gamma = rand_t(1, r, true), beta = rand_t(1, r, true);
        Tensor target = rand_t(1, r, false);
        auto run = [&](Graph& g, BatchNormStats& st) {
            Tensor h = relu(g, add_bias(g, matmul(g, a, b), bias));
            Tensor bn = batchnorm(g, h, gamma, beta, st, BnMode::train);
            Tensor sm = softmax_rows(g, mul_scalar(g, bn, 0.8));
            Tensor blended = clamp(g, add(g, bn, sm), -2.0, 2.0);
            return mse_loss(g, global_avg_pool(g, transpose(g, transpose(g, blended))), target);
        };
        Graph g;
        BatchNormStats st;
        g.backward(run(g, st));
        auto eval = [&]() {
            Graph fresh;
            fresh.set_recording(false);
            BatchNormStats fresh_st;
            return run(fresh, fresh_st).data()[0];
        };
        if (!grads_close({a, b, bias, gamma, beta}, eval)) {
            detail = "op-level finite differences diverged at seed " + std::to_string(seed);
            return false;
        }
        ++checked;
    }

    // (b) full forward pass of the architecture in its differentiable
    // (full-precision) configuration, gradients for every parameter
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        ModelConfig cfg;
        cfg.window = 3;
        cfg.features = 2;
        cfg.outputs = 2;
        cfg.d_model = 3;
        TransformerModel m = build(cfg, seed + 100);
        Rng rng(seed + 200);
        Tensor x = Tensor::zeros(3, 2);
        for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
        x.set_requires_grad(true);
        Tensor target = Tensor::from_rows({{0.3, -0.4}});
        auto run = [&](Graph& g, TransformerModel& model) {
            return mse_loss(g, forward(g, model, x, ForwardMode::full_precision, Phase::train),
                            target);
        };
        Graph g;
        g.backward(run(g, m));
        // train-mode BatchNorm reads batch statistics only, so the running
        // EMA updates during repeated evals do not perturb the value.
        auto eval = [&]() {
            Graph fg;
            fg.set_recording(false);
            return run(fg, m).data()[0];
        };
        std::vector<Tensor> leaves = m.parameters();
        leaves.push_back(x);
        if (!grads_close(leaves, eval)) {
            detail = "full-forward finite differences diverged at seed " + std::to_string(seed);
            return false;
        }
        ++checked;
    }
    detail = std::to_string(checked) + " micro-instances within rel. err 1e-4";
    return checked == 100;
}

// ---- criterion 5 ---------------------------------------------------------------

bool criterion_int_consistency(std::string& detail) {
    TaskFixture f = sine_fixture(24, 8, 8);
    TransformerModel model = build(f.cfg, 501);
    TrainSpec spec;
    spec.batch_size = 32;
    spec.lr = 3e-3;
    spec.max_epochs = 30;
    spec.patience = 10;
    spec.seed = 501;
    FitResult fr = fit(model, f.train, f.val, spec, ForwardMode::qat);
    TransformerModel best = fr.model;
    best.observers.freeze();
    IntModel im = export_int(best);
    const double s_out = im.output_qp.scale;

    Rng rng(502);
    const double lo = im.input_qp.dequant_min(), hi = im.input_qp.dequant_max();
    std::size_t within = 0;
    const std::size_t total = 1000;
    double worst = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        Tensor x = Tensor::zeros(f.cfg.window, 1);
        for (double& v : x.data()) v = rng.uniform(lo, hi);
        IntTensor xq = quantize_tensor(x, im.input_qp);
        const double got = dequantize_value(int_forward(im, xq).output.data[0], im.output_qp);
        Graph g;
        g.set_recording(false);
        const double want = forward(g, best, x, ForwardMode::qat, Phase::eval).at(0, 0);
        const double err = std::fabs(got - want);
        worst = std::max(worst, err);
        if (err <= 3.0 * s_out) ++within;
    }
    std::ostringstream os;
    os << within << "/1000 windows within 3*S_out (need 950); worst |err| = " << worst / s_out
       << " codes";
    detail = os.str();
    return within >= 950;
}

// ---- criterion 6 ---------------------------------------------------------------

bool criterion_qat_viability(std::string& detail) {
    // forecasting: integer RMSE within 25% of the float baseline
    TaskFixture f = sine_fixture(24, 8, 8);
    TrainSpec spec;
    spec.batch_size = 32;
    spec.lr = 3e-3;
    spec.max_epochs = 60;
    spec.patience = 10;
    spec.seed = 601;

    TransformerModel fmodel = build(f.cfg, 601);
    FitResult ffr = fit(fmodel, f.train, f.val, spec, ForwardMode::full_precision);
    double rmse_float = float_rmse(ffr.model, f, ForwardMode::full_precision);

    TransformerModel qmodel = build(f.cfg, 601);
    FitResult qfr = fit(qmodel, f.train, f.val, spec, ForwardMode::qat);
    TransformerModel qbest = qfr.model;
    qbest.observers.freeze();
    IntModel im = export_int(qbest);
    const double rmse_int = int_rmse(im, f);

    // classification: integer accuracy within 5 points of float
    ClassFixture cf = shapelet_fixture(8, 8);
    TrainSpec cspec;
    cspec.batch_size = 16;
    cspec.lr = 2e-3;
    cspec.max_epochs = 40;
    cspec.patience = 10;
    cspec.seed = 602;
    cspec.loss = LossKind::cross_entropy;

    TransformerModel cfloat = build(cf.cfg, 602);
    FitResult cffr = fit(cfloat, cf.train, cf.val, cspec, ForwardMode::full_precision);
    const double acc_float = float_accuracy(cffr.model, cf, ForwardMode::full_precision);

    TransformerModel cq = build(cf.cfg, 602);
    FitResult cqfr = fit(cq, cf.train, cf.val, cspec, ForwardMode::qat);
    TransformerModel cqbest = cqfr.model;
    cqbest.observers.freeze();
    IntModel cim = export_int(cqbest);
    const double acc_int = int_accuracy(cim, cf);

    std::ostringstream os;
    os << "sine rmse float=" << rmse_float << " int=" << rmse_int << " (ratio "
       << rmse_int / rmse_float << ", limit 1.25); shapelet acc float=" << acc_float
       << " int=" << acc_int << " (drop " << acc_float - acc_int << ", limit 0.05)";

    // optional, non-gating: report on public CSVs when supplied
    const fs::path pems = fs::path("datasets") / "pems.csv";
    if (!fs::exists(pems)) os << "; real-dataset report skipped (CSV not supplied)";
    detail = os.str();
    return rmse_int <= 1.25 * rmse_float && acc_int >= acc_float - 0.05;
}

// ---- criterion 7 ---------------------------------------------------------------

bool criterion_pareto(std::string& detail) {
    Rng rng(7);
    for (int ledger_i = 0; ledger_i < 1000; ++ledger_i) {
        const std::size_t count = 1 + rng.below(200);
        std::vector<Trial> ledger;
        for (std::size_t i = 0; i < count; ++i) {
            Trial t;
            t.index = i;
            t.status = rng.uniform01() < 0.1 ? TrialStatus::rejected_resources
                                             : TrialStatus::completed;
            t.val_loss = rng.uniform(0.0, 2.0);
            t.hw.energy_mj = rng.uniform(0.0, 1.0);
            if (rng.uniform01() < 0.05 && i > 0) {  // exercise exact ties
                t.val_loss = ledger[i - 1].val_loss;
                t.hw.energy_mj = ledger[i - 1].hw.energy_mj;
            }
            ledger.push_back(t);
        }
        std::vector<std::size_t> brute;
        for (std::size_t i = 0; i < count; ++i) {
            if (ledger[i].status != TrialStatus::completed) continue;
            bool dom = false;
            for (std::size_t j = 0; j < count && !dom; ++j)
                if (i != j && ledger[j].status == TrialStatus::completed)
                    dom = dominates(ledger[j].val_loss, ledger[j].hw.energy_mj,
                                    ledger[i].val_loss, ledger[i].hw.energy_mj);
            if (!dom) brute.push_back(i);
        }
        if (pareto_front(ledger).indices != brute) {
            detail = "front mismatch on random ledger " + std::to_string(ledger_i);
            return false;
        }
    }
    detail = "1000 random ledgers match brute-force dominance enumeration";
    return true;
}

// ---- criterion 8 ---------------------------------------------------------------

bool criterion_deployability(std::string& detail) {
    IntModel im;
    im.config.window = 24;
    im.config.features = 1;
    im.config.outputs = 1;
    im.config.d_model = 64;
    im.config.bits = 8;
    const HwEstimate est = estimate_hw(im, platform_ice40up5k());
    if (est.deployable) {
        detail = "d_model=64, b=8 was not rejected on ice40up5k";
        return false;
    }
    bool has_percent = false;
    for (const auto& r : est.reasons) has_percent = has_percent || r.find('%') != std::string::npos;
    if (!has_percent || est.reasons.empty()) {
        detail = "rejection reasons lack overshoot percentages";
        return false;
    }

    // every front member satisfies all budgets
    Rng rng(8);
    std::vector<Trial> ledger;
    for (std::size_t i = 0; i < 300; ++i) {
        Trial t;
        t.index = i;
        t.val_loss = rng.uniform(0.0, 1.0);
        t.hw.energy_mj = rng.uniform(0.0, 1.0);
        if (i % 3 == 0) {
            t.status = TrialStatus::rejected_resources;
            t.hw.deployable = false;
            t.hw.energy_mj = std::numeric_limits<double>::quiet_NaN();
        } else {
            t.status = TrialStatus::completed;
            t.hw.deployable = true;
        }
        ledger.push_back(t);
    }
    for (const std::size_t i : pareto_front(ledger).indices)
        if (!ledger[i].hw.deployable) {
            detail = "a non-deployable trial reached the front";
            return false;
        }
    std::string joined;
    for (const auto& r : est.reasons) joined += (joined.empty() ? "" : ", ") + r;
    detail = "d64/b8 on ice40up5k rejected [" + joined + "]; fronts respect budgets";
    return true;
}

// ---- criterion 9 ---------------------------------------------------------------

bool criterion_codegen(std::string& detail) {
    ModelConfig cfg;
    cfg.window = 4;
    cfg.features = 1;
    cfg.outputs = 1;
    cfg.d_model = 4;
    cfg.bits = 6;
    TransformerModel m = build(cfg, 901);
    Rng rng(902);
    std::vector<Tensor> calib;
    for (int i = 0; i < 40; ++i) {
        Tensor x = Tensor::zeros(cfg.window, 1);
        for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
        calib.push_back(x);
    }
    calibrate(m, calib);
    m.observers.freeze();
    IntModel im = export_int(m);
    GoldenVectors gv = make_golden_vectors(im, 12, 903);

    const RtlDesign a = emit_design(im, platform_xc7s15(), gv);
    const RtlDesign b = emit_design(im, platform_xc7s15(), gv);
    if (a.vhdl_files.size() != b.vhdl_files.size()) {
        detail = "emission file count differs between runs";
        return false;
    }
    for (std::size_t i = 0; i < a.vhdl_files.size(); ++i)
        if (a.vhdl_files[i].content != b.vhdl_files[i].content) {
            detail = "emission not byte-identical: " + a.vhdl_files[i].name;
            return false;
        }

    const fs::path dir = fs::temp_directory_path() / "qforge_acceptance_rtl";
    write_design(a, dir.string());
    const SimResult sim = run_external_sim(a, dir.string());
    if (sim.status == SimStatus::skipped) {
        detail = "emission byte-identical; RTL simulation " + sim.detail;
        return true;
    }
    if (sim.status == SimStatus::passed) {
        detail = "emission byte-identical; GHDL bit-exact over " +
                 std::to_string(gv.count) + " vectors, " + std::to_string(sim.cycles) + " cycles";
        return true;
    }
    detail = "GHDL simulation mismatch:\n" + sim.detail;
    return false;
}

// ---- criterion 10 --------------------------------------------------------------

bool criterion_search_smoke(std::string& detail) {
    SearchData sd;
    TaskFixture f = sine_fixture(24, 8, 8);
    sd.task = Task::forecasting;
    sd.train = f.train;
    sd.val = f.val;
    sd.test = f.test;
    sd.denorm = f.denorm;
    sd.target_cols = {0};
    sd.window = 24;
    sd.features = 1;
    sd.outputs = 1;

    SearchOptions opts;
    opts.n_trials = 5;
    opts.population = 5;
    opts.seed = 1001;
    opts.max_epochs = 8;
    opts.patience = 4;
    opts.space.d_models = {8, 16};
    opts.space.batch_sizes = {32, 64, 128};

    const PlatformSpec platform = platform_xc7s15();
    const auto ledger1 = run_search(sd, platform, opts);
    const auto ledger2 = run_search(sd, platform, opts);

    const fs::path p1 = fs::temp_directory_path() / "qforge_acc_ledger1.jsonl";
    const fs::path p2 = fs::temp_directory_path() / "qforge_acc_ledger2.jsonl";
    save_ledger(ledger1, p1.string());
    save_ledger(ledger2, p2.string());
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    if (s1.str() != s2.str()) {
        detail = "re-run ledger differs byte-for-byte";
        return false;
    }
    // replay from the persisted ledger
    const auto loaded = load_ledger(p1.string());
    const auto replayed = run_search(sd, platform, opts, loaded);
    for (std::size_t i = 0; i < ledger1.size(); ++i)
        if (trial_to_json(replayed[i]).dump() != trial_to_json(ledger1[i]).dump()) {
            detail = "ledger replay diverged at trial " + std::to_string(i);
            return false;
        }
    std::size_t completed = 0;
    for (const auto& t : ledger1) completed += t.status == TrialStatus::completed;
    const ParetoFront front = pareto_front(ledger1);
    std::ostringstream os;
    os << ledger1.size() << " trials (" << completed << " completed), front size "
       << front.indices.size() << ", rerun byte-identical, replay exact";
    detail = os.str();
    return ledger1.size() == 5 && completed >= 1;
}

struct Criterion {
    int id;
    const char* name;
    bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "parameter-count regression", criterion_params},
    {2, "energy-identity regression", criterion_energy},
    {3, "quantization properties", criterion_quant},
    {4, "gradient correctness", criterion_gradients},
    {5, "integer/float consistency", criterion_int_consistency},
    {6, "QAT viability", criterion_qat_viability},
    {7, "pareto correctness", criterion_pareto},
    {8, "deployability filter", criterion_deployability},
    {9, "codegen determinism and bit-exactness", criterion_codegen},
    {10, "end-to-end search smoke", criterion_search_smoke},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);
    bool all_pass = true;
    for (const Criterion& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d: %s — %s (%s)\n", c.id, ok ? "PASS" : "FAIL", c.name,
                    detail.c_str());
        std::fflush(stdout);
        all_pass = all_pass && ok;
    }
    return all_pass ? 0 : 1;
}
