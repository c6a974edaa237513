// SPDX-License-Identifier: Apache-2.0
//
// qforge command line: train / search / export-vhdl / infer.
// Exit codes: 0 success, 2 input error, 3 constraint violation, 4 internal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qforge/codegen.hpp"
#include "qforge/common.hpp"
#include "qforge/data.hpp"
#include "qforge/hwmodel.hpp"
#include "qforge/intrt.hpp"
#include "qforge/model.hpp"
#include "qforge/model_io.hpp"
#include "qforge/search.hpp"
#include "qforge/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
    std::string task = "forecasting";
    std::string data;  // path or synth:<kind>
    std::string schema_path;
    std::string platform = "xc7s15";
    std::string out_dir = "out";
    std::size_t trials = 5;
    std::size_t population = 20;
    std::uint64_t seed = 0;
    bool strict = false;
    bool baseline = false;
    std::size_t window = 24;
    std::size_t d_model = 16;
    int bits = 8;
    std::size_t batch_size = 32;
    double lr = 3e-3;
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::size_t per_class_cap = 0;
    std::size_t downsample_factor = 1;
    std::size_t vectors = 12;
    bool resume = false;
};

struct PreparedData {
    qforge::Task task;
    qforge::WindowSet train, val, test;
    std::optional<qforge::MinMax> denorm;
    std::vector<std::size_t> target_cols;
    std::vector<int> test_labels;  // anomaly per-window truth
    std::vector<double> val_label_free_residual_base;
    std::size_t features = 1;
    std::size_t outputs = 1;
};

qforge::CsvSchema schema_from_file(const std::string& path, std::size_t& downsample_factor) {
    const auto j = qforge::load_json_file(path);
    qforge::CsvSchema schema;
    schema.feature_cols = j.at("features").get<std::vector<std::string>>();
    if (j.contains("targets"))
        schema.target_cols = j.at("targets").get<std::vector<std::string>>();
    schema.label_col = j.value("label", "");
    downsample_factor = j.value("downsample", downsample_factor);
    return schema;
}

qforge::SeriesDataset resolve_dataset(RunConfig& rc) {
    if (rc.data.rfind("synth:", 0) == 0) return qforge::synth_task(rc.data.substr(6), rc.seed);
    if (!fs::exists(rc.data)) throw qforge::DataError("dataset file not found: " + rc.data);
    if (rc.schema_path.empty())
        throw qforge::DataError("real datasets need --data-schema <descriptor.json>");
    const qforge::CsvSchema schema = schema_from_file(rc.schema_path, rc.downsample_factor);
    qforge::SeriesDataset ds = qforge::load_csv(rc.data, schema);
    if (rc.downsample_factor > 1) ds = qforge::downsample(ds, rc.downsample_factor);
    return ds;
}

// Task pipelines: chronological split + Min-Max + sliding windows for
// forecasting/anomaly, stratified window split for classification.
PreparedData prepare_data(RunConfig& rc) {
    PreparedData pd;
    pd.task = qforge::task_from_name(rc.task);
    qforge::SeriesDataset ds = resolve_dataset(rc);
    pd.features = ds.features;

    if (pd.task == qforge::Task::classification) {
        if (ds.labels.empty()) throw qforge::DataError("classification needs per-step labels");
        qforge::WindowSet all = qforge::make_class_windows(ds, rc.window);
        auto parts = qforge::split_windows_stratified(all, {}, rc.seed, rc.per_class_cap);
        pd.train = std::move(parts[0]);
        pd.val = std::move(parts[1]);
        pd.test = std::move(parts[2]);
        std::size_t k = 0;
        for (const std::size_t c : all.class_targets) k = std::max(k, c + 1);
        pd.outputs = k;
        return pd;
    }

    auto splits = qforge::split_chronological(ds, {});
    qforge::MinMax mm;
    mm.fit(splits[0], 0, splits[0].steps());
    for (auto& part : splits) mm.transform(part);
    pd.denorm = mm;
    pd.target_cols = ds.target_cols;
    pd.outputs = ds.target_cols.size();
    pd.train = qforge::make_windows(splits[0], rc.window);
    pd.val = qforge::make_windows(splits[1], rc.window);
    pd.test = qforge::make_windows(splits[2], rc.window);
    if (pd.task == qforge::Task::anomaly && !ds.labels.empty()) {
        // per-window truth: label of the predicted step
        const std::size_t test_begin = splits[0].steps() + splits[1].steps();
        for (std::size_t t = 0; t + rc.window < splits[2].steps(); ++t)
            pd.test_labels.push_back(ds.labels[test_begin + t + rc.window]);
    }
    return pd;
}

qforge::ModelConfig model_config(const RunConfig& rc, const PreparedData& pd) {
    qforge::ModelConfig mc;
    mc.window = rc.window;
    mc.features = pd.features;
    mc.outputs = pd.outputs;
    mc.d_model = rc.d_model;
    mc.bits = rc.bits;
    mc.task = pd.task;
    mc.validate();
    return mc;
}

qforge::TrainSpec train_spec(const RunConfig& rc, const PreparedData& pd) {
    qforge::TrainSpec spec;
    spec.batch_size = rc.batch_size;
    spec.lr = rc.lr;
    spec.max_epochs = rc.epochs;
    spec.patience = rc.patience;
    spec.loss = pd.task == qforge::Task::classification ? qforge::LossKind::cross_entropy
                                                        : qforge::LossKind::mse;
    spec.seed = rc.seed;
    spec.validate();
    return spec;
}

void write_training_log(const qforge::FitResult& fr, const std::string& path,
                        const std::string& hash) {
    std::ofstream out(path);
    if (!out) throw qforge::DataError("cannot write " + path);
    out << "# config_hash=" << hash << "\n";
    out << "epoch,train_loss,val_loss,lr,wall_time_s\n";
    for (const auto& e : fr.history)
        out << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.lr << ","
            << e.wall_time_s << "\n";
}

std::vector<qforge::Tensor> int_predictions(const qforge::IntModel& im,
                                            const qforge::WindowSet& ws) {
    std::vector<qforge::Tensor> preds;
    for (const auto& x : ws.inputs) {
        qforge::IntTensor xq = qforge::quantize_tensor(x, im.input_qp);
        preds.push_back(qforge::dequantize_tensor(qforge::int_forward(im, xq).output));
    }
    return preds;
}

std::vector<qforge::Tensor> float_predictions(qforge::TransformerModel& m,
                                              const qforge::WindowSet& ws,
                                              qforge::ForwardMode mode) {
    std::vector<qforge::Tensor> preds;
    for (const auto& x : ws.inputs) {
        qforge::Graph g;
        g.set_recording(false);
        preds.push_back(qforge::forward(g, m, x, mode, qforge::Phase::eval));
    }
    return preds;
}

double task_metric(const PreparedData& pd, const std::vector<qforge::Tensor>& preds,
                   std::string& name, double* threshold_out = nullptr,
                   const std::vector<qforge::Tensor>* val_preds = nullptr) {
    if (pd.task == qforge::Task::classification) {
        name = "accuracy";
        std::vector<std::size_t> cls;
        for (const auto& p : preds) cls.push_back(qforge::argmax_row(p));
        return qforge::metric_accuracy(cls, pd.test.class_targets);
    }
    if (pd.task == qforge::Task::forecasting) {
        name = "rmse";
        std::vector<std::size_t> cols = pd.target_cols;
        if (cols.empty())
            for (std::size_t j = 0; j < pd.outputs; ++j) cols.push_back(j);
        return qforge::metric_forecast_rmse(preds, pd.test.targets,
                                            pd.denorm ? &*pd.denorm : nullptr, cols);
    }
    name = "f1";
    if (val_preds == nullptr) throw qforge::ContractError("anomaly metric needs val predictions");
    auto residuals = [](const std::vector<qforge::Tensor>& p,
                        const std::vector<qforge::Tensor>& t) {
        std::vector<double> r;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p[i].cols(); ++j)
                acc += std::fabs(p[i].at(0, j) - t[i].at(0, j));
            r.push_back(acc / static_cast<double>(p[i].cols()));
        }
        return r;
    };
    const double thr = qforge::threshold_quantile(residuals(*val_preds, pd.val.targets), 0.99);
    if (threshold_out != nullptr) *threshold_out = thr;
    const auto test_res = residuals(preds, pd.test.targets);
    std::vector<int> flags;
    for (const double r : test_res) flags.push_back(r > thr ? 1 : 0);
    if (pd.test_labels.size() != flags.size())
        throw qforge::DataError("anomaly task needs per-step labels for the test split");
    return qforge::metric_f1(flags, pd.test_labels);
}

int cmd_train(RunConfig& rc) {
    PreparedData pd = prepare_data(rc);
    fs::create_directories(rc.out_dir);
    const qforge::ModelConfig mc = model_config(rc, pd);
    const qforge::TrainSpec spec = train_spec(rc, pd);
    const std::string hash = qforge::config_hash(mc);

    qforge::TransformerModel model = qforge::build(mc, rc.seed);
    qforge::FitResult fr = qforge::fit(model, pd.train, pd.val, spec, qforge::ForwardMode::qat);
    qforge::TransformerModel best = fr.model;
    best.observers.freeze();
    qforge::IntModel im = qforge::export_int(best);

    const fs::path out(rc.out_dir);
    qforge::save_model(best, (out / "model.json").string());
    qforge::save_model(best, (out / "model_int.json").string(), &im);
    write_training_log(fr, (out / "training_log.csv").string(), hash);

    ordered_json metrics;
    metrics["config_hash"] = hash;
    metrics["val_loss"] = fr.best_val_loss;
    metrics["best_epoch"] = fr.best_epoch;
    metrics["epochs_run"] = fr.epochs_run;
    std::string metric_name;
    double thr = 0.0;
    const auto val_preds = int_predictions(im, pd.val);
    const double int_metric = task_metric(pd, int_predictions(im, pd.test), metric_name, &thr,
                                          &val_preds);
    metrics["int"][metric_name] = int_metric;
    if (pd.task == qforge::Task::anomaly) {
        ordered_json tj;
        tj["mode"] = "quantile";
        tj["q"] = 0.99;
        tj["threshold"] = thr;
        tj["config_hash"] = hash;
        std::ofstream tf(out / "thresholds.json");
        tf << tj.dump(1) << "\n";
    }
    if (rc.baseline) {
        qforge::TransformerModel fmodel = qforge::build(mc, rc.seed);
        qforge::FitResult ffr =
            qforge::fit(fmodel, pd.train, pd.val, spec, qforge::ForwardMode::full_precision);
        std::string fname;
        const auto fval = float_predictions(ffr.model, pd.val, qforge::ForwardMode::full_precision);
        const double fmetric =
            task_metric(pd, float_predictions(ffr.model, pd.test, qforge::ForwardMode::full_precision),
                        fname, nullptr, &fval);
        metrics["float_baseline"][fname] = fmetric;
        metrics["float_baseline"]["val_loss"] = ffr.best_val_loss;
    }
    std::ofstream mf(out / "metrics.json");
    if (!mf) throw qforge::DataError("cannot write metrics.json");
    mf << metrics.dump(1) << "\n";
    std::cout << "trained: val_loss=" << fr.best_val_loss << " best_epoch=" << fr.best_epoch
              << " int_" << metric_name << "=" << int_metric << "\n"
              << "artifacts in " << rc.out_dir << "\n";
    return 0;
}

int cmd_search(RunConfig& rc) {
    PreparedData pd = prepare_data(rc);
    fs::create_directories(rc.out_dir);
    const qforge::PlatformSpec platform = qforge::find_platform(rc.platform);

    qforge::SearchData sd;
    sd.task = pd.task;
    sd.train = pd.train;
    sd.val = pd.val;
    sd.test = pd.test;
    sd.denorm = pd.denorm;
    sd.target_cols = pd.target_cols;
    sd.test_labels = pd.test_labels;
    sd.window = rc.window;
    sd.features = pd.features;
    sd.outputs = pd.outputs;

    qforge::SearchOptions opts;
    opts.n_trials = rc.trials;
    opts.population = rc.population;
    opts.seed = rc.seed;
    opts.max_epochs = rc.epochs;
    opts.patience = rc.patience;

    const fs::path out(rc.out_dir);
    std::vector<qforge::Trial> resume;
    if (rc.resume && fs::exists(out / "ledger.jsonl"))
        resume = qforge::load_ledger((out / "ledger.jsonl").string());

    const std::vector<qforge::Trial> ledger = qforge::run_search(sd, platform, opts, resume);
    qforge::save_ledger(ledger, (out / "ledger.jsonl").string());

    const qforge::ParetoFront front = qforge::pareto_front(ledger);
    std::ofstream pcsv(out / "pareto.csv");
    pcsv << "index,val_loss,energy_mj,bits,batch_size,lr,d_model\n";
    for (const std::size_t i : front.indices) {
        const qforge::Trial& t = ledger[i];
        pcsv << t.index << "," << t.val_loss << "," << t.hw.energy_mj << "," << t.config.bits
             << "," << t.config.batch_size << "," << t.config.lr << "," << t.config.d_model
             << "\n";
    }
    std::ofstream dat(out / "pareto_scatter.dat");
    dat << "# val_loss energy_mj on_front\n";
    for (std::size_t i = 0; i < ledger.size(); ++i) {
        if (ledger[i].status != qforge::TrialStatus::completed) continue;
        const bool on_front =
            std::find(front.indices.begin(), front.indices.end(), i) != front.indices.end();
        dat << ledger[i].val_loss << " " << ledger[i].hw.energy_mj << " " << (on_front ? 1 : 0)
            << "\n";
    }
    std::ofstream plot(out / "pareto_plot.gnuplot");
    plot << "set xlabel 'validation loss'\nset ylabel 'energy per inference [mJ]'\n"
         << "plot 'pareto_scatter.dat' using 1:($3==0?$2:1/0) title 'trials', \\\n"
         << "     'pareto_scatter.dat' using 1:($3==1?$2:1/0) title 'pareto front' pt 7\n";

    std::size_t completed = 0, rejected = 0, failed = 0;
    for (const auto& t : ledger) {
        completed += t.status == qforge::TrialStatus::completed;
        rejected += t.status == qforge::TrialStatus::rejected_resources;
        failed += t.status == qforge::TrialStatus::failed_training;
    }
    std::cout << "search done: " << ledger.size() << " trials (" << completed << " completed, "
              << rejected << " rejected, " << failed << " failed), front size "
              << front.indices.size() << "\nartifacts in " << rc.out_dir << "\n";
    return 0;
}

int cmd_export_vhdl(RunConfig& rc, const std::string& model_path) {
    if (!fs::exists(model_path)) throw qforge::DataError("model file not found: " + model_path);
    const qforge::IntModel im = qforge::load_int_model(model_path);
    const qforge::PlatformSpec platform = qforge::find_platform(rc.platform);
    const qforge::HwEstimate est = qforge::estimate_hw(im, platform);

    const qforge::GoldenVectors vectors =
        qforge::make_golden_vectors(im, std::max<std::size_t>(rc.vectors, 10), rc.seed);
    const qforge::RtlDesign design = qforge::emit_design(im, platform, vectors);
    qforge::write_design(design, rc.out_dir);

    std::cout << "platform " << platform.name << "\n"
              << "  LUTs   " << est.res.luts << " / " << platform.lut_budget << "\n"
              << "  DSPs   " << est.res.dsps << " / " << platform.dsp_budget << "\n"
              << "  BRAMs  " << est.res.brams << " / " << platform.bram_blocks << "\n"
              << "  cycles " << est.cycles << "\n"
              << "  latency " << est.latency_ms << " ms\n"
              << "  power   " << est.power_mw << " mW\n"
              << "  energy  " << est.energy_mj << " mJ\n"
              << "  deployable " << (est.deployable ? "yes" : "no");
    for (const auto& r : est.reasons) std::cout << " [" << r << "]";
    std::cout << "\nwrote " << design.vhdl_files.size() << " vhdl files to " << rc.out_dir
              << "\n";
    if (!est.deployable && rc.strict)
        throw qforge::ConstraintError("design exceeds platform budget (--strict)");
    return 0;
}

int cmd_infer(RunConfig& rc, const std::string& model_path, const std::string& input_path,
              const std::string& threshold_path) {
    if (!fs::exists(model_path)) throw qforge::DataError("model file not found: " + model_path);
    if (!fs::exists(input_path)) throw qforge::DataError("input file not found: " + input_path);
    const qforge::IntModel im = qforge::load_int_model(model_path);
    const std::size_t n = im.config.window, m = im.config.features, k = im.config.outputs;

    // Plain numeric CSV, one row per step, m columns; a non-numeric first
    // line is treated as a header.
    std::ifstream in(input_path);
    std::vector<double> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = qforge::detail::split_csv_line(line);
        double v = 0.0;
        bool numeric = true;
        try {
            numeric = qforge::detail::parse_cell(cells[0], v);
        } catch (const qforge::ParseError&) {
            numeric = false;
        }
        if (!numeric && line_no == 1) continue;  // header
        if (cells.size() < m)
            throw qforge::DataError(input_path + ":" + std::to_string(line_no) +
                                    ": expected " + std::to_string(m) + " columns");
        try {
            for (std::size_t j = 0; j < m; ++j) {
                if (!qforge::detail::parse_cell(cells[j], v))
                    throw qforge::ParseError("missing value");
                rows.push_back(v);
            }
        } catch (const qforge::ParseError& e) {
            throw qforge::DataError(input_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    const std::size_t t_total = rows.size() / m;
    if (t_total < n)
        throw qforge::DataError("input has " + std::to_string(t_total) +
                                " rows; a complete window needs " + std::to_string(n));

    std::optional<double> threshold;
    double beta = 0.0;
    std::string mode = "quantile";
    if (!threshold_path.empty()) {
        const auto tj = qforge::load_json_file(threshold_path);
        threshold = tj.at("threshold").get<double>();
        mode = tj.value("mode", "quantile");
        beta = tj.value("beta", 0.0);
    }

    std::ofstream out(rc.out_dir);
    if (!out) throw qforge::DataError("cannot write " + rc.out_dir);
    out << "window";
    for (std::size_t j = 0; j < k; ++j) out << ",code_" << j;
    for (std::size_t j = 0; j < k; ++j) out << ",value_" << j;
    if (threshold) out << ",residual,smoothed,flag";
    out << "\n";

    std::vector<double> residuals;
    for (std::size_t t = 0; t + n <= t_total; ++t) {
        qforge::Tensor x = qforge::Tensor::zeros(n, m);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) x.at(i, j) = rows[(t + i) * m + j];
        const qforge::IntTensor xq = qforge::quantize_tensor(x, im.input_qp);
        const qforge::IntTensor y = qforge::int_forward(im, xq).output;
        out << t;
        for (std::size_t j = 0; j < k; ++j) out << "," << y.data[j];
        for (std::size_t j = 0; j < k; ++j)
            out << "," << qforge::dequantize_value(y.data[j], y.qp);
        if (threshold) {
            // residual against the realized next step, where it exists
            double res = 0.0;
            if (t + n < t_total) {
                for (std::size_t j = 0; j < k && j < m; ++j)
                    res += std::fabs(qforge::dequantize_value(y.data[j], y.qp) -
                                     rows[(t + n) * m + j]);
                res /= static_cast<double>(std::min(k, m));
            }
            residuals.push_back(res);
            const std::vector<double> smoothed =
                mode == "beta" ? qforge::ewma(residuals, beta) : residuals;
            const double s = smoothed.back();
            out << "," << res << "," << s << "," << (s > *threshold ? 1 : 0);
        }
        out << "\n";
    }
    std::cout << "wrote predictions to " << rc.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qforge: quantized tiny-transformer training, search and RTL export"};
    app.set_config("--config", "", "TOML-style config file; flags override file values");
    RunConfig rc;

    std::string model_path, input_path, threshold_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--task", rc.task, "forecasting | classification | anomaly");
        cmd->add_option("--data", rc.data, "dataset CSV path or synth:<sine|shapelet|spike>");
        cmd->add_option("--data-schema", rc.schema_path, "dataset descriptor JSON");
        cmd->add_option("--platform", rc.platform, "platform name, file, or QFORGE_PLATFORM_DIR entry");
        cmd->add_option("--seed", rc.seed, "run seed");
        cmd->add_option("--out", rc.out_dir, "output directory (or file for infer)");
        cmd->add_option("--window", rc.window, "window length n");
        cmd->add_option("--d-model", rc.d_model, "embedding dimension");
        cmd->add_option("--bits", rc.bits, "quantization bitwidth");
        cmd->add_option("--batch-size", rc.batch_size, "training batch size");
        cmd->add_option("--lr", rc.lr, "learning rate");
        cmd->add_option("--epochs", rc.epochs, "max training epochs");
        cmd->add_option("--patience", rc.patience, "early-stopping patience");
        cmd->add_option("--per-class-cap", rc.per_class_cap, "cap samples per class (classification)");
        cmd->add_flag("--strict", rc.strict, "treat budget violations as errors (exit 3)");
    };

    CLI::App* train = app.add_subcommand("train", "QAT training and integer export");
    add_common(train);
    train->add_flag("--baseline", rc.baseline, "also train the full-precision baseline");

    CLI::App* search = app.add_subcommand("search", "hardware-aware NSGA-II search");
    add_common(search);
    search->add_option("--trials", rc.trials, "total trials");
    search->add_option("--population", rc.population, "NSGA-II population size");
    search->add_flag("--resume", rc.resume, "replay an existing ledger.jsonl in --out");

    CLI::App* exportv = app.add_subcommand("export-vhdl", "emit the RTL design for a model");
    add_common(exportv);
    exportv->add_option("--model", model_path, "model_int.json path")->required();
    exportv->add_option("--vectors", rc.vectors, "golden vector count (>= 10)");

    CLI::App* infer = app.add_subcommand("infer", "integer-path inference over a CSV");
    add_common(infer);
    infer->add_option("--model", model_path, "model_int.json path")->required();
    infer->add_option("--input", input_path, "input CSV of raw feature rows")->required();
    infer->add_option("--threshold", threshold_path, "thresholds.json for anomaly flags");

    app.require_subcommand(1);
    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(rc);
        if (search->parsed()) return cmd_search(rc);
        if (exportv->parsed()) return cmd_export_vhdl(rc, model_path);
        if (infer->parsed()) {
            if (rc.out_dir == "out") rc.out_dir = "predictions.csv";
            return cmd_infer(rc, model_path, input_path, threshold_path);
        }
    } catch (const qforge::ConstraintError& e) {
        std::cerr << "constraint violation: " << e.what() << "\n";
        return 3;
    } catch (const qforge::DataError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const qforge::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const qforge::SchemaError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const qforge::ContractError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
