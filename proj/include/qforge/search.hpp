// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qforge/common.hpp"
#include "qforge/data.hpp"
#include "qforge/hwmodel.hpp"
#include "qforge/intrt.hpp"
#include "qforge/model.hpp"
#include "qforge/train.hpp"

namespace qforge {

// Mixed discrete/continuous search space: bitwidth and d_model on their
// grids, batch size on a step-16 grid, learning rate log-uniform.
struct SearchSpace {
    std::vector<int> bits = {4, 6, 8};
    std::vector<std::size_t> batch_sizes = {16, 32, 48, 64, 80, 96, 112, 128,
                                            144, 160, 176, 192, 208, 224, 240, 256};
    double lr_min = 1e-5;
    double lr_max = 1e-2;
    std::vector<std::size_t> d_models = {8, 16, 24, 32, 40, 48, 56, 64};
};

struct TrialConfig {
    int bits = 8;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::size_t d_model = 16;

    bool operator==(const TrialConfig&) const = default;
};

inline bool space_contains(const SearchSpace& s, const TrialConfig& c) {
    auto has = [](const auto& v, auto x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    return has(s.bits, c.bits) && has(s.batch_sizes, c.batch_size) && has(s.d_models, c.d_model) &&
           c.lr >= s.lr_min && c.lr <= s.lr_max;
}

inline TrialConfig sample_config(const SearchSpace& s, Rng& rng) {
    TrialConfig c;
    c.bits = s.bits[rng.below(s.bits.size())];
    c.batch_size = s.batch_sizes[rng.below(s.batch_sizes.size())];
    c.lr = std::exp(rng.uniform(std::log(s.lr_min), std::log(s.lr_max)));
    c.d_model = s.d_models[rng.below(s.d_models.size())];
    return c;
}

enum class TrialStatus { completed, rejected_resources, failed_training };

inline std::string trial_status_name(TrialStatus s) {
    switch (s) {
        case TrialStatus::completed: return "completed";
        case TrialStatus::rejected_resources: return "rejected-resources";
        default: return "failed-training";
    }
}

inline TrialStatus trial_status_from_name(const std::string& s) {
    if (s == "completed") return TrialStatus::completed;
    if (s == "rejected-resources") return TrialStatus::rejected_resources;
    if (s == "failed-training") return TrialStatus::failed_training;
    throw SchemaError("unknown trial status: " + s);
}

// One search evaluation. Rejected trials keep their resource numbers and
// rejection reasons but no energy/latency and no test metric; failed
// trials keep only the error.
struct Trial {
    std::size_t index = 0;
    TrialConfig config;
    std::uint64_t seed = 0;
    TrialStatus status = TrialStatus::failed_training;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double test_metric = std::numeric_limits<double>::quiet_NaN();
    std::string test_metric_name;
    HwEstimate hw;
    std::string error;
};

// ---- pareto machinery ---------------------------------------------------------

// a dominates b under (minimize loss, minimize energy).
inline bool dominates(double loss_a, double energy_a, double loss_b, double energy_b) {
    return loss_a <= loss_b && energy_a <= energy_b &&
           (loss_a < loss_b || energy_a < energy_b);
}

struct ParetoFront {
    std::vector<std::size_t> indices;  // into the ledger
    bool empty_ledger = false;         // no completed trials at all
};

// Exact non-dominated filtering over completed trials; ties on both
// objectives are all kept.
inline ParetoFront pareto_front(const std::vector<Trial>& ledger) {
    ParetoFront front;
    std::vector<std::size_t> completed;
    for (std::size_t i = 0; i < ledger.size(); ++i)
        if (ledger[i].status == TrialStatus::completed) completed.push_back(i);
    if (completed.empty()) {
        front.empty_ledger = true;
        return front;
    }
    for (const std::size_t i : completed) {
        bool dominated = false;
        for (const std::size_t j : completed) {
            if (i == j) continue;
            if (dominates(ledger[j].val_loss, ledger[j].hw.energy_mj, ledger[i].val_loss,
                          ledger[i].hw.energy_mj)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) front.indices.push_back(i);
    }
    return front;
}

// Fast non-dominated sorting over (loss, energy) points; returns fronts of
// indices, best first.
inline std::vector<std::vector<std::size_t>> non_dominated_sort(
    const std::vector<std::pair<double, double>>& pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> dominated_by(n);
    std::vector<std::size_t> domination_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            if (dominates(pts[i].first, pts[i].second, pts[j].first, pts[j].second))
                dominated_by[i].push_back(j);
            else if (dominates(pts[j].first, pts[j].second, pts[i].first, pts[i].second))
                ++domination_count[i];
        }
        if (domination_count[i] == 0) fronts[0].push_back(i);
    }
    std::size_t current = 0;
    while (!fronts[current].empty()) {
        std::vector<std::size_t> next;
        for (const std::size_t i : fronts[current])
            for (const std::size_t j : dominated_by[i])
                if (--domination_count[j] == 0) next.push_back(j);
        fronts.push_back(std::move(next));
        ++current;
    }
    fronts.pop_back();
    return fronts;
}

inline std::vector<double> crowding_distance(const std::vector<std::pair<double, double>>& pts,
                                             const std::vector<std::size_t>& front) {
    std::vector<double> dist(front.size(), 0.0);
    if (front.size() <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    for (int obj = 0; obj < 2; ++obj) {
        std::vector<std::size_t> order(front.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto value = [&](std::size_t i) {
            return obj == 0 ? pts[front[i]].first : pts[front[i]].second;
        };
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return value(a) < value(b); });
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        const double span = value(order.back()) - value(order.front());
        if (span <= 0.0) continue;
        for (std::size_t i = 1; i + 1 < order.size(); ++i)
            dist[order[i]] += (value(order[i + 1]) - value(order[i - 1])) / span;
    }
    return dist;
}

// One NSGA-II generation step: rank parents by non-dominated front and
// crowding, then binary tournament selection, uniform crossover and
// per-gene mutation (categorical resample p = 0.2; log-normal lr
// perturbation, sigma = 0.3, clamped to the interval).
inline std::vector<TrialConfig> nsga2_step(const std::vector<Trial>& parents,
                                           const SearchSpace& space, std::size_t offspring_count,
                                           Rng& rng) {
    std::vector<const Trial*> pool;
    for (const Trial& t : parents)
        if (t.status == TrialStatus::completed) pool.push_back(&t);

    if (pool.empty()) {
        std::vector<TrialConfig> random;
        for (std::size_t i = 0; i < offspring_count; ++i) random.push_back(sample_config(space, rng));
        return random;
    }

    std::vector<std::pair<double, double>> pts;
    for (const Trial* t : pool) pts.emplace_back(t->val_loss, t->hw.energy_mj);
    const auto fronts = non_dominated_sort(pts);
    std::vector<std::size_t> rank(pool.size(), 0);
    std::vector<double> crowd(pool.size(), 0.0);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        const auto dist = crowding_distance(pts, fronts[f]);
        for (std::size_t i = 0; i < fronts[f].size(); ++i) {
            rank[fronts[f][i]] = f;
            crowd[fronts[f][i]] = dist[i];
        }
    }

    auto tournament = [&]() {
        const std::size_t a = rng.below(pool.size());
        const std::size_t b = rng.below(pool.size());
        if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
        return crowd[a] >= crowd[b] ? a : b;
    };
    auto pick = [&](const auto& grid, auto current) {
        (void)current;
        return grid[rng.below(grid.size())];
    };

    std::vector<TrialConfig> offspring;
    while (offspring.size() < offspring_count) {
        const TrialConfig& pa = pool[tournament()]->config;
        const TrialConfig& pb = pool[tournament()]->config;
        TrialConfig child;
        child.bits = rng.uniform01() < 0.5 ? pa.bits : pb.bits;
        child.batch_size = rng.uniform01() < 0.5 ? pa.batch_size : pb.batch_size;
        child.lr = rng.uniform01() < 0.5 ? pa.lr : pb.lr;
        child.d_model = rng.uniform01() < 0.5 ? pa.d_model : pb.d_model;
        if (rng.uniform01() < 0.2) child.bits = pick(space.bits, child.bits);
        if (rng.uniform01() < 0.2) child.batch_size = pick(space.batch_sizes, child.batch_size);
        if (rng.uniform01() < 0.2) child.d_model = pick(space.d_models, child.d_model);
        if (rng.uniform01() < 0.2)
            child.lr = clamp_val(child.lr * std::exp(0.3 * rng.normal()), space.lr_min,
                                 space.lr_max);
        offspring.push_back(child);
    }
    return offspring;
}

// ---- search driver -------------------------------------------------------------

struct SearchData {
    Task task = Task::forecasting;
    WindowSet train, val, test;
    std::optional<MinMax> denorm;            // forecasting / anomaly
    std::vector<std::size_t> target_cols;    // into the feature vector
    std::vector<int> test_labels;            // anomaly ground truth per test window
    std::size_t window = 24;
    std::size_t features = 1;
    std::size_t outputs = 1;
};

struct SearchOptions {
    SearchSpace space;
    std::size_t n_trials = 20;
    std::size_t population = 20;
    std::uint64_t seed = 0;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t trial_seed_salt = 0x51a3;
};

namespace detail {

inline std::vector<Tensor> decode_int_predictions(const IntModel& im, const WindowSet& ws) {
    std::vector<Tensor> preds;
    preds.reserve(ws.size());
    for (const Tensor& x : ws.inputs) {
        IntTensor xq = quantize_tensor(x, im.input_qp);
        preds.push_back(dequantize_tensor(int_forward(im, xq).output));
    }
    return preds;
}

// Integer-path test metric per task; anomaly uses the 0.99-quantile rule
// on validation residuals.
inline std::pair<std::string, double> trial_test_metric(const IntModel& im, const SearchData& d) {
    const std::vector<Tensor> preds = detail::decode_int_predictions(im, d.test);
    if (d.task == Task::classification) {
        std::vector<std::size_t> pred_cls;
        for (const Tensor& p : preds) pred_cls.push_back(argmax_row(p));
        return {"accuracy", metric_accuracy(pred_cls, d.test.class_targets)};
    }
    if (d.task == Task::forecasting) {
        const MinMax* mm = d.denorm ? &*d.denorm : nullptr;
        std::vector<std::size_t> cols(d.target_cols);
        if (cols.empty())
            for (std::size_t j = 0; j < d.outputs; ++j) cols.push_back(j);
        return {"rmse", metric_forecast_rmse(preds, d.test.targets, mm, cols)};
    }
    // Anomaly: residual thresholding with the percentile rule.
    const std::vector<Tensor> val_preds = detail::decode_int_predictions(im, d.val);
    auto residuals = [](const std::vector<Tensor>& p, const std::vector<Tensor>& t) {
        std::vector<double> r(p.size(), 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p[i].cols(); ++j)
                acc += std::fabs(p[i].at(0, j) - t[i].at(0, j));
            r[i] = acc / static_cast<double>(p[i].cols());
        }
        return r;
    };
    const double thr = threshold_quantile(residuals(val_preds, d.val.targets), 0.99);
    const std::vector<double> test_res = residuals(preds, d.test.targets);
    std::vector<int> flags(test_res.size(), 0);
    for (std::size_t i = 0; i < test_res.size(); ++i) flags[i] = test_res[i] > thr ? 1 : 0;
    return {"f1", metric_f1(flags, d.test_labels)};
}

}  // namespace detail

// Trains, exports and scores one configuration. Resource violations are
// recorded as rejections, training failures as failures; neither aborts
// the caller.
inline Trial evaluate_trial(std::size_t index, const TrialConfig& cfg, const SearchData& d,
                            const PlatformSpec& platform, const SearchOptions& opts) {
    Trial trial;
    trial.index = index;
    trial.config = cfg;
    trial.seed = opts.seed * 0x9e3779b9ull + opts.trial_seed_salt + index;
    try {
        ModelConfig mc;
        mc.window = d.window;
        mc.features = d.features;
        mc.outputs = d.outputs;
        mc.d_model = cfg.d_model;
        mc.bits = cfg.bits;
        mc.task = d.task;
        TransformerModel model = build(mc, trial.seed);

        TrainSpec spec;
        spec.batch_size = cfg.batch_size;
        spec.lr = cfg.lr;
        spec.max_epochs = opts.max_epochs;
        spec.patience = opts.patience;
        spec.loss = d.task == Task::classification ? LossKind::cross_entropy : LossKind::mse;
        spec.seed = trial.seed;

        FitResult fit_result = fit(model, d.train, d.val, spec, ForwardMode::qat);
        trial.val_loss = fit_result.best_val_loss;

        TransformerModel best = fit_result.model;
        best.observers.freeze();
        IntModel im = export_int(best);
        trial.hw = estimate_hw(im, platform);

        if (!trial.hw.deployable) {
            trial.status = TrialStatus::rejected_resources;
            // Rejected early: no deployment metrics beyond the resources.
            trial.hw.energy_mj = std::numeric_limits<double>::quiet_NaN();
            trial.hw.latency_ms = std::numeric_limits<double>::quiet_NaN();
            trial.hw.power_mw = std::numeric_limits<double>::quiet_NaN();
            return trial;
        }
        const auto [metric_name, metric_value] = detail::trial_test_metric(im, d);
        trial.test_metric_name = metric_name;
        trial.test_metric = metric_value;
        trial.status = TrialStatus::completed;
    } catch (const Error& e) {
        trial.status = TrialStatus::failed_training;
        trial.error = e.what();
    }
    return trial;
}

// NSGA-II search over the space: an initial random population followed by
// generational offspring, each trial fit with QAT, exported, costed and
// filtered. Deterministic given the seed; an existing ledger is replayed
// in place of re-evaluating matching trial indices.
inline std::vector<Trial> run_search(const SearchData& d, const PlatformSpec& platform,
                                     const SearchOptions& opts,
                                     const std::vector<Trial>& resume_from = {}) {
    if (opts.n_trials < 1) throw ContractError("run_search: n_trials must be >= 1");
    Rng sampler_rng = Rng(opts.seed).derive(0xa1);

    std::vector<Trial> ledger;
    std::vector<Trial> population;
    std::size_t next_index = 0;

    auto evaluate_batch = [&](const std::vector<TrialConfig>& configs) {
        std::vector<Trial> generation;
        for (const TrialConfig& cfg : configs) {
            if (next_index >= opts.n_trials) break;
            if (next_index < resume_from.size() && resume_from[next_index].config == cfg) {
                generation.push_back(resume_from[next_index]);
            } else {
                generation.push_back(evaluate_trial(next_index, cfg, d, platform, opts));
            }
            ledger.push_back(generation.back());
            ++next_index;
        }
        return generation;
    };

    std::vector<TrialConfig> init;
    for (std::size_t i = 0; i < std::min(opts.population, opts.n_trials); ++i)
        init.push_back(sample_config(opts.space, sampler_rng));
    population = evaluate_batch(init);

    while (next_index < opts.n_trials) {
        const std::size_t want = std::min(opts.population, opts.n_trials - next_index);
        std::vector<TrialConfig> offspring =
            nsga2_step(population, opts.space, want, sampler_rng);
        std::vector<Trial> evaluated = evaluate_batch(offspring);
        // Environmental selection: parents + offspring compete for the
        // next parent population.
        std::vector<Trial> merged = population;
        merged.insert(merged.end(), evaluated.begin(), evaluated.end());
        std::vector<const Trial*> pool;
        for (const Trial& t : merged)
            if (t.status == TrialStatus::completed) pool.push_back(&t);
        if (!pool.empty()) {
            std::vector<std::pair<double, double>> pts;
            for (const Trial* t : pool) pts.emplace_back(t->val_loss, t->hw.energy_mj);
            const auto fronts = non_dominated_sort(pts);
            std::vector<Trial> next_pop;
            for (const auto& front : fronts) {
                if (next_pop.size() >= opts.population) break;
                std::vector<std::size_t> order(front.size());
                for (std::size_t i = 0; i < front.size(); ++i) order[i] = i;
                const auto dist = crowding_distance(pts, front);
                std::sort(order.begin(), order.end(),
                          [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
                for (const std::size_t i : order) {
                    if (next_pop.size() >= opts.population) break;
                    next_pop.push_back(*pool[front[i]]);
                }
            }
            population = std::move(next_pop);
        } else {
            population = std::move(merged);
        }
    }
    return ledger;
}

// ---- ledger persistence ---------------------------------------------------------

inline nlohmann::ordered_json trial_to_json(const Trial& t) {
    nlohmann::ordered_json j;
    j["index"] = t.index;
    j["config"] = {{"bits", t.config.bits},
                   {"batch_size", t.config.batch_size},
                   {"lr", t.config.lr},
                   {"d_model", t.config.d_model}};
    j["seed"] = t.seed;
    j["status"] = trial_status_name(t.status);
    if (std::isfinite(t.val_loss)) j["val_loss"] = t.val_loss;
    if (t.status == TrialStatus::completed) {
        j["test_metric_name"] = t.test_metric_name;
        j["test_metric"] = t.test_metric;
        j["hw"] = {{"luts", t.hw.res.luts},
                   {"dsps", t.hw.res.dsps},
                   {"brams", t.hw.res.brams},
                   {"cycles", t.hw.cycles},
                   {"latency_ms", t.hw.latency_ms},
                   {"power_mw", t.hw.power_mw},
                   {"energy_mj", t.hw.energy_mj}};
    } else if (t.status == TrialStatus::rejected_resources) {
        j["hw"] = {{"luts", t.hw.res.luts},
                   {"dsps", t.hw.res.dsps},
                   {"brams", t.hw.res.brams},
                   {"reasons", t.hw.reasons}};
    } else {
        j["error"] = t.error;
    }
    return j;
}

inline Trial trial_from_json(const nlohmann::json& j) {
    Trial t;
    t.index = j.at("index").get<std::size_t>();
    t.config.bits = j.at("config").at("bits").get<int>();
    t.config.batch_size = j.at("config").at("batch_size").get<std::size_t>();
    t.config.lr = j.at("config").at("lr").get<double>();
    t.config.d_model = j.at("config").at("d_model").get<std::size_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.status = trial_status_from_name(j.at("status").get<std::string>());
    if (j.contains("val_loss")) t.val_loss = j.at("val_loss").get<double>();
    if (t.status == TrialStatus::completed) {
        t.test_metric_name = j.at("test_metric_name").get<std::string>();
        t.test_metric = j.at("test_metric").get<double>();
        const auto& hw = j.at("hw");
        t.hw.res.luts = hw.at("luts").get<std::size_t>();
        t.hw.res.dsps = hw.at("dsps").get<std::size_t>();
        t.hw.res.brams = hw.at("brams").get<std::size_t>();
        t.hw.cycles = hw.at("cycles").get<std::uint64_t>();
        t.hw.latency_ms = hw.at("latency_ms").get<double>();
        t.hw.power_mw = hw.at("power_mw").get<double>();
        t.hw.energy_mj = hw.at("energy_mj").get<double>();
        t.hw.deployable = true;
    } else if (t.status == TrialStatus::rejected_resources) {
        const auto& hw = j.at("hw");
        t.hw.res.luts = hw.at("luts").get<std::size_t>();
        t.hw.res.dsps = hw.at("dsps").get<std::size_t>();
        t.hw.res.brams = hw.at("brams").get<std::size_t>();
        t.hw.reasons = hw.at("reasons").get<std::vector<std::string>>();
        t.hw.deployable = false;
        t.hw.energy_mj = std::numeric_limits<double>::quiet_NaN();
        t.hw.latency_ms = std::numeric_limits<double>::quiet_NaN();
        t.hw.power_mw = std::numeric_limits<double>::quiet_NaN();
    } else {
        t.error = j.value("error", "");
    }
    return t;
}

inline void save_ledger(const std::vector<Trial>& ledger, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ledger: " + path);
    for (const Trial& t : ledger) out << trial_to_json(t).dump() << "\n";
}

inline std::vector<Trial> load_ledger(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read ledger: " + path);
    std::vector<Trial> ledger;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            ledger.push_back(trial_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ledger;
}

}  // namespace qforge
