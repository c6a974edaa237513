// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qforge/common.hpp"
#include "qforge/data.hpp"
#include "qforge/model.hpp"
#include "qforge/rng.hpp"
#include "qforge/tensor.hpp"

namespace qforge {

enum class LossKind { mse, cross_entropy };

struct TrainSpec {
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    LossKind loss = LossKind::mse;
    std::uint64_t seed = 0;
    double grad_clip = 1.0;  // global-norm clip; <= 0 disables

    void validate() const {
        if (batch_size < 1) throw ContractError("TrainSpec: batch_size must be >= 1");
        if (!(lr > 0.0)) throw ContractError("TrainSpec: lr must be positive");
        if (patience >= max_epochs) throw ContractError("TrainSpec: patience must be < max_epochs");
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double wall_time_s = 0.0;
};

struct FitResult {
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::vector<EpochLog> history;
    TransformerModel model;  // snapshot at the best epoch
};

// Deep copy: tensors and state are duplicated so the snapshot no longer
// aliases the live training model.
inline TransformerModel clone_model(const TransformerModel& m) {
    TransformerModel out = m;
    auto deep = [](const Tensor& t) {
        Tensor c = Tensor::zeros(t.rows(), t.cols());
        c.data() = t.data();
        c.set_requires_grad(t.requires_grad());
        return c;
    };
    out.w_in = deep(m.w_in);
    out.b_in = deep(m.b_in);
    out.w_q = deep(m.w_q);
    out.b_q = deep(m.b_q);
    out.w_k = deep(m.w_k);
    out.b_k = deep(m.b_k);
    out.w_v = deep(m.w_v);
    out.b_v = deep(m.b_v);
    out.w_attn_out = deep(m.w_attn_out);
    out.b_attn_out = deep(m.b_attn_out);
    out.w_ffn_up = deep(m.w_ffn_up);
    out.b_ffn_up = deep(m.b_ffn_up);
    out.w_ffn_down = deep(m.w_ffn_down);
    out.b_ffn_down = deep(m.b_ffn_down);
    out.w_out = deep(m.w_out);
    out.b_out = deep(m.b_out);
    out.gamma1 = deep(m.gamma1);
    out.beta1 = deep(m.beta1);
    out.gamma2 = deep(m.gamma2);
    out.beta2 = deep(m.beta2);
    out.pe = deep(m.pe);
    return out;  // bn stats / observers are value members, copied already
}

// Adam with the standard constants (0.9, 0.999, 1e-8) and bias correction.
class Adam {
  public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const Tensor& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double g = p.grad()[j];
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.data()[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

  private:
    std::vector<Tensor> params_;
    double lr_, beta1_, beta2_, eps_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

inline void clip_global_norm(std::vector<Tensor>& params, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (Tensor& p : params)
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (Tensor& p : params)
        for (double& g : p.grad()) g *= scale;
}

namespace detail {

inline Tensor batch_loss(Graph& g, TransformerModel& m, const WindowSet& ws,
                         const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                         LossKind kind, ForwardMode mode, Phase phase) {
    const std::size_t count = end - begin;
    std::vector<Tensor> xs;
    xs.reserve(count);
    for (std::size_t i = begin; i < end; ++i) xs.push_back(ws.inputs[idx[i]]);
    const std::vector<Tensor> preds = forward_batch(g, m, xs, mode, phase);
    Tensor total = Tensor::zeros(1, 1);
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t w = idx[i];
        Tensor loss = kind == LossKind::mse
                          ? mse_loss(g, preds[i - begin], ws.targets[w])
                          : cross_entropy_loss(g, preds[i - begin], {ws.class_targets[w]});
        total = add(g, total, loss);
    }
    return mul_scalar(g, total, 1.0 / static_cast<double>(count));
}

}  // namespace detail

inline double evaluate_loss(TransformerModel& m, const WindowSet& ws, LossKind kind,
                            ForwardMode mode) {
    if (ws.size() == 0) throw DataError("evaluate_loss: empty split");
    std::vector<std::size_t> idx(ws.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    // eval-phase forwards are per-window independent; chunk for memory only
    double total = 0.0;
    const std::size_t chunk = 256;
    for (std::size_t begin = 0; begin < ws.size(); begin += chunk) {
        const std::size_t end = std::min(ws.size(), begin + chunk);
        Graph g;
        g.set_recording(false);
        total += detail::batch_loss(g, m, ws, idx, begin, end, kind, mode, Phase::eval).data()[0] *
                 static_cast<double>(end - begin);
    }
    return total / static_cast<double>(ws.size());
}

// Adam-driven training with early stopping: validation loss is evaluated
// after every epoch and training stops once it fails to improve for
// `patience` consecutive epochs. Returns the best-epoch snapshot. Fully
// deterministic given (model, data, spec.seed).
inline FitResult fit(TransformerModel& model, const WindowSet& train, const WindowSet& val,
                     const TrainSpec& spec, ForwardMode mode) {
    spec.validate();
    if (train.size() == 0 || val.size() == 0) throw DataError("fit: empty split");
    const bool classify = spec.loss == LossKind::cross_entropy;
    if (classify && train.class_targets.size() != train.size())
        throw ContractError("fit: cross-entropy needs class targets");
    if (!classify && train.targets.size() != train.size())
        throw ContractError("fit: mse needs regression targets");

    Rng rng(spec.seed);
    Adam opt(model.parameters(), spec.lr);
    FitResult result;
    std::size_t since_best = 0;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::size_t> idx(train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    for (std::size_t epoch = 1; epoch <= spec.max_epochs; ++epoch) {
        rng.shuffle(idx);
        double train_loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < idx.size(); begin += spec.batch_size) {
            const std::size_t end = std::min(idx.size(), begin + spec.batch_size);
            Graph g;
            model.zero_grads();
            Tensor loss = detail::batch_loss(g, model, train, idx, begin, end, spec.loss, mode,
                                             Phase::train);
            const double loss_val = loss.data()[0];
            if (!std::isfinite(loss_val))
                throw TrainingError("fit: non-finite training loss at epoch " +
                                    std::to_string(epoch));
            g.backward(loss);
            auto params = model.parameters();
            clip_global_norm(params, spec.grad_clip);
            opt.step();
            train_loss_sum += loss_val;
            ++batches;
        }
        const double train_loss = train_loss_sum / static_cast<double>(batches);
        const double val_loss = evaluate_loss(model, val, spec.loss, mode);
        if (!std::isfinite(val_loss))
            throw TrainingError("fit: non-finite validation loss at epoch " +
                                std::to_string(epoch));
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back({epoch, train_loss, val_loss, spec.lr, wall});
        result.epochs_run = epoch;

        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.model = clone_model(model);
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= spec.patience) break;
        }
    }
    return result;
}

// ---- metrics -------------------------------------------------------------------

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ContractError("rmse: length mismatch or empty");
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(pred.size()));
}

// Forecasting metric: RMSE on denormalized targets and predictions. The
// inverse Min-Max transform is mandatory for this task.
inline double metric_forecast_rmse(const std::vector<Tensor>& preds,
                                   const std::vector<Tensor>& targets, const MinMax* denorm,
                                   const std::vector<std::size_t>& target_cols) {
    if (denorm == nullptr)
        throw ContractError("metric: forecasting requires the Min-Max denormalizer");
    if (preds.size() != targets.size() || preds.empty())
        throw ContractError("metric: prediction/target count mismatch");
    std::vector<double> p, t;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = 0; j < target_cols.size(); ++j) {
            p.push_back(denorm->inverse_value(target_cols[j], preds[i].at(0, j)));
            t.push_back(denorm->inverse_value(target_cols[j], targets[i].at(0, j)));
        }
    return rmse(p, t);
}

inline double metric_accuracy(const std::vector<std::size_t>& pred,
                              const std::vector<std::size_t>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ContractError("metric: prediction/target count mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Binary F1 on the anomaly-positive class.
inline double metric_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ContractError("metric: prediction/target count mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        if (p && t) ++tp;
        if (p && !t) ++fp;
        if (!p && t) ++fn;
    }
    if (2 * tp + fp + fn == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline std::size_t argmax_row(const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < t.cols(); ++j)
        if (t.at(0, j) > t.at(0, best)) best = j;
    return best;
}

}  // namespace qforge
