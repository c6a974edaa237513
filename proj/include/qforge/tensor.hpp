// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qforge/common.hpp"

namespace qforge {

// Dense row-major 2-D tensor of doubles with an optional gradient buffer.
// Shared-pointer semantics: copies alias the same storage, which is what the
// tape needs to route gradients back to leaves.
class Tensor {
  public:
    Tensor() : impl_(std::make_shared<Impl>()) {}

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        Tensor t;
        t.impl_->rows = rows;
        t.impl_->cols = cols;
        t.impl_->data.assign(rows * cols, 0.0);
        return t;
    }

    static Tensor full(std::size_t rows, std::size_t cols, double value) {
        Tensor t = zeros(rows, cols);
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    static Tensor scalar(double value) { return full(1, 1, value); }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        Tensor t = zeros(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("from_rows: ragged rows");
            std::size_t j = 0;
            for (double v : row) t.at(i, j++) = v;
            ++i;
        }
        return t;
    }

    std::size_t rows() const { return impl_->rows; }
    std::size_t cols() const { return impl_->cols; }
    std::size_t size() const { return impl_->data.size(); }

    double& at(std::size_t r, std::size_t c) { return impl_->data[r * impl_->cols + c]; }
    double at(std::size_t r, std::size_t c) const { return impl_->data[r * impl_->cols + c]; }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        if (v) ensure_grad();
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    void ensure_grad() {
        if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
    }
    void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

    std::vector<double>& grad() {
        ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const { return impl_->grad; }
    double& grad_at(std::size_t r, std::size_t c) { return grad()[r * impl_->cols + c]; }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << rows() << "x" << cols();
        return os.str();
    }

  private:
    struct Impl {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

// Tape of executed operations. Ops append a reverse step while they run;
// backward() replays the tape in exact reverse order. One graph per thread;
// independent graphs share nothing.
class Graph {
  public:
    using Step = std::function<void()>;

    void set_recording(bool on) { recording_ = on; }
    bool recording() const { return recording_; }

    void record(Step step) {
        if (recording_) steps_.push_back(std::move(step));
    }

    void note_output(const Tensor& t) {
        if (recording_) outputs_.push_back(t);
    }

    std::size_t step_count() const { return steps_.size(); }

    void clear() {
        steps_.clear();
        outputs_.clear();
    }

    // Seeds d(loss)/d(loss) = 1 and runs the tape backwards. Intermediate
    // grads are cleared first, so repeated calls accumulate into leaves
    // only.
    void backward(Tensor loss) {
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
        for (Tensor& t : outputs_) t.zero_grad();
        loss.ensure_grad();
        loss.grad()[0] += 1.0;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

  private:
    std::vector<Step> steps_;
    std::vector<Tensor> outputs_;
    bool recording_ = true;
};

namespace detail {
inline void prepare(Graph& g, Tensor& out, std::initializer_list<Tensor> inputs) {
    if (!g.recording()) return;
    out.ensure_grad();
    g.note_output(out);
    for (Tensor t : inputs) t.ensure_grad();
}
}  // namespace detail

// ---- primitive ops -------------------------------------------------------

inline Tensor matmul(Graph& g, Tensor a, Tensor b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                             b.shape_str());
    Tensor out = Tensor::zeros(a.rows(), b.cols());
    const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
            const double av = a.at(i, k);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < r; ++j) out.at(i, j) += av * b.at(k, j);
        }
    detail::prepare(g, out, {a, b});
    g.record([a, b, out, p, q, r]() mutable {
        // dA += dC * B^T ; dB += A^T * dC
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < r; ++j) {
                const double go = out.grad()[i * r + j];
                if (go == 0.0) continue;
                for (std::size_t k = 0; k < q; ++k) {
                    a.grad()[i * q + k] += go * b.at(k, j);
                    b.grad()[k * r + j] += go * a.at(i, k);
                }
            }
    });
    return out;
}

inline Tensor transpose(Graph& g, Tensor a) {
    Tensor out = Tensor::zeros(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    detail::prepare(g, out, {a});
    g.record([a, out]() mutable {
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) a.grad_at(i, j) += out.grad_at(j, i);
    });
    return out;
}

inline Tensor add(Graph& g, Tensor a, Tensor b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("add: shape mismatch, " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    detail::prepare(g, out, {a, b});
    g.record([a, b, out]() mutable {
        for (std::size_t i = 0; i < out.size(); ++i) {
            a.grad()[i] += out.grad()[i];
            b.grad()[i] += out.grad()[i];
        }
    });
    return out;
}

// x (n x d) + bias (1 x d) broadcast over rows.
inline Tensor add_bias(Graph& g, Tensor x, Tensor bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw DimensionError("add_bias: bias must be 1x" + std::to_string(x.cols()) + ", got " +
                             bias.shape_str());
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + bias.at(0, j);
    detail::prepare(g, out, {x, bias});
    g.record([x, bias, out]() mutable {
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) {
                x.grad_at(i, j) += out.grad_at(i, j);
                bias.grad_at(0, j) += out.grad_at(i, j);
            }
    });
    return out;
}

inline Tensor mul_scalar(Graph& g, Tensor a, double s) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    detail::prepare(g, out, {a});
    g.record([a, out, s]() mutable {
        for (std::size_t i = 0; i < out.size(); ++i) a.grad()[i] += s * out.grad()[i];
    });
    return out;
}

inline Tensor relu(Graph& g, Tensor a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::max(0.0, a.data()[i]);
    detail::prepare(g, out, {a});
    g.record([a, out]() mutable {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (a.data()[i] > 0.0) a.grad()[i] += out.grad()[i];
    });
    return out;
}

// Hard clamp. Gradient passes where lo <= x <= hi and is zero outside,
// which is also the straight-through rule fake quantization relies on.
inline Tensor clamp(Graph& g, Tensor a, double lo, double hi) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = clamp_val(a.data()[i], lo, hi);
    detail::prepare(g, out, {a});
    g.record([a, out, lo, hi]() mutable {
        for (std::size_t i = 0; i < out.size(); ++i)
            if (a.data()[i] >= lo && a.data()[i] <= hi) a.grad()[i] += out.grad()[i];
    });
    return out;
}

// Row-wise softmax, stabilized by subtracting the row max.
inline Tensor softmax_rows(Graph& g, Tensor a) {
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double m = a.at(i, 0);
        for (std::size_t j = 1; j < a.cols(); ++j) m = std::max(m, a.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double e = std::exp(a.at(i, j) - m);
            out.at(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) /= sum;
    }
    detail::prepare(g, out, {a});
    g.record([a, out]() mutable {
        // dx_j = y_j * (g_j - sum_k g_k y_k), per row
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j)
                dot += out.grad_at(i, j) * out.at(i, j);
            for (std::size_t j = 0; j < a.cols(); ++j)
                a.grad_at(i, j) += out.at(i, j) * (out.grad_at(i, j) - dot);
        }
    });
    return out;
}

enum class BnMode { train, eval };

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;  // biased (divide by n), same as normalization
    bool initialized = false;
};

// BatchNorm over the rows of an n x d tensor, per-channel gamma/beta (1 x d).
// Train mode uses batch statistics and folds them into the running EMA;
// eval mode uses the running statistics.
inline Tensor batchnorm(Graph& g, Tensor x, Tensor gamma, Tensor beta,
                        BatchNormStats& stats, BnMode mode, double eps = 1e-5,
                        double momentum = 0.1) {
    const std::size_t n = x.rows(), d = x.cols();
    if (gamma.cols() != d || beta.cols() != d || gamma.rows() != 1 || beta.rows() != 1)
        throw DimensionError("batchnorm: gamma/beta must be 1x" + std::to_string(d));
    if (n == 0) throw DimensionError("batchnorm: empty batch");

    std::vector<double> mean(d, 0.0), var(d, 0.0);
    if (mode == BnMode::train) {
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += x.at(i, j);
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = x.at(i, j) - m;
                v += c * c;
            }
            v /= static_cast<double>(n);
            mean[j] = m;
            var[j] = v;
        }
        if (!stats.initialized) {
            stats.running_mean = mean;
            stats.running_var = var;
            stats.initialized = true;
        } else {
            for (std::size_t j = 0; j < d; ++j) {
                stats.running_mean[j] = (1.0 - momentum) * stats.running_mean[j] + momentum * mean[j];
                stats.running_var[j] = (1.0 - momentum) * stats.running_var[j] + momentum * var[j];
            }
        }
    } else {
        if (!stats.initialized)
            throw StateError("batchnorm: eval mode before any training statistics");
        mean = stats.running_mean;
        var = stats.running_var;
    }

    Tensor out = Tensor::zeros(n, d);
    // Keep x_hat for the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(n * d);
    std::vector<double> inv_std(d);
    for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (x.at(i, j) - mean[j]) * inv_std[j];
            (*xhat)[i * d + j] = xh;
            out.at(i, j) = gamma.at(0, j) * xh + beta.at(0, j);
        }

    detail::prepare(g, out, {x, gamma, beta});
    const bool train = mode == BnMode::train;
    g.record([x, gamma, beta, out, xhat, inv_std, n, d, train]() mutable {
        for (std::size_t j = 0; j < d; ++j) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double go = out.grad_at(i, j);
                sum_g += go;
                sum_gx += go * (*xhat)[i * d + j];
            }
            gamma.grad_at(0, j) += sum_gx;
            beta.grad_at(0, j) += sum_g;
            const double gj = gamma.at(0, j);
            if (train) {
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double go = out.grad_at(i, j);
                    x.grad_at(i, j) += gj * inv_std[j] *
                                       (go - inv_n * sum_g - (*xhat)[i * d + j] * inv_n * sum_gx);
                }
            } else {
                for (std::size_t i = 0; i < n; ++i)
                    x.grad_at(i, j) += gj * inv_std[j] * out.grad_at(i, j);
            }
        }
    });
    return out;
}

// Column-wise mean: n x d -> 1 x d.
inline Tensor global_avg_pool(Graph& g, Tensor x) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0) throw DimensionError("global_avg_pool: empty input");
    Tensor out = Tensor::zeros(1, d);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x.at(i, j);
        out.at(0, j) = s / static_cast<double>(n);
    }
    detail::prepare(g, out, {x});
    g.record([x, out, n, d]() mutable {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < n; ++i) x.grad_at(i, j) += inv_n * out.grad_at(0, j);
    });
    return out;
}

// Stacks same-width tensors along rows.
inline Tensor concat_rows(Graph& g, std::vector<Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].cols();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
        total += p.rows();
    }
    Tensor out = Tensor::zeros(total, cols);
    std::size_t row = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + row * cols);
        row += p.rows();
    }
    if (g.recording()) {
        out.ensure_grad();
        g.note_output(out);
        for (Tensor p : parts) p.ensure_grad();
        g.record([parts, out, cols]() mutable {
            std::size_t row = 0;
            for (Tensor& p : parts) {
                for (std::size_t i = 0; i < p.size(); ++i)
                    p.grad()[i] += out.grad()[row * cols + i];
                row += p.rows();
            }
        });
    }
    return out;
}

// Row slice [begin, begin + count).
inline Tensor slice_rows(Graph& g, Tensor x, std::size_t begin, std::size_t count) {
    if (begin + count > x.rows()) throw DimensionError("slice_rows: out of range");
    const std::size_t cols = x.cols();
    Tensor out = Tensor::zeros(count, cols);
    std::copy(x.data().begin() + begin * cols, x.data().begin() + (begin + count) * cols,
              out.data().begin());
    detail::prepare(g, out, {x});
    g.record([x, out, begin, cols]() mutable {
        for (std::size_t i = 0; i < out.size(); ++i)
            x.grad()[begin * cols + i] += out.grad()[i];
    });
    return out;
}

inline Tensor sum_all(Graph& g, Tensor x) {
    Tensor out = Tensor::zeros(1, 1);
    for (double v : x.data()) out.data()[0] += v;
    detail::prepare(g, out, {x});
    g.record([x, out]() mutable {
        for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] += out.grad()[0];
    });
    return out;
}

// Mean squared error, mean-reduced over all elements.
inline Tensor mse_loss(Graph& g, Tensor pred, Tensor target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionError("mse_loss: shape mismatch, " + pred.shape_str() + " vs " +
                             target.shape_str());
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    Tensor out = Tensor::zeros(1, 1);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred.data()[i] - target.data()[i];
        out.data()[0] += diff * diff;
    }
    out.data()[0] *= inv_n;
    detail::prepare(g, out, {pred});
    g.record([pred, target, out, inv_n]() mutable {
        const double go = out.grad()[0];
        for (std::size_t i = 0; i < pred.size(); ++i)
            pred.grad()[i] += go * 2.0 * inv_n * (pred.data()[i] - target.data()[i]);
    });
    return out;
}

// Cross entropy over rows of logits with integer class targets,
// mean-reduced over rows, stabilized via log-sum-exp.
inline Tensor cross_entropy_loss(Graph& g, Tensor logits,
                                 const std::vector<std::size_t>& targets) {
    const std::size_t n = logits.rows(), k = logits.cols();
    if (targets.size() != n)
        throw DimensionError("cross_entropy_loss: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
    for (std::size_t t : targets)
        if (t >= k)
            throw ContractError("cross_entropy_loss: class index " + std::to_string(t) +
                                " out of range for k=" + std::to_string(k));
    Tensor out = Tensor::zeros(1, 1);
    auto probs = std::make_shared<std::vector<double>>(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        double m = logits.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(logits.at(i, j) - m);
        const double lse = m + std::log(sum);
        out.data()[0] += lse - logits.at(i, targets[i]);
        for (std::size_t j = 0; j < k; ++j)
            (*probs)[i * k + j] = std::exp(logits.at(i, j) - lse);
    }
    out.data()[0] /= static_cast<double>(n);
    detail::prepare(g, out, {logits});
    g.record([logits, out, probs, targets, n, k]() mutable {
        const double go = out.grad()[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double one_hot = j == targets[i] ? 1.0 : 0.0;
                logits.grad_at(i, j) += go * ((*probs)[i * k + j] - one_hot);
            }
    });
    return out;
}

}  // namespace qforge
