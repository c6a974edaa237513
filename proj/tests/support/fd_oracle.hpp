// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "qforge/tensor.hpp"

namespace qforge::testing {

// Central-difference derivative of a scalar function with respect to one
// element of a leaf tensor. The closure must rebuild the whole forward pass
// so perturbed values flow through.
template <typename F>
double fd_partial(F&& eval, Tensor leaf, std::size_t idx, double h = 1e-4) {
    const double orig = leaf.data()[idx];
    leaf.data()[idx] = orig + h;
    const double fp = eval();
    leaf.data()[idx] = orig - h;
    const double fm = eval();
    leaf.data()[idx] = orig;
    return (fp - fm) / (2.0 * h);
}

// Relative-error comparison with a unit floor so near-zero gradients are
// compared absolutely at the same tolerance.
inline bool grad_close(double analytic, double fd, double tol = 1e-4) {
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(fd)});
    return std::fabs(analytic - fd) / denom <= tol;
}

// Checks every element of every leaf against central differences.
// eval() must run a fresh forward and return the scalar loss value;
// grads must already hold the analytic gradients for those leaves.
template <typename F>
bool check_gradients(F&& eval, const std::vector<Tensor>& leaves, double tol = 1e-4,
                     double h = 1e-4) {
    for (const Tensor& leaf : leaves) {
        for (std::size_t i = 0; i < leaf.size(); ++i) {
            const double fd = fd_partial(eval, leaf, i, h);
            if (!grad_close(leaf.grad()[i], fd, tol)) return false;
        }
    }
    return true;
}

}  // namespace qforge::testing
