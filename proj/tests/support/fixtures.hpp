// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "qforge/intrt.hpp"
#include "qforge/model.hpp"
#include "qforge/rng.hpp"

namespace qforge::testing {

inline Tensor random_window(const ModelConfig& c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor x = Tensor::zeros(c.window, c.features);
    for (double& v : x.data()) v = rng.uniform(lo, hi);
    return x;
}

// Builds a model, runs QAT-mode calibration forwards so observers and
// BatchNorm statistics are populated, and freezes the observers. Gives an
// exportable model without a training run.
inline TransformerModel calibrated_model(const ModelConfig& cfg, std::uint64_t seed,
                                         std::size_t calib_windows = 50) {
    TransformerModel m = build(cfg, seed);
    Rng rng(seed ^ 0xc0ffee);
    std::vector<Tensor> calib;
    for (std::size_t i = 0; i < calib_windows; ++i) calib.push_back(random_window(cfg, rng));
    calibrate(m, calib);
    m.observers.freeze();
    return m;
}

inline ModelConfig tiny_config(std::size_t n = 4, std::size_t m = 1, std::size_t k = 1,
                               std::size_t d = 4, int bits = 8) {
    ModelConfig c;
    c.window = n;
    c.features = m;
    c.outputs = k;
    c.d_model = d;
    c.bits = bits;
    return c;
}

}  // namespace qforge::testing
