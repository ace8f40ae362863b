#pragma once

#include <map>
#include <string>

#include "inkdiff/params.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// first/second moment slots keyed by param name; created lazily on first
// update so partially-trainable sets (lora, dreambooth) only carry state
// for what they train. step counts completed updates.
struct AdamState {
    int64_t step = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

// single-tensor update, exposed for tests and hand-rolled loops
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                 int64_t step, const AdamConfig& cfg);

// updates every param that has requires_grad using the grad on its node
void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg);

} // namespace inkdiff
