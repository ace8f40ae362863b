#pragma once

#include <map>
#include <string>

#include "inkdiff/autodiff.hpp"

namespace inkdiff {

// named parameter set; std::map keeps iteration order stable so optimizer
// state and serialization are deterministic
using ModelParams = std::map<std::string, NodePtr>;

// registers a fresh leaf; throws if the name is taken
NodePtr add_param(ModelParams& p, const std::string& name, Tensor init);

// throws if absent
const NodePtr& get_param(const ModelParams& p, const std::string& name);

void zero_grads(ModelParams& p);

// flips requires_grad on every param (freeze / unfreeze)
void set_trainable(ModelParams& p, bool trainable);

int64_t param_count(const ModelParams& p);

// deep copy: fresh leaves with copied values, grads dropped,
// requires_grad preserved
ModelParams clone_params(const ModelParams& p);

} // namespace inkdiff
