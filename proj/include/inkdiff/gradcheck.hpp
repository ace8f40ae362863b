#pragma once

#include <functional>
#include <string>

#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff {

// central finite differences vs backward() over every element of x.
// f is re-invoked on perturbed copies, so it must be a pure function of the
// leaf it receives. returns the worst relative error, with the denominator
// floored at 1e-8 so true-zero gradients compare cleanly.
double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Tensor& x, double eps);

// same idea for one named param inside a persistent param set: build(params)
// must rebuild the scalar loss graph from current values. checks up to
// max_elems randomly sampled elements (all of them if max_elems <= 0).
double grad_check_param(const std::function<NodePtr(ModelParams&)>& build, ModelParams& params,
                        const std::string& name, double eps, int max_elems, RandomStream& rs);

} // namespace inkdiff
