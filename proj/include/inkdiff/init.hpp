#pragma once

#include <string>

#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff {

// U(-sqrt(6/fan_in), +sqrt(6/fan_in))
Tensor kaiming_uniform(std::vector<int> shape, int64_t fan_in, RandomStream& rs);

// conv weight [cout,cin,k,k] + zero bias, registered as <stem>.w / <stem>.b
void add_conv_param(ModelParams& p, const std::string& stem, int cout, int cin, int k,
                    RandomStream& rs);
void add_linear_param(ModelParams& p, const std::string& stem, int dout, int din,
                      RandomStream& rs);
// group-norm gain (ones) and bias (zeros) as <stem>.g / <stem>.b
void add_norm_param(ModelParams& p, const std::string& stem, int c);

} // namespace inkdiff
