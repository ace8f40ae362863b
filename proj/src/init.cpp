#include "inkdiff/init.hpp"

#include <cmath>

namespace inkdiff {

Tensor kaiming_uniform(std::vector<int> shape, int64_t fan_in, RandomStream& rs) {
    Tensor t(std::move(shape));
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<real>((rs.next_uniform() * 2.0 - 1.0) * bound);
    return t;
}

void add_conv_param(ModelParams& p, const std::string& stem, int cout, int cin, int k,
                    RandomStream& rs) {
    add_param(p, stem + ".w", kaiming_uniform({cout, cin, k, k}, static_cast<int64_t>(cin) * k * k, rs));
    add_param(p, stem + ".b", Tensor({cout}));
}

void add_linear_param(ModelParams& p, const std::string& stem, int dout, int din,
                      RandomStream& rs) {
    add_param(p, stem + ".w", kaiming_uniform({dout, din}, din, rs));
    add_param(p, stem + ".b", Tensor({dout}));
}

void add_norm_param(ModelParams& p, const std::string& stem, int c) {
    add_param(p, stem + ".g", Tensor::full({c}, static_cast<real>(1)));
    add_param(p, stem + ".b", Tensor({c}));
}

} // namespace inkdiff
