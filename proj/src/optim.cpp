#include "inkdiff/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace inkdiff {

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                 int64_t step, const AdamConfig& cfg) {
    require_same_shape(param, grad, "adam_update");
    require_same_shape(param, m, "adam_update(m)");
    require_same_shape(param, v, "adam_update(v)");
    if (cfg.lr <= 0) throw std::invalid_argument("adam_update: lr must be positive");
    double b1 = cfg.beta1, b2 = cfg.beta2;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (int64_t i = 0; i < param.numel(); ++i) {
        double g = static_cast<double>(grad[i]);
        double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
        double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
        m[i] = static_cast<real>(mi);
        v[i] = static_cast<real>(vi);
        double mhat = mi / c1;
        double vhat = vi / c2;
        param[i] = static_cast<real>(static_cast<double>(param[i]) -
                                     cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

void adam_step(ModelParams& params, AdamState& state, const AdamConfig& cfg) {
    ++state.step;
    for (auto& [name, node] : params) {
        if (!node->requires_grad) continue;
        Tensor& g = node->ensure_grad();
        auto mit = state.m.find(name);
        if (mit == state.m.end()) {
            mit = state.m.emplace(name, Tensor(node->value.shape)).first;
            state.v.emplace(name, Tensor(node->value.shape));
        }
        adam_update(node->value, g, mit->second, state.v.at(name), state.step, cfg);
    }
}

} // namespace inkdiff
