#include "inkdiff/params.hpp"

#include <stdexcept>

namespace inkdiff {

NodePtr add_param(ModelParams& p, const std::string& name, Tensor init) {
    auto [it, ok] = p.emplace(name, ag::leaf(std::move(init), true));
    if (!ok) throw std::invalid_argument("add_param: duplicate name " + name);
    return it->second;
}

const NodePtr& get_param(const ModelParams& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw std::invalid_argument("get_param: no such param " + name);
    return it->second;
}

void zero_grads(ModelParams& p) {
    for (auto& [name, node] : p)
        if (node->requires_grad) node->zero_grad();
}

void set_trainable(ModelParams& p, bool trainable) {
    for (auto& [name, node] : p) node->requires_grad = trainable;
}

int64_t param_count(const ModelParams& p) {
    int64_t n = 0;
    for (const auto& [name, node] : p) n += node->value.numel();
    return n;
}

ModelParams clone_params(const ModelParams& p) {
    ModelParams out;
    for (const auto& [name, node] : p)
        out.emplace(name, ag::leaf(Tensor(node->value), node->requires_grad));
    return out;
}

} // namespace inkdiff
