#include "inkdiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace inkdiff {

namespace {

double rel_err(double analytic, double fd) {
    double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
    return std::abs(analytic - fd) / denom;
}

} // namespace

double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Tensor& x, double eps) {
    if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("grad_check: eps outside [1e-6, 1e-3]");
    NodePtr leaf = ag::leaf(x, true);
    NodePtr root = f(leaf);
    leaf->zero_grad();
    ag::backward(root);
    Tensor analytic = leaf->grad;

    double worst = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        Tensor xp = x;
        Tensor xm = x;
        xp[i] = static_cast<real>(static_cast<double>(xp[i]) + eps);
        xm[i] = static_cast<real>(static_cast<double>(xm[i]) - eps);
        double fp = static_cast<double>(f(ag::leaf(xp, false))->value.item());
        double fm = static_cast<double>(f(ag::leaf(xm, false))->value.item());
        double fd = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, rel_err(static_cast<double>(analytic[i]), fd));
    }
    return worst;
}

double grad_check_param(const std::function<NodePtr(ModelParams&)>& build, ModelParams& params,
                        const std::string& name, double eps, int max_elems, RandomStream& rs) {
    if (eps < 1e-6 || eps > 1e-3) throw std::invalid_argument("grad_check_param: eps outside [1e-6, 1e-3]");
    NodePtr node = get_param(params, name);
    if (!node->requires_grad) throw std::invalid_argument("grad_check_param: param is frozen: " + name);

    zero_grads(params);
    NodePtr root = build(params);
    ag::backward(root);
    Tensor analytic = node->grad;

    int64_t n = node->value.numel();
    std::vector<int64_t> idx;
    if (max_elems <= 0 || static_cast<int64_t>(max_elems) >= n) {
        idx.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    } else {
        for (int i = 0; i < max_elems; ++i) idx.push_back(rs.next_index(n));
    }

    double worst = 0;
    for (int64_t i : idx) {
        real saved = node->value[i];
        node->value[i] = static_cast<real>(static_cast<double>(saved) + eps);
        double fp = static_cast<double>(build(params)->value.item());
        node->value[i] = static_cast<real>(static_cast<double>(saved) - eps);
        double fm = static_cast<double>(build(params)->value.item());
        node->value[i] = saved;
        double fd = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, rel_err(static_cast<double>(analytic[i]), fd));
    }
    return worst;
}

} // namespace inkdiff
