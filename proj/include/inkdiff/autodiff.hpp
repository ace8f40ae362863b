#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "inkdiff/tensor.hpp"

namespace inkdiff {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the (acyclic) compute graph. Interior nodes hold the op's
// output value plus a closure that routes the node's gradient to its parents.
// When no parent requires gradients the parents and closure are dropped, so
// inference-only graphs free activations as soon as they go out of scope.
struct Node {
    Tensor value;
    Tensor grad;   // same shape as value once touched; accumulated by sum
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backprop;
    const char* op = "leaf";

    Tensor& ensure_grad();
    void accumulate_grad(const Tensor& g);
    void zero_grad();
};

namespace ag {

NodePtr leaf(Tensor v, bool requires_grad = true);
NodePtr constant(Tensor v);

// elementwise / arithmetic
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double s);
NodePtr silu(const NodePtr& x);

// linear algebra
NodePtr matmul(const NodePtr& a, const NodePtr& b);                  // [m,k]x[k,n]
NodePtr bmm(const NodePtr& a, const NodePtr& b);                     // [B,m,k]x[B,k,n]
NodePtr bmm_nt(const NodePtr& a, const NodePtr& b);                  // [B,m,k]x[B,n,k]^T
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b); // x[n,din]*w^T+b, w[dout,din]

// convolution / normalization (rank 3 treated as batch of one)
NodePtr conv2d(const NodePtr& x, const NodePtr& k, const NodePtr& b, int stride, int padding);
NodePtr group_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, int groups, double eps);

// softmax family
NodePtr softmax(const NodePtr& x, int axis);
// x[..., L] with mask[n, L] (x leading dim n); rows with an all-zero mask
// produce all-zero weights rather than NaN.
NodePtr masked_softmax_lastdim(const NodePtr& x, const Tensor& mask);

// reductions
NodePtr mse(const NodePtr& a, const NodePtr& b);
NodePtr sum(const NodePtr& x);
NodePtr mean(const NodePtr& x);
NodePtr cross_entropy_logits(const NodePtr& logits, const Tensor& onehot);

// structure
NodePtr reshape(const NodePtr& x, std::vector<int> shape);
NodePtr concat_channels(const NodePtr& a, const NodePtr& b);   // [n,c1,h,w]+[n,c2,h,w]
NodePtr upsample_nearest2x(const NodePtr& x);
NodePtr nchw_to_nlc(const NodePtr& x);                         // [n,c,h,w] -> [n,h*w,c]
NodePtr nlc_to_nchw(const NodePtr& x, int h, int w);
NodePtr embedding(const NodePtr& table, const std::vector<int>& ids, int n, int len);
NodePtr add_channel_bias(const NodePtr& x, const NodePtr& b);  // [n,c,h,w] + [c]
NodePtr add_channel_vec(const NodePtr& x, const NodePtr& v);   // [n,c,h,w] + [n,c]

// Reverse accumulation from a scalar root. Gradients sum into grad slots;
// callers zero leaf grads between steps.
void backward(const NodePtr& root);

} // namespace ag

} // namespace inkdiff
