#include <doctest.h>

#include <cmath>
#include <vector>

#include "inkdiff/autodiff.hpp"
#include "inkdiff/gradcheck.hpp"
#include "inkdiff/rng.hpp"

using namespace inkdiff;

namespace {

NodePtr leaf_of(std::vector<int> shape, std::vector<double> vals) {
    std::vector<real> rv(vals.begin(), vals.end());
    return ag::leaf(Tensor(std::move(shape), std::move(rv)));
}

} // namespace

TEST_CASE("add/sub/mul forward and exact gradients") {
    auto a = leaf_of({3}, {1, 2, 3});
    auto b = leaf_of({3}, {10, 20, 30});
    auto s = ag::sum(ag::mul(ag::add(a, b), ag::sub(a, b)));
    // sum((a+b)(a-b)) = sum(a^2 - b^2) = 14 - 1400 = -1386
    CHECK(s->value[0] == doctest::Approx(-1386));
    ag::backward(s);
    // d/da = 2a, d/db = -2b
    for (int i = 0; i < 3; ++i) {
        CHECK(a->grad[i] == doctest::Approx(2.0 * a->value[i]));
        CHECK(b->grad[i] == doctest::Approx(-2.0 * b->value[i]));
    }
}

TEST_CASE("scale gradient") {
    auto a = leaf_of({2}, {3, -4});
    auto s = ag::sum(ag::scale(a, 2.5));
    CHECK(s->value[0] == doctest::Approx(2.5 * (3 - 4)));
    ag::backward(s);
    CHECK(a->grad[0] == doctest::Approx(2.5));
    CHECK(a->grad[1] == doctest::Approx(2.5));
}

TEST_CASE("silu forward values and derivative") {
    // silu(x) = x * sigmoid(x); silu(0)=0, silu'(0)=0.5
    auto x = leaf_of({3}, {0, 1, -1});
    auto s = ag::sum(ag::silu(x));
    double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(x->value[0] == real(0));
    CHECK(s->value[0] == doctest::Approx(1 * sig1 + (-1) * (1 - sig1)));
    ag::backward(s);
    CHECK(x->grad[0] == doctest::Approx(0.5));
    // d silu = sig(x)(1 + x(1-sig(x)))
    CHECK(x->grad[1] == doctest::Approx(sig1 * (1 + 1 * (1 - sig1))));
}

TEST_CASE("matmul forward and both input grads") {
    auto a = leaf_of({2, 2}, {1, 2, 3, 4});
    auto b = leaf_of({2, 2}, {5, 6, 7, 8});
    auto y = ag::matmul(a, b);
    CHECK(y->value[0] == doctest::Approx(19));
    CHECK(y->value[3] == doctest::Approx(50));
    auto s = ag::sum(y);
    ag::backward(s);
    // dA = 1 * B^T -> rows are column sums of B
    CHECK(a->grad[0] == doctest::Approx(11)); // 5+6
    CHECK(a->grad[1] == doctest::Approx(15)); // 7+8
    CHECK(b->grad[0] == doctest::Approx(4));  // 1+3
    CHECK(b->grad[2] == doctest::Approx(6));  // 2+4
}

TEST_CASE("linear layout y = x*w^T + b") {
    auto x = leaf_of({1, 3}, {1, 2, 3});
    auto w = leaf_of({2, 3}, {1, 0, 0, 0, 0, 1}); // picks x0 and x2
    auto b = leaf_of({2}, {10, 20});
    auto y = ag::linear(x, w, b);
    CHECK(y->value.dim(0) == 1);
    CHECK(y->value.dim(1) == 2);
    CHECK(y->value[0] == doctest::Approx(11));
    CHECK(y->value[1] == doctest::Approx(23));
    ag::backward(ag::sum(y));
    CHECK(b->grad[0] == doctest::Approx(1));
    CHECK(x->grad[0] == doctest::Approx(1)); // w column sums
    CHECK(x->grad[1] == doctest::Approx(0));
    CHECK(x->grad[2] == doctest::Approx(1));
    CHECK(w->grad[0] == doctest::Approx(1)); // dW = dy^T x
    CHECK(w->grad[5] == doctest::Approx(3));
}

TEST_CASE("softmax rows sum to one; uniform logits -> uniform") {
    auto x = leaf_of({2, 3}, {0, 0, 0, 1, 2, 3});
    auto y = ag::softmax(x, 1);
    for (int i = 0; i < 3; ++i) CHECK(y->value[i] == doctest::Approx(1.0 / 3));
    double row1 = static_cast<double>(y->value[3]) + y->value[4] + y->value[5];
    CHECK(row1 == doctest::Approx(1.0));
    CHECK(y->value[5] > y->value[4]);
}

TEST_CASE("masked softmax zeros masked columns, all-zero mask row stays zero") {
    auto x = leaf_of({2, 3}, {1, 1, 1, 5, 5, 5});
    Tensor mask = Tensor::from({2, 3}, {1, 1, 0, 0, 0, 0});
    auto y = ag::masked_softmax_lastdim(x, mask);
    CHECK(y->value[0] == doctest::Approx(0.5));
    CHECK(y->value[1] == doctest::Approx(0.5));
    CHECK(y->value[2] == doctest::Approx(0.0));
    for (int i = 3; i < 6; ++i) CHECK(y->value[i] == doctest::Approx(0.0));
}

TEST_CASE("mse hand value and gradient") {
    auto a = leaf_of({2, 2}, {1, 2, 3, 4});
    auto b = leaf_of({2, 2}, {1, 0, 0, 0});
    auto l = ag::mse(a, b);
    CHECK(l->value[0] == doctest::Approx((0 + 4 + 9 + 16) / 4.0));
    ag::backward(l);
    // d/da = 2(a-b)/n
    CHECK(a->grad[1] == doctest::Approx(2.0 * 2 / 4));
    CHECK(b->grad[1] == doctest::Approx(-2.0 * 2 / 4));
}

TEST_CASE("mean and sum reductions") {
    auto a = leaf_of({4}, {1, 2, 3, 6});
    CHECK(ag::sum(a)->value[0] == doctest::Approx(12));
    auto m = ag::mean(a);
    CHECK(m->value[0] == doctest::Approx(3));
    ag::backward(m);
    for (int i = 0; i < 4; ++i) CHECK(a->grad[i] == doctest::Approx(0.25));
}

TEST_CASE("cross entropy of uniform logits is log(k)") {
    auto logits = leaf_of({2, 4}, {0, 0, 0, 0, 0, 0, 0, 0});
    Tensor onehot = Tensor::from({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0});
    auto l = ag::cross_entropy_logits(logits, onehot);
    CHECK(l->value[0] == doctest::Approx(std::log(4.0)));
    ag::backward(l);
    // grad = (softmax - onehot)/n
    CHECK(logits->grad[0] == doctest::Approx((0.25 - 1.0) / 2));
    CHECK(logits->grad[1] == doctest::Approx(0.25 / 2));
}

TEST_CASE("reshape keeps data, routes gradient through") {
    auto a = leaf_of({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = ag::reshape(a, {3, 2});
    CHECK(r->value.dim(0) == 3);
    CHECK(r->value[4] == real(5));
    ag::backward(ag::sum(ag::mul(r, r)));
    for (int i = 0; i < 6; ++i) CHECK(a->grad[i] == doctest::Approx(2.0 * (i + 1)));
}

TEST_CASE("concat_channels stacks and splits gradient") {
    auto a = leaf_of({1, 1, 2, 2}, {1, 2, 3, 4});
    auto b = leaf_of({1, 2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
    auto c = ag::concat_channels(a, b);
    CHECK(c->value.dim(1) == 3);
    CHECK(c->value[0] == real(1));
    CHECK(c->value[4] == real(5));
    ag::backward(ag::sum(ag::scale(c, 3.0)));
    CHECK(a->grad[0] == doctest::Approx(3));
    CHECK(b->grad[7] == doctest::Approx(3));
}

TEST_CASE("upsample_nearest2x repeats pixels; grad pools 2x2 sums") {
    auto a = leaf_of({1, 1, 2, 2}, {1, 2, 3, 4});
    auto u = ag::upsample_nearest2x(a);
    CHECK(u->value.dim(2) == 4);
    CHECK(u->value[0] == real(1));
    CHECK(u->value[1] == real(1));
    CHECK(u->value[4] == real(1)); // row 1 col 0
    CHECK(u->value[15] == real(4));
    ag::backward(ag::sum(u));
    for (int i = 0; i < 4; ++i) CHECK(a->grad[i] == doctest::Approx(4.0));
}

TEST_CASE("nchw<->nlc round trip") {
    auto a = leaf_of({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto nlc = ag::nchw_to_nlc(a);
    CHECK(nlc->value.dim(1) == 4);
    CHECK(nlc->value.dim(2) == 2);
    // position (h0,w0) holds channels (1,5)
    CHECK(nlc->value[0] == real(1));
    CHECK(nlc->value[1] == real(5));
    auto back = ag::nlc_to_nchw(nlc, 2, 2);
    for (int i = 0; i < 8; ++i) CHECK(back->value[i] == a->value[i]);
    ag::backward(ag::sum(ag::mul(back, back)));
    for (int i = 0; i < 8; ++i) CHECK(a->grad[i] == doctest::Approx(2.0 * (i + 1)));
}

TEST_CASE("embedding picks rows and accumulates row grads") {
    auto table = leaf_of({3, 2}, {0, 1, 10, 11, 20, 21});
    auto e = ag::embedding(table, {2, 0, 2, 1}, 2, 2); // 2 rows of length 2
    CHECK(e->value.dim(0) == 2);
    CHECK(e->value.dim(1) == 2);
    CHECK(e->value.dim(2) == 2);
    CHECK(e->value[0] == real(20));
    CHECK(e->value[3] == real(1));
    ag::backward(ag::sum(e));
    // token 2 used twice -> grad 2 per column
    CHECK(table->grad[4] == doctest::Approx(2));
    CHECK(table->grad[0] == doctest::Approx(1));
    CHECK(table->grad[2] == doctest::Approx(1));
}

TEST_CASE("add_channel_bias broadcasts over n,h,w") {
    auto x = leaf_of({2, 2, 1, 2}, {0, 0, 0, 0, 0, 0, 0, 0});
    auto b = leaf_of({2}, {1, -1});
    auto y = ag::add_channel_bias(x, b);
    CHECK(y->value[0] == real(1));
    CHECK(y->value[2] == real(-1));
    ag::backward(ag::sum(y));
    CHECK(b->grad[0] == doctest::Approx(4)); // n*h*w = 2*1*2
    CHECK(b->grad[1] == doctest::Approx(4));
}

TEST_CASE("add_channel_vec broadcasts per sample") {
    auto x = leaf_of({2, 1, 1, 2}, {0, 0, 0, 0});
    auto v = leaf_of({2, 1}, {5, 7});
    auto y = ag::add_channel_vec(x, v);
    CHECK(y->value[0] == real(5));
    CHECK(y->value[2] == real(7));
    ag::backward(ag::sum(y));
    CHECK(v->grad[0] == doctest::Approx(2));
    CHECK(v->grad[1] == doctest::Approx(2));
}

TEST_CASE("conv2d identity kernel reproduces input") {
    auto x = leaf_of({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<real> kv(9, real(0));
    kv[4] = real(1); // 3x3 delta
    auto k = ag::leaf(Tensor({1, 1, 3, 3}, std::move(kv)));
    auto b = ag::leaf(Tensor({1}));
    auto y = ag::conv2d(x, k, b, 1, 1);
    for (int i = 0; i < 9; ++i) CHECK(y->value[i] == doctest::Approx(static_cast<double>(x->value[i])));
}

TEST_CASE("conv2d rejects non-integral output size") {
    // 6x6 input, 3x3 kernel, stride 2, no padding: (6-3)/2 does not divide
    auto x = ag::leaf(Tensor({1, 1, 6, 6}));
    auto k = ag::leaf(Tensor({1, 1, 3, 3}));
    auto b = ag::leaf(Tensor({1}));
    CHECK_THROWS_AS(ag::conv2d(x, k, b, 2, 0), std::invalid_argument);
    // 2x2/stride-2/pad-0 divides exactly -> fine
    auto k2 = ag::leaf(Tensor({1, 1, 2, 2}));
    auto x2 = ag::leaf(Tensor({1, 1, 4, 4}));
    auto y = ag::conv2d(x2, k2, b, 2, 0);
    CHECK(y->value.dim(2) == 2);
}

TEST_CASE("group_norm normalizes within groups") {
    // one sample, 2 channels, 2 groups of one channel each: each channel
    // standardized independently.
    auto x = leaf_of({1, 2, 1, 2}, {1, 3, 10, 30});
    auto g = leaf_of({2}, {1, 1});
    auto b = leaf_of({2}, {0, 0});
    auto y = ag::group_norm(x, g, b, 2, 1e-5);
    CHECK(y->value[0] == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(y->value[1] == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(y->value[2] == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(y->value[3] == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("grad accumulates when a node is reused") {
    auto a = leaf_of({1}, {3});
    auto s = ag::sum(ag::mul(a, a)); // s = a^2
    ag::backward(s);
    CHECK(a->grad[0] == doctest::Approx(6)); // both paths accumulate
}

TEST_CASE("constants receive no gradient and drop closures") {
    auto c = ag::constant(Tensor::from({2}, {1, 2}));
    auto y = ag::scale(c, 2.0);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty()); // closure dropped: inference graphs stay flat
    CHECK_FALSE(static_cast<bool>(y->backprop));
}

TEST_CASE("finite differences confirm composite graph gradients") {
    // f(x) = mean(silu(x W^T + b) elementwise* x') exercised through grad_check.
    RandomStream rs(55, 0);
    Tensor x0 = rs.normal({4, 3});
    auto f = [&](const NodePtr& x) {
        auto w = ag::constant(RandomStream(56, 0).normal({3, 3}));
        auto b = ag::constant(RandomStream(57, 0).normal({3}));
        return ag::mean(ag::silu(ag::linear(x, w, b)));
    };
    double worst = grad_check(f, x0, 1e-3);
    CHECK(worst < 5e-2); // float32 finite differences
}

TEST_CASE("zero_grad clears accumulation between steps") {
    auto a = leaf_of({2}, {1, 2});
    ag::backward(ag::sum(a));
    CHECK(a->grad[0] == doctest::Approx(1));
    a->zero_grad();
    ag::backward(ag::sum(ag::scale(a, 3.0)));
    CHECK(a->grad[0] == doctest::Approx(3));
}
