#include "inkdiff/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "inkdiff/kernels.hpp"
#include "inkdiff/parallel.hpp"

namespace inkdiff {

Tensor& Node::ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
    return grad;
}

void Node::accumulate_grad(const Tensor& g) {
    Tensor& slot = ensure_grad();
    require_same_shape(slot, g, "accumulate_grad");
    for (size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
}

void Node::zero_grad() {
    if (grad.data.empty())
        grad = Tensor(value.shape);
    else
        grad.zero();
}

namespace ag {

namespace {

NodePtr make(const char* op, Tensor value, std::vector<NodePtr> parents,
             std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    bool req = false;
    for (const auto& p : parents)
        if (p->requires_grad) req = true;
    n->requires_grad = req;
    if (req) {
        n->parents = std::move(parents);
        n->backprop = std::move(bp);
    }
    return n;
}

} // namespace

NodePtr leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr constant(Tensor v) { return leaf(std::move(v), false); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make("add", std::move(out), {a, b}, [](Node& self) {
        for (int pi = 0; pi < 2; ++pi) {
            Node& p = *self.parents[static_cast<size_t>(pi)];
            if (p.requires_grad) p.accumulate_grad(self.grad);
        }
    });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make("sub", std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) pa.accumulate_grad(self.grad);
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
        }
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make("mul", std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

NodePtr scale(const NodePtr& a, double s) {
    Tensor out(a->value.shape);
    real rs = static_cast<real>(s);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * rs;
    return make("scale", std::move(out), {a}, [rs](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * rs;
    });
}

NodePtr silu(const NodePtr& x) {
    Tensor out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = static_cast<double>(x->value[i]);
        out[i] = static_cast<real>(v / (1.0 + std::exp(-v)));
    }
    return make("silu", std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) {
            double v = static_cast<double>(p.value[i]);
            double sig = 1.0 / (1.0 + std::exp(-v));
            g[i] += self.grad[i] * static_cast<real>(sig * (1.0 + v * (1.0 - sig)));
        }
    });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2)
        throw std::invalid_argument("matmul: expects rank-2 tensors");
    int64_t m = a->value.dim(0), k = a->value.dim(1);
    if (b->value.dim(0) != k)
        throw std::invalid_argument("matmul: inner dims differ, " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    int64_t n = b->value.dim(1);
    Tensor out({static_cast<int>(m), static_cast<int>(n)});
    gemm(a->value.ptr(), b->value.ptr(), out.ptr(), m, k, n);
    return make("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) // dA += dC * B^T
            gemm_nt_acc(self.grad.ptr(), pb.value.ptr(), pa.ensure_grad().ptr(), m, n, k);
        if (pb.requires_grad) { // dB += A^T * dC
            Tensor tmp({static_cast<int>(k), static_cast<int>(n)});
            gemm_tn(pa.value.ptr(), self.grad.ptr(), tmp.ptr(), k, m, n);
            pb.accumulate_grad(tmp);
        }
    });
}

NodePtr bmm(const NodePtr& a, const NodePtr& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(0) != b->value.dim(0) ||
        a->value.dim(2) != b->value.dim(1))
        throw std::invalid_argument("bmm: incompatible shapes " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    int64_t batch = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2), n = b->value.dim(2);
    Tensor out({static_cast<int>(batch), static_cast<int>(m), static_cast<int>(n)});
    for (int64_t i = 0; i < batch; ++i)
        gemm(a->value.ptr() + i * m * k, b->value.ptr() + i * k * n, out.ptr() + i * m * n, m, k, n);
    return make("bmm", std::move(out), {a, b}, [batch, m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            real* ga = pa.ensure_grad().ptr();
            for (int64_t i = 0; i < batch; ++i)
                gemm_nt_acc(self.grad.ptr() + i * m * n, pb.value.ptr() + i * k * n, ga + i * m * k, m, n, k);
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.ensure_grad();
            Tensor tmp({static_cast<int>(k), static_cast<int>(n)});
            for (int64_t i = 0; i < batch; ++i) {
                gemm_tn(pa.value.ptr() + i * m * k, self.grad.ptr() + i * m * n, tmp.ptr(), k, m, n);
                real* dst = gb.ptr() + i * k * n;
                for (int64_t j = 0; j < k * n; ++j) dst[j] += tmp[j];
            }
        }
    });
}

NodePtr bmm_nt(const NodePtr& a, const NodePtr& b) {
    if (a->value.rank() != 3 || b->value.rank() != 3 || a->value.dim(0) != b->value.dim(0) ||
        a->value.dim(2) != b->value.dim(2))
        throw std::invalid_argument("bmm_nt: incompatible shapes " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    int64_t batch = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2), n = b->value.dim(1);
    Tensor out({static_cast<int>(batch), static_cast<int>(m), static_cast<int>(n)});
    out.zero();
    for (int64_t i = 0; i < batch; ++i)
        gemm_nt_acc(a->value.ptr() + i * m * k, b->value.ptr() + i * n * k, out.ptr() + i * m * n, m, k, n);
    return make("bmm_nt", std::move(out), {a, b}, [batch, m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) { // dA_i += dC_i * B_i
            real* ga = pa.ensure_grad().ptr();
            Tensor tmp({static_cast<int>(m), static_cast<int>(k)});
            for (int64_t i = 0; i < batch; ++i) {
                gemm(self.grad.ptr() + i * m * n, pb.value.ptr() + i * n * k, tmp.ptr(), m, n, k);
                real* dst = ga + i * m * k;
                for (int64_t j = 0; j < m * k; ++j) dst[j] += tmp[j];
            }
        }
        if (pb.requires_grad) { // dB_i += dC_i^T * A_i
            real* gb = pb.ensure_grad().ptr();
            Tensor tmp({static_cast<int>(n), static_cast<int>(k)});
            for (int64_t i = 0; i < batch; ++i) {
                gemm_tn(self.grad.ptr() + i * m * n, pa.value.ptr() + i * m * k, tmp.ptr(), n, m, k);
                real* dst = gb + i * n * k;
                for (int64_t j = 0; j < n * k; ++j) dst[j] += tmp[j];
            }
        }
    });
}

NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b) {
    if (x->value.rank() != 2 || w->value.rank() != 2 || x->value.dim(1) != w->value.dim(1))
        throw std::invalid_argument("linear: incompatible shapes " + shape_str(x->value.shape) + " vs " + shape_str(w->value.shape));
    int64_t n = x->value.dim(0), din = x->value.dim(1), dout = w->value.dim(0);
    if (b && b->value.numel() != dout)
        throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({static_cast<int>(n), static_cast<int>(dout)});
    out.zero();
    gemm_nt_acc(x->value.ptr(), w->value.ptr(), out.ptr(), n, din, dout);
    if (b) {
        for (int64_t i = 0; i < n; ++i) {
            real* row = out.ptr() + i * dout;
            for (int64_t j = 0; j < dout; ++j) row[j] += b->value[j];
        }
    }
    std::vector<NodePtr> parents = b ? std::vector<NodePtr>{x, w, b} : std::vector<NodePtr>{x, w};
    return make("linear", std::move(out), std::move(parents), [n, din, dout](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        if (px.requires_grad) { // dX += dY * W
            Tensor tmp({static_cast<int>(n), static_cast<int>(din)});
            gemm(self.grad.ptr(), pw.value.ptr(), tmp.ptr(), n, dout, din);
            px.accumulate_grad(tmp);
        }
        if (pw.requires_grad) // dW += dY^T * X
            gemm_tn(self.grad.ptr(), px.value.ptr(), pw.ensure_grad().ptr(), dout, n, din);
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Tensor& gb = self.parents[2]->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                const real* row = self.grad.ptr() + i * dout;
                for (int64_t j = 0; j < dout; ++j) gb[j] += row[j];
            }
        }
    });
}

namespace {

struct ConvDims {
    int n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
    bool batched_input;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, int stride, int padding) {
    if (x.rank() != 3 && x.rank() != 4) throw std::invalid_argument("conv2d: input must be rank 3 or 4");
    if (k.rank() != 4) throw std::invalid_argument("conv2d: kernel must be rank 4");
    ConvDims d{};
    d.batched_input = x.rank() == 4;
    d.n = d.batched_input ? x.dim(0) : 1;
    d.cin = x.dim(d.batched_input ? 1 : 0);
    d.h = x.dim(d.batched_input ? 2 : 1);
    d.w = x.dim(d.batched_input ? 3 : 2);
    d.cout = k.dim(0);
    d.kh = k.dim(2);
    d.kw = k.dim(3);
    d.stride = stride;
    d.pad = padding;
    if (k.dim(1) != d.cin) throw std::invalid_argument("conv2d: channel mismatch");
    if (d.kh < 1 || d.kw < 1) throw std::invalid_argument("conv2d: bad kernel dims");
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    int num = d.h + 2 * d.pad - d.kh;
    int numw = d.w + 2 * d.pad - d.kw;
    if (num < 0 || numw < 0 || num % stride != 0 || numw % stride != 0)
        throw std::invalid_argument("conv2d: non-integral output size");
    d.oh = num / stride + 1;
    d.ow = numw / stride + 1;
    return d;
}

} // namespace

NodePtr conv2d(const NodePtr& x, const NodePtr& k, const NodePtr& b, int stride, int padding) {
    ConvDims d = conv_dims(x->value, k->value, stride, padding);
    if (b && b->value.numel() != d.cout) throw std::invalid_argument("conv2d: bias size mismatch");
    std::vector<int> oshape = d.batched_input
                                  ? std::vector<int>{d.n, d.cout, d.oh, d.ow}
                                  : std::vector<int>{d.cout, d.oh, d.ow};
    Tensor out(oshape);
    int64_t krows = static_cast<int64_t>(d.cin) * d.kh * d.kw;
    int64_t ncols = static_cast<int64_t>(d.oh) * d.ow;
    int64_t in_img = static_cast<int64_t>(d.cin) * d.h * d.w;
    int64_t out_img = static_cast<int64_t>(d.cout) * ncols;
    {
        const real* xp = x->value.ptr();
        real* op = out.ptr();
        const real* kp = k->value.ptr();
        const real* bp = b ? b->value.ptr() : nullptr;
        parallel_for(d.n, [&](int64_t lo, int64_t hi) {
            Tensor cols({static_cast<int>(krows), static_cast<int>(ncols)});
            for (int64_t i = lo; i < hi; ++i) {
                im2col(xp + i * in_img, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, cols.ptr());
                gemm(kp, cols.ptr(), op + i * out_img, d.cout, krows, ncols);
                if (bp) {
                    real* img = op + i * out_img;
                    for (int c = 0; c < d.cout; ++c) {
                        real bv = bp[c];
                        real* plane = img + static_cast<int64_t>(c) * ncols;
                        for (int64_t j = 0; j < ncols; ++j) plane[j] += bv;
                    }
                }
            }
        });
    }
    std::vector<NodePtr> parents = b ? std::vector<NodePtr>{x, k, b} : std::vector<NodePtr>{x, k};
    return make("conv2d", std::move(out), std::move(parents),
                [d, krows, ncols, in_img, out_img](Node& self) {
        Node& px = *self.parents[0];
        Node& pk = *self.parents[1];
        Tensor cols({static_cast<int>(krows), static_cast<int>(ncols)});
        Tensor dcols({static_cast<int>(krows), static_cast<int>(ncols)});
        real* gx = px.requires_grad ? px.ensure_grad().ptr() : nullptr;
        real* gk = pk.requires_grad ? pk.ensure_grad().ptr() : nullptr;
        for (int64_t i = 0; i < d.n; ++i) {
            const real* dy = self.grad.ptr() + i * out_img;
            if (gk) {
                im2col(px.value.ptr() + i * in_img, d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, cols.ptr());
                gemm_nt_acc(dy, cols.ptr(), gk, d.cout, ncols, krows);
            }
            if (gx) {
                gemm_tn(pk.value.ptr(), dy, dcols.ptr(), krows, d.cout, ncols);
                col2im_acc(dcols.ptr(), d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.oh, d.ow, gx + i * in_img);
            }
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
            Tensor& gb = self.parents[2]->ensure_grad();
            for (int64_t i = 0; i < d.n; ++i) {
                const real* dy = self.grad.ptr() + i * out_img;
                for (int c = 0; c < d.cout; ++c) {
                    const real* plane = dy + static_cast<int64_t>(c) * ncols;
                    double acc = 0;
                    for (int64_t j = 0; j < ncols; ++j) acc += static_cast<double>(plane[j]);
                    gb[c] += static_cast<real>(acc);
                }
            }
        }
    });
}

NodePtr group_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias, int groups, double eps) {
    const Tensor& xv = x->value;
    if (xv.rank() != 3 && xv.rank() != 4) throw std::invalid_argument("group_norm: input must be rank 3 or 4");
    bool batched = xv.rank() == 4;
    int n = batched ? xv.dim(0) : 1;
    int c = xv.dim(batched ? 1 : 0);
    int64_t hw = static_cast<int64_t>(xv.dim(batched ? 2 : 1)) * xv.dim(batched ? 3 : 2);
    if (groups < 1 || c % groups != 0)
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    if (eps <= 0) throw std::invalid_argument("group_norm: eps must be positive");
    if (gain->value.numel() != c || bias->value.numel() != c)
        throw std::invalid_argument("group_norm: gain/bias size mismatch");
    int cpg = c / groups;
    int64_t gsize = cpg * hw;
    Tensor out(xv.shape);
    Tensor stats({n, groups, 2}); // mean, inv_std per (image, group)
    for (int64_t i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const real* base = xv.ptr() + (i * c + static_cast<int64_t>(g) * cpg) * hw;
            double s1 = 0, s2 = 0;
            for (int64_t j = 0; j < gsize; ++j) {
                double v = static_cast<double>(base[j]);
                s1 += v;
                s2 += v * v;
            }
            double mean = s1 / static_cast<double>(gsize);
            double var = s2 / static_cast<double>(gsize) - mean * mean;
            if (var < 0) var = 0;
            double inv = 1.0 / std::sqrt(var + eps);
            stats[(i * groups + g) * 2] = static_cast<real>(mean);
            stats[(i * groups + g) * 2 + 1] = static_cast<real>(inv);
            real* dst = out.ptr() + (i * c + static_cast<int64_t>(g) * cpg) * hw;
            for (int ch = 0; ch < cpg; ++ch) {
                real gm = gain->value[static_cast<int64_t>(g) * cpg + ch];
                real bt = bias->value[static_cast<int64_t>(g) * cpg + ch];
                const real* src = base + static_cast<int64_t>(ch) * hw;
                real* drow = dst + static_cast<int64_t>(ch) * hw;
                for (int64_t j = 0; j < hw; ++j)
                    drow[j] = static_cast<real>((static_cast<double>(src[j]) - mean) * inv) * gm + bt;
            }
        }
    }
    return make("group_norm", std::move(out), {x, gain, bias},
                [n, c, hw, groups, cpg, gsize, stats](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        real* gx = px.requires_grad ? px.ensure_grad().ptr() : nullptr;
        real* gg = pg.requires_grad ? pg.ensure_grad().ptr() : nullptr;
        real* gb = pb.requires_grad ? pb.ensure_grad().ptr() : nullptr;
        for (int64_t i = 0; i < n; ++i) {
            for (int g = 0; g < groups; ++g) {
                int64_t off = (i * c + static_cast<int64_t>(g) * cpg) * hw;
                const real* xb = px.value.ptr() + off;
                const real* dy = self.grad.ptr() + off;
                double mean = static_cast<double>(stats[(i * groups + g) * 2]);
                double inv = static_cast<double>(stats[(i * groups + g) * 2 + 1]);
                // per-channel reductions feed both the affine grads and dx
                double sum_dxh = 0, sum_dxh_xh = 0;
                for (int ch = 0; ch < cpg; ++ch) {
                    double gm = static_cast<double>(pg.value[static_cast<int64_t>(g) * cpg + ch]);
                    const real* xr = xb + static_cast<int64_t>(ch) * hw;
                    const real* dr = dy + static_cast<int64_t>(ch) * hw;
                    double sg = 0, sb = 0;
                    for (int64_t j = 0; j < hw; ++j) {
                        double xh = (static_cast<double>(xr[j]) - mean) * inv;
                        double d = static_cast<double>(dr[j]);
                        sb += d;
                        sg += d * xh;
                    }
                    if (gg) gg[static_cast<int64_t>(g) * cpg + ch] += static_cast<real>(sg);
                    if (gb) gb[static_cast<int64_t>(g) * cpg + ch] += static_cast<real>(sb);
                    sum_dxh += sb * gm;
                    sum_dxh_xh += sg * gm;
                }
                if (gx) {
                    double m1 = sum_dxh / static_cast<double>(gsize);
                    double m2 = sum_dxh_xh / static_cast<double>(gsize);
                    real* dst = gx + off;
                    for (int ch = 0; ch < cpg; ++ch) {
                        double gm = static_cast<double>(pg.value[static_cast<int64_t>(g) * cpg + ch]);
                        const real* xr = xb + static_cast<int64_t>(ch) * hw;
                        const real* dr = dy + static_cast<int64_t>(ch) * hw;
                        real* drow = dst + static_cast<int64_t>(ch) * hw;
                        for (int64_t j = 0; j < hw; ++j) {
                            double xh = (static_cast<double>(xr[j]) - mean) * inv;
                            double dxh = static_cast<double>(dr[j]) * gm;
                            drow[j] += static_cast<real>(inv * (dxh - m1 - xh * m2));
                        }
                    }
                }
            }
        }
    });
}

namespace {

void softmax_line(const real* x, real* y, int64_t len, int64_t stride) {
    double mx = -1e300;
    for (int64_t i = 0; i < len; ++i) mx = std::max(mx, static_cast<double>(x[i * stride]));
    double s = 0;
    for (int64_t i = 0; i < len; ++i) s += std::exp(static_cast<double>(x[i * stride]) - mx);
    for (int64_t i = 0; i < len; ++i)
        y[i * stride] = static_cast<real>(std::exp(static_cast<double>(x[i * stride]) - mx) / s);
}

} // namespace

NodePtr softmax(const NodePtr& x, int axis) {
    const Tensor& xv = x->value;
    if (axis < 0) axis += xv.rank();
    if (axis < 0 || axis >= xv.rank()) throw std::invalid_argument("softmax: axis out of range");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xv.dim(i);
    for (int i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
    int64_t len = xv.dim(axis);
    Tensor out(xv.shape);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in)
            softmax_line(xv.ptr() + o * len * inner + in, out.ptr() + o * len * inner + in, len, inner);
    Tensor yv = out;
    return make("softmax", std::move(out), {x}, [outer, inner, len, yv](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const real* y = yv.ptr() + o * len * inner + in;
                const real* dy = self.grad.ptr() + o * len * inner + in;
                real* dx = g.ptr() + o * len * inner + in;
                double dot = 0;
                for (int64_t i = 0; i < len; ++i)
                    dot += static_cast<double>(dy[i * inner]) * static_cast<double>(y[i * inner]);
                for (int64_t i = 0; i < len; ++i)
                    dx[i * inner] += static_cast<real>(static_cast<double>(y[i * inner]) *
                                                        (static_cast<double>(dy[i * inner]) - dot));
            }
        }
    });
}

NodePtr masked_softmax_lastdim(const NodePtr& x, const Tensor& mask) {
    const Tensor& xv = x->value;
    if (xv.rank() < 2) throw std::invalid_argument("masked_softmax: rank must be >= 2");
    int64_t len = xv.dim(xv.rank() - 1);
    int n = xv.dim(0);
    if (mask.rank() != 2 || mask.dim(0) != n || mask.dim(1) != len)
        throw std::invalid_argument("masked_softmax: mask must be [n, len]");
    int64_t rows = xv.numel() / len;
    int64_t rows_per_batch = rows / n;
    Tensor out(xv.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const real* mrow = mask.ptr() + (r / rows_per_batch) * len;
        const real* xr = xv.ptr() + r * len;
        real* yr = out.ptr() + r * len;
        double mx = -1e300;
        for (int64_t i = 0; i < len; ++i)
            if (mrow[i] != 0) mx = std::max(mx, static_cast<double>(xr[i]));
        double s = 0;
        for (int64_t i = 0; i < len; ++i)
            if (mrow[i] != 0) s += std::exp(static_cast<double>(xr[i]) - mx);
        for (int64_t i = 0; i < len; ++i)
            yr[i] = (mrow[i] != 0 && s > 0)
                        ? static_cast<real>(std::exp(static_cast<double>(xr[i]) - mx) / s)
                        : 0;
    }
    Tensor yv = out;
    Tensor mk = mask;
    return make("masked_softmax", std::move(out), {x}, [rows, rows_per_batch, len, yv, mk](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const real* mrow = mk.ptr() + (r / rows_per_batch) * len;
            const real* y = yv.ptr() + r * len;
            const real* dy = self.grad.ptr() + r * len;
            real* dx = g.ptr() + r * len;
            double dot = 0;
            for (int64_t i = 0; i < len; ++i)
                dot += static_cast<double>(dy[i]) * static_cast<double>(y[i]);
            for (int64_t i = 0; i < len; ++i)
                if (mrow[i] != 0)
                    dx[i] += static_cast<real>(static_cast<double>(y[i]) * (static_cast<double>(dy[i]) - dot));
        }
    });
}

NodePtr mse(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a->value, b->value, "mse");
    int64_t n = a->value.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<real>(acc / static_cast<double>(n)));
    return make("mse", std::move(out), {a, b}, [n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        real s = self.grad[0] * static_cast<real>(2.0 / static_cast<double>(n));
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += s * (pa.value[i] - pb.value[i]);
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] -= s * (pa.value[i] - pb.value[i]);
        }
    });
}

NodePtr sum(const NodePtr& x) {
    Tensor out = Tensor::scalar(static_cast<real>(sum_all(x->value)));
    return make("sum", std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        real s = self.grad[0];
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s;
    });
}

NodePtr mean(const NodePtr& x) {
    int64_t n = x->value.numel();
    Tensor out = Tensor::scalar(static_cast<real>(mean_all(x->value)));
    return make("mean", std::move(out), {x}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        real s = self.grad[0] / static_cast<real>(n);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s;
    });
}

NodePtr cross_entropy_logits(const NodePtr& logits, const Tensor& onehot) {
    require_same_shape(logits->value, onehot, "cross_entropy_logits");
    if (logits->value.rank() != 2) throw std::invalid_argument("cross_entropy_logits: expects [n, k]");
    int64_t n = logits->value.dim(0), k = logits->value.dim(1);
    double total = 0;
    for (int64_t i = 0; i < n; ++i) {
        const real* z = logits->value.ptr() + i * k;
        const real* y = onehot.ptr() + i * k;
        double mx = -1e300;
        for (int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
        double lse = 0, dot = 0;
        for (int64_t j = 0; j < k; ++j) {
            lse += std::exp(static_cast<double>(z[j]) - mx);
            dot += static_cast<double>(z[j]) * static_cast<double>(y[j]);
        }
        total += mx + std::log(lse) - dot;
    }
    Tensor out = Tensor::scalar(static_cast<real>(total / static_cast<double>(n)));
    Tensor target = onehot;
    return make("cross_entropy", std::move(out), {logits}, [n, k, target](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        real s = self.grad[0] / static_cast<real>(n);
        for (int64_t i = 0; i < n; ++i) {
            const real* z = p.value.ptr() + i * k;
            const real* y = target.ptr() + i * k;
            real* dz = g.ptr() + i * k;
            double mx = -1e300;
            for (int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
            double lse = 0;
            for (int64_t j = 0; j < k; ++j) lse += std::exp(static_cast<double>(z[j]) - mx);
            for (int64_t j = 0; j < k; ++j) {
                double soft = std::exp(static_cast<double>(z[j]) - mx) / lse;
                dz[j] += s * static_cast<real>(soft - static_cast<double>(y[j]));
            }
        }
    });
}

NodePtr reshape(const NodePtr& x, std::vector<int> shape) {
    if (shape_numel(shape) != x->value.numel())
        throw std::invalid_argument("reshape: numel mismatch");
    Tensor out(std::move(shape), x->value.data);
    return make("reshape", std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

NodePtr concat_channels(const NodePtr& a, const NodePtr& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) ||
        av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes");
    int n = av.dim(0), c1 = av.dim(1), c2 = bv.dim(1);
    int64_t hw = static_cast<int64_t>(av.dim(2)) * av.dim(3);
    Tensor out({n, c1 + c2, av.dim(2), av.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::memcpy(out.ptr() + (static_cast<int64_t>(i) * (c1 + c2)) * hw,
                    av.ptr() + static_cast<int64_t>(i) * c1 * hw, sizeof(real) * static_cast<size_t>(c1 * hw));
        std::memcpy(out.ptr() + (static_cast<int64_t>(i) * (c1 + c2) + c1) * hw,
                    bv.ptr() + static_cast<int64_t>(i) * c2 * hw, sizeof(real) * static_cast<size_t>(c2 * hw));
    }
    return make("concat_channels", std::move(out), {a, b}, [n, c1, c2, hw](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int i = 0; i < n; ++i) {
            const real* src = self.grad.ptr() + static_cast<int64_t>(i) * (c1 + c2) * hw;
            if (pa.requires_grad) {
                real* g = pa.ensure_grad().ptr() + static_cast<int64_t>(i) * c1 * hw;
                for (int64_t j = 0; j < c1 * hw; ++j) g[j] += src[j];
            }
            if (pb.requires_grad) {
                real* g = pb.ensure_grad().ptr() + static_cast<int64_t>(i) * c2 * hw;
                for (int64_t j = 0; j < c2 * hw; ++j) g[j] += src[c1 * hw + j];
            }
        }
    });
}

NodePtr upsample_nearest2x(const NodePtr& x) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4) throw std::invalid_argument("upsample_nearest2x: expects [n,c,h,w]");
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    int64_t planes = static_cast<int64_t>(n) * c;
    for (int64_t p = 0; p < planes; ++p) {
        const real* src = xv.ptr() + p * h * w;
        real* dst = out.ptr() + p * 4 * h * w;
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                real v = src[static_cast<int64_t>(y) * w + xx];
                int64_t o = (static_cast<int64_t>(2 * y) * 2 * w) + 2 * xx;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * w] = v;
                dst[o + 2 * w + 1] = v;
            }
        }
    }
    return make("upsample2x", std::move(out), {x}, [planes, h, w](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int64_t pl = 0; pl < planes; ++pl) {
            const real* dy = self.grad.ptr() + pl * 4 * h * w;
            real* dx = g.ptr() + pl * h * w;
            for (int y = 0; y < h; ++y) {
                for (int xx = 0; xx < w; ++xx) {
                    int64_t o = (static_cast<int64_t>(2 * y) * 2 * w) + 2 * xx;
                    dx[static_cast<int64_t>(y) * w + xx] +=
                        dy[o] + dy[o + 1] + dy[o + 2 * w] + dy[o + 2 * w + 1];
                }
            }
        }
    });
}

NodePtr nchw_to_nlc(const NodePtr& x) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4) throw std::invalid_argument("nchw_to_nlc: expects [n,c,h,w]");
    int n = xv.dim(0), c = xv.dim(1);
    int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    Tensor out({n, static_cast<int>(hw), c});
    for (int i = 0; i < n; ++i)
        transpose(xv.ptr() + static_cast<int64_t>(i) * c * hw, out.ptr() + static_cast<int64_t>(i) * c * hw, c, hw);
    return make("nchw_to_nlc", std::move(out), {x}, [n, c, hw](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        Tensor tmp({static_cast<int>(c), static_cast<int>(hw)});
        for (int i = 0; i < n; ++i) {
            transpose(self.grad.ptr() + static_cast<int64_t>(i) * c * hw, tmp.ptr(), hw, c);
            real* dst = g.ptr() + static_cast<int64_t>(i) * c * hw;
            for (int64_t j = 0; j < c * hw; ++j) dst[j] += tmp[j];
        }
    });
}

NodePtr nlc_to_nchw(const NodePtr& x, int h, int w) {
    const Tensor& xv = x->value;
    if (xv.rank() != 3 || xv.dim(1) != h * w)
        throw std::invalid_argument("nlc_to_nchw: expects [n,h*w,c]");
    int n = xv.dim(0), c = xv.dim(2);
    int64_t hw = static_cast<int64_t>(h) * w;
    Tensor out({n, c, h, w});
    for (int i = 0; i < n; ++i)
        transpose(xv.ptr() + static_cast<int64_t>(i) * c * hw, out.ptr() + static_cast<int64_t>(i) * c * hw, hw, c);
    return make("nlc_to_nchw", std::move(out), {x}, [n, c, hw](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        Tensor tmp({static_cast<int>(hw), static_cast<int>(c)});
        for (int i = 0; i < n; ++i) {
            transpose(self.grad.ptr() + static_cast<int64_t>(i) * c * hw, tmp.ptr(), c, hw);
            real* dst = g.ptr() + static_cast<int64_t>(i) * c * hw;
            for (int64_t j = 0; j < c * hw; ++j) dst[j] += tmp[j];
        }
    });
}

NodePtr embedding(const NodePtr& table, const std::vector<int>& ids, int n, int len) {
    const Tensor& tv = table->value;
    if (tv.rank() != 2) throw std::invalid_argument("embedding: table must be [vocab, dim]");
    if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(n) * len)
        throw std::invalid_argument("embedding: ids size mismatch");
    int vocab = tv.dim(0), dim = tv.dim(1);
    for (int id : ids)
        if (id < 0 || id >= vocab) throw std::invalid_argument("embedding: token id out of range");
    Tensor out({n, len, dim});
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.ptr() + static_cast<int64_t>(i) * dim,
                    tv.ptr() + static_cast<int64_t>(ids[i]) * dim, sizeof(real) * static_cast<size_t>(dim));
    std::vector<int> idcopy = ids;
    return make("embedding", std::move(out), {table}, [idcopy, dim](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (size_t i = 0; i < idcopy.size(); ++i) {
            real* dst = g.ptr() + static_cast<int64_t>(idcopy[i]) * dim;
            const real* src = self.grad.ptr() + static_cast<int64_t>(i) * dim;
            for (int j = 0; j < dim; ++j) dst[j] += src[j];
        }
    });
}

NodePtr add_channel_bias(const NodePtr& x, const NodePtr& b) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4) throw std::invalid_argument("add_channel_bias: expects [n,c,h,w]");
    int n = xv.dim(0), c = xv.dim(1);
    int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    if (b->value.numel() != c) throw std::invalid_argument("add_channel_bias: size mismatch");
    Tensor out(xv.shape);
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const real* src = xv.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
            real* dst = out.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
            real bv = b->value[ch];
            for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] + bv;
        }
    return make("add_channel_bias", std::move(out), {x, b}, [n, c, hw](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) px.accumulate_grad(self.grad);
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int ch = 0; ch < c; ++ch) {
                    const real* src = self.grad.ptr() + (static_cast<int64_t>(i) * c + ch) * hw;
                    double acc = 0;
                    for (int64_t j = 0; j < hw; ++j) acc += static_cast<double>(src[j]);
                    g[ch] += static_cast<real>(acc);
                }
        }
    });
}

NodePtr add_channel_vec(const NodePtr& x, const NodePtr& v) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4) throw std::invalid_argument("add_channel_vec: expects [n,c,h,w]");
    int n = xv.dim(0), c = xv.dim(1);
    int64_t hw = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
    if (v->value.rank() != 2 || v->value.dim(0) != n || v->value.dim(1) != c)
        throw std::invalid_argument("add_channel_vec: expects vec [n,c]");
    Tensor out(xv.shape);
    for (int64_t ic = 0; ic < static_cast<int64_t>(n) * c; ++ic) {
        const real* src = xv.ptr() + ic * hw;
        real* dst = out.ptr() + ic * hw;
        real add_v = v->value[ic];
        for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] + add_v;
    }
    return make("add_channel_vec", std::move(out), {x, v}, [n, c, hw](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) px.accumulate_grad(self.grad);
        if (pv.requires_grad) {
            Tensor& g = pv.ensure_grad();
            for (int64_t ic = 0; ic < static_cast<int64_t>(n) * c; ++ic) {
                const real* src = self.grad.ptr() + ic * hw;
                double acc = 0;
                for (int64_t j = 0; j < hw; ++j) acc += static_cast<double>(src[j]);
                g[ic] += static_cast<real>(acc);
            }
        }
    });
}

void backward(const NodePtr& root) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root->value.shape));
    // post-order DFS; reversed it gives a valid order for reverse accumulation
    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad()[0] += static_cast<real>(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

} // namespace ag

} // namespace inkdiff
