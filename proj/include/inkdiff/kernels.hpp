#pragma once

#include <cstdint>

#include "inkdiff/tensor.hpp"

namespace inkdiff {

// Row-major GEMM kernels. Accumulation over the inner dimension always runs
// in ascending order for every output element, so results are independent of
// the thread count.
void gemm(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n);        // c = a*b
void gemm_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n);     // c = a^T*b, a[k,m]
void gemm_nt_acc(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n); // c += a*b^T, b[n,k]

void transpose(const real* a, real* at, int64_t m, int64_t n);

// Patch matrix for one image: x[cin,h,w] -> cols[cin*kh*kw, oh*ow].
void im2col(const real* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, real* cols);
void col2im_acc(const real* cols, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, real* dx);

} // namespace inkdiff
