#include "inkdiff/kernels.hpp"

#include <cstring>

#include "inkdiff/parallel.hpp"

namespace inkdiff {

void gemm(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n) {
    parallel_for(m, [=](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            real* crow = c + i * n;
            std::memset(crow, 0, sizeof(real) * static_cast<size_t>(n));
            const real* arow = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                real av = arow[p];
                const real* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

void gemm_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n) {
    std::memset(c, 0, sizeof(real) * static_cast<size_t>(m * n));
    for (int64_t p = 0; p < k; ++p) {
        const real* arow = a + p * m;
        const real* brow = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            real av = arow[i];
            real* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_acc(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n) {
    parallel_for(m, [=](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const real* arow = a + i * k;
            real* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const real* brow = b + j * k;
                real acc = 0;
                for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] += acc;
            }
        }
    });
}

void transpose(const real* a, real* at, int64_t m, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) at[j * m + i] = a[i * n + j];
}

void im2col(const real* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, real* cols) {
    int64_t ncols = static_cast<int64_t>(oh) * ow;
    int64_t row = 0;
    for (int c = 0; c < cin; ++c) {
        const real* xc = x + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                real* dst = cols + row * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::memset(dst + static_cast<int64_t>(oy) * ow, 0, sizeof(real) * static_cast<size_t>(ow));
                        continue;
                    }
                    const real* src = xc + static_cast<int64_t>(iy) * w;
                    real* drow = dst + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        drow[ox] = (ix >= 0 && ix < w) ? src[ix] : 0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const real* cols, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, real* dx) {
    int64_t ncols = static_cast<int64_t>(oh) * ow;
    int64_t row = 0;
    for (int c = 0; c < cin; ++c) {
        real* xc = dx + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                const real* src = cols + row * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    real* xrow = xc + static_cast<int64_t>(iy) * w;
                    const real* srow = src + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) xrow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

} // namespace inkdiff
