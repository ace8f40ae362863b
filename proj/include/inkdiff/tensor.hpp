#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#ifndef INKDIFF_REAL
#define INKDIFF_REAL float
#endif

namespace inkdiff {

// Element type of all network tensors. float by default; the verification
// build compiles the whole library with INKDIFF_REAL=double.
using real = INKDIFF_REAL;

// Dense row-major n-dimensional array. Shape and data are kept consistent
// by every constructor and factory; ops never resize data behind a shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<real> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, real v);
    static Tensor scalar(real v) { return Tensor({1}, {v}); }
    static Tensor from(std::vector<int> s, std::initializer_list<real> d);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    real* ptr() { return data.data(); }
    const real* ptr() const { return data.data(); }

    real& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    real item() const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    void fill(real v);
    void zero() { fill(static_cast<real>(0)); }
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Throws std::invalid_argument on mismatch; `what` names the operation.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

bool all_finite(const Tensor& t);
bool all_zero(const Tensor& t);
real max_abs(const Tensor& t);
real max_abs_diff(const Tensor& a, const Tensor& b);

// Sequential double-precision accumulation; the deterministic reduction
// order shared by every reduction in the library.
double sum_all(const Tensor& t);
double mean_all(const Tensor& t);

} // namespace inkdiff
