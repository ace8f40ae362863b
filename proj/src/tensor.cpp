#include "inkdiff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace inkdiff {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape must have positive dims, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), static_cast<real>(0));
}

Tensor::Tensor(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
}

Tensor Tensor::full(std::vector<int> s, real v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
}

Tensor Tensor::from(std::vector<int> s, std::initializer_list<real> d) {
    return Tensor(std::move(s), std::vector<real>(d));
}

real Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
}

void Tensor::fill(real v) {
    for (auto& x : data) x = v;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

bool all_finite(const Tensor& t) {
    for (real v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

bool all_zero(const Tensor& t) {
    for (real v : t.data)
        if (v != static_cast<real>(0)) return false;
    return true;
}

real max_abs(const Tensor& t) {
    real m = 0;
    for (real v : t.data) {
        real a = v < 0 ? -v : v;
        if (a > m) m = a;
    }
    return m;
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    real m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        real d = a.data[i] - b.data[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

double sum_all(const Tensor& t) {
    double s = 0.0;
    for (real v : t.data) s += static_cast<double>(v);
    return s;
}

double mean_all(const Tensor& t) {
    return t.numel() ? sum_all(t) / static_cast<double>(t.numel()) : 0.0;
}

} // namespace inkdiff
