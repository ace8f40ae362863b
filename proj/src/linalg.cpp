#include "inkdiff/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace inkdiff {

SymEig jacobi_eig(std::vector<double> a, int d) {
    if (d < 1 || static_cast<int>(a.size()) != d * d)
        throw std::invalid_argument("jacobi_eig: bad dimensions");
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double m = 0.5 * (a[static_cast<size_t>(i) * d + j] + a[static_cast<size_t>(j) * d + i]);
            a[static_cast<size_t>(i) * d + j] = m;
            a[static_cast<size_t>(j) * d + i] = m;
        }
    std::vector<double> v(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i) * d + i] = 1.0;

    auto off_norm2 = [&]() {
        double s = 0;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) s += a[static_cast<size_t>(i) * d + j] * a[static_cast<size_t>(i) * d + j];
        return 2.0 * s;
    };
    double scale = 0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    double tol = (scale > 0 ? scale : 1.0) * 1e-14;

    for (int sweep = 0; sweep < 100; ++sweep) {
        if (std::sqrt(off_norm2()) <= tol) break;
        for (int p = 0; p < d - 1; ++p) {
            for (int q = p + 1; q < d; ++q) {
                double apq = a[static_cast<size_t>(p) * d + q];
                if (std::abs(apq) <= tol * 1e-2) continue;
                double app = a[static_cast<size_t>(p) * d + p];
                double aqq = a[static_cast<size_t>(q) * d + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < d; ++i) {
                    double aip = a[static_cast<size_t>(i) * d + p];
                    double aiq = a[static_cast<size_t>(i) * d + q];
                    a[static_cast<size_t>(i) * d + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * d + q] = s * aip + c * aiq;
                }
                for (int j = 0; j < d; ++j) {
                    double apj = a[static_cast<size_t>(p) * d + j];
                    double aqj = a[static_cast<size_t>(q) * d + j];
                    a[static_cast<size_t>(p) * d + j] = c * apj - s * aqj;
                    a[static_cast<size_t>(q) * d + j] = s * apj + c * aqj;
                }
                for (int i = 0; i < d; ++i) {
                    double vip = v[static_cast<size_t>(i) * d + p];
                    double viq = v[static_cast<size_t>(i) * d + q];
                    v[static_cast<size_t>(i) * d + p] = c * vip - s * viq;
                    v[static_cast<size_t>(i) * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    SymEig out;
    out.values.resize(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) out.values[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * d + i];
    out.vectors = std::move(v);
    return out;
}

std::vector<double> mat_mul_d(const std::vector<double>& a, const std::vector<double>& b, int d) {
    std::vector<double> c(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            double aik = a[static_cast<size_t>(i) * d + k];
            if (aik == 0) continue;
            for (int j = 0; j < d; ++j)
                c[static_cast<size_t>(i) * d + j] += aik * b[static_cast<size_t>(k) * d + j];
        }
    return c;
}

std::vector<double> sym_sqrt(const std::vector<double>& a, int d) {
    SymEig e = jacobi_eig(a, d);
    std::vector<double> r(static_cast<size_t>(d) * d, 0.0);
    // V diag(sqrt(max(l,0))) V^T
    for (int k = 0; k < d; ++k) {
        double l = e.values[static_cast<size_t>(k)];
        double s = l > 0 ? std::sqrt(l) : 0.0;
        if (s == 0) continue;
        for (int i = 0; i < d; ++i) {
            double vik = e.vectors[static_cast<size_t>(i) * d + k] * s;
            if (vik == 0) continue;
            for (int j = 0; j < d; ++j)
                r[static_cast<size_t>(i) * d + j] += vik * e.vectors[static_cast<size_t>(j) * d + k];
        }
    }
    return r;
}

double trace_d(const std::vector<double>& a, int d) {
    double t = 0;
    for (int i = 0; i < d; ++i) t += a[static_cast<size_t>(i) * d + i];
    return t;
}

} // namespace inkdiff
