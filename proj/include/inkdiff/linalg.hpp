#pragma once

#include <vector>

namespace inkdiff {

// dense row-major d x d double matrices; everything here is double no matter
// how the tensor library is compiled — metric math should not drift with the
// build flavor

struct SymEig {
    std::vector<double> values;  // d eigenvalues (unsorted)
    std::vector<double> vectors; // d x d, column j = eigenvector for values[j]
};

// cyclic Jacobi on a symmetric matrix; input symmetrized internally
SymEig jacobi_eig(std::vector<double> a, int d);

std::vector<double> mat_mul_d(const std::vector<double>& a, const std::vector<double>& b, int d);

// symmetric PSD square root via eigendecomposition; eigenvalues below zero
// are clamped (inputs are sample covariances, PSD up to roundoff)
std::vector<double> sym_sqrt(const std::vector<double>& a, int d);

double trace_d(const std::vector<double>& a, int d);

} // namespace inkdiff
