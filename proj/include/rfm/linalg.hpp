#pragma once

#include <vector>

// Small dense double-precision helpers for the metrics module. Matrices are
// row-major n x n; everything is deterministic and serial.
namespace rfm::linalg {

struct EigenSym {
    std::vector<double> values;   // ascending
    std::vector<double> vectors;  // row-major, column j is the eigenvector of values[j]
};

// cyclic Jacobi rotations for a symmetric matrix, n <= 16
EigenSym jacobi_eigen_symmetric(const std::vector<double>& a, int n);

// c = a * b for n x n row-major matrices
std::vector<double> matmul_square(const std::vector<double>& a, const std::vector<double>& b,
                                  int n);

// principal square root of a symmetric PSD matrix; eigenvalues in
// [-1e-8, 0) are clamped to zero, anything lower is rejected
std::vector<double> sqrt_psd(const std::vector<double>& a, int n);

}  // namespace rfm::linalg
