#pragma once
#include <cstddef>

// Dense matmul kernels. Both variants compute every output element with the
// same 8-lane accumulation order, so results are bitwise identical between the
// serial reference and the OpenMP version at any thread count.
namespace fc::kernels {

// C[m x n] = A[m x k] * B[k x n], row-major.
void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n);
void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n);

// Dispatches to matmul_omp when the problem is large enough to amortize
// thread startup, otherwise runs serial.
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// Fixed-order dot product shared by both kernels.
double dot(const double* a, const double* b, int n);

}  // namespace fc::kernels
