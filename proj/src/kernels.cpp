#include "fusioncell/kernels.hpp"

#include <vector>

namespace fc::kernels {

double dot(const double* a, const double* b, int n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const int n8 = n - (n % 8);
  for (int k = 0; k < n8; k += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
             ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (int k = n8; k < n; ++k) s += a[k] * b[k];
  return s;
}

namespace {

// Transposing B makes every dot contiguous; the transpose itself is cheap
// relative to the m*k*n work.
void transpose_into(const double* b, double* bt, int k, int n) {
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n) {
  std::vector<double> bt(static_cast<size_t>(k) * n);
  transpose_into(b, bt.data(), k, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = dot(a + static_cast<size_t>(i) * k,
                                              bt.data() + static_cast<size_t>(j) * k, k);
}

void matmul_omp(const double* a, const double* b, double* c,
                int m, int k, int n) {
  std::vector<double> bt(static_cast<size_t>(k) * n);
  transpose_into(b, bt.data(), k, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] = dot(a + static_cast<size_t>(i) * k,
                                              bt.data() + static_cast<size_t>(j) * k, k);
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  if (static_cast<long long>(m) * k * n >= 1 << 18)
    matmul_omp(a, b, c, m, k, n);
  else
    matmul_serial(a, b, c, m, k, n);
}

}  // namespace fc::kernels
