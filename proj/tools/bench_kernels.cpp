#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "fusioncell/kernels.hpp"

// Compares the serial reference matmul against the OpenMP kernel; both use
// the same fixed reduction order, so outputs must match bitwise.

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

int main() {
  const int sizes[] = {64, 128, 256, 512};
  std::mt19937_64 rng(7);
  auto rnd = [&] { return static_cast<double>(rng() >> 11) * 0x1p-53 - 0.5; };

  std::printf("%8s %12s %12s %10s\n", "n", "serial_gf", "omp_gf", "bitwise");
  for (int n : sizes) {
    std::vector<double> a(static_cast<size_t>(n) * n), b(a.size());
    for (auto& x : a) x = rnd();
    for (auto& x : b) x = rnd();
    std::vector<double> c1(a.size()), c2(a.size());

    const double flops = 2.0 * n * n * n;
    int reps = n <= 128 ? 20 : (n <= 256 ? 5 : 2);

    double t0 = now_s();
    for (int r = 0; r < reps; ++r)
      fc::kernels::matmul_serial(a.data(), b.data(), c1.data(), n, n, n);
    double serial = flops * reps / (now_s() - t0) / 1e9;

    t0 = now_s();
    for (int r = 0; r < reps; ++r)
      fc::kernels::matmul_omp(a.data(), b.data(), c2.data(), n, n, n);
    double omp = flops * reps / (now_s() - t0) / 1e9;

    bool same = true;
    for (size_t i = 0; i < c1.size(); ++i)
      if (c1[i] != c2[i]) {
        same = false;
        break;
      }
    std::printf("%8d %12.2f %12.2f %10s\n", n, serial, omp, same ? "yes" : "NO");
    if (!same) return 1;
  }
  return 0;
}
