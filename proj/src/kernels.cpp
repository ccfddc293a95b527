#include "dft/kernels.hpp"

#include <atomic>

namespace dft::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() noexcept { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool on) noexcept { g_parallel.store(on, std::memory_order_relaxed); }

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (parallel_enabled())
    par::matmul_nn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (parallel_enabled())
    par::matmul_nt(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  if (parallel_enabled())
    par::matmul_tn(a, b, c, m, k, n, accumulate);
  else
    serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  if (parallel_enabled())
    par::softmax_rows(x, y, rows, cols);
  else
    serial::softmax_rows(x, y, rows, cols);
}

void rmsnorm_rows(const double* x, const double* gain, double* y, double* inv_rms, int rows, int cols,
                  double eps) {
  if (parallel_enabled())
    par::rmsnorm_rows(x, gain, y, inv_rms, rows, cols, eps);
  else
    serial::rmsnorm_rows(x, gain, y, inv_rms, rows, cols, eps);
}

}  // namespace dft::kernels
