#include "dft/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

// OpenMP kernels. Work is split across output rows; each element still
// accumulates in ascending inner-index order, which keeps results identical
// to the serial reference at any thread count. matmul_nn/tn use a cached
// row/operand order that vectorizes over the contiguous dimension without
// reassociating any per-element sum. The `if` clause skips thread startup
// on graph-sized operands where it costs more than it buys.

namespace dft::kernels::par {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  const double work = static_cast<double>(m) * k * n;
#pragma omp parallel if (work > 65536.0)
  {
    // Per-thread row accumulator so each element sums from an exact zero in
    // ascending l order, matching the serial reference's register sum.
    std::vector<double> row(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      const double* ai = a + static_cast<long>(i) * k;
      for (int l = 0; l < k; ++l) {
        const double ail = ai[l];
        const double* bl = b + static_cast<long>(l) * n;
        for (int j = 0; j < n; ++j) row[j] += ail * bl[j];
      }
      double* ci = c + static_cast<long>(i) * n;
      if (accumulate)
        for (int j = 0; j < n; ++j) ci[j] += row[j];
      else
        for (int j = 0; j < n; ++j) ci[j] = row[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  // Materialize b^T so the inner sweep runs over contiguous rows like
  // matmul_nn. Each element still sums a[i,l]*b[j,l] in ascending l, so the
  // result is bit-identical to the naive dot-product reference.
  std::vector<double> bt(static_cast<std::size_t>(k) * n);
  const double work = static_cast<double>(m) * k * n;
#pragma omp parallel if (work > 65536.0)
  {
#pragma omp for schedule(static)
    for (int l = 0; l < k; ++l)
      for (int j = 0; j < n; ++j) bt[static_cast<std::size_t>(l) * n + j] = b[static_cast<std::size_t>(j) * k + l];

    std::vector<double> row(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      const double* ai = a + static_cast<long>(i) * k;
      for (int l = 0; l < k; ++l) {
        const double ail = ai[l];
        const double* btl = bt.data() + static_cast<long>(l) * n;
        for (int j = 0; j < n; ++j) row[j] += ail * btl[j];
      }
      double* ci = c + static_cast<long>(i) * n;
      if (accumulate)
        for (int j = 0; j < n; ++j) ci[j] += row[j];
      else
        for (int j = 0; j < n; ++j) ci[j] = row[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  const double work = static_cast<double>(m) * k * n;
#pragma omp parallel if (work > 65536.0)
  {
    std::vector<double> row(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (int i = 0; i < m; ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int l = 0; l < k; ++l) {
        const double ali = a[static_cast<long>(l) * m + i];
        const double* bl = b + static_cast<long>(l) * n;
        for (int j = 0; j < n; ++j) row[j] += ali * bl[j];
      }
      double* ci = c + static_cast<long>(i) * n;
      if (accumulate)
        for (int j = 0; j < n; ++j) ci[j] += row[j];
      else
        for (int j = 0; j < n; ++j) ci[j] = row[j];
    }
  }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
  const double work = static_cast<double>(rows) * cols;
#pragma omp parallel for schedule(static) if (work > 16384.0)
  for (int i = 0; i < rows; ++i) {
    const double* xi = x + static_cast<long>(i) * cols;
    double* yi = y + static_cast<long>(i) * cols;
    double mx = xi[0];
    for (int j = 1; j < cols; ++j)
      if (xi[j] > mx) mx = xi[j];
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

void rmsnorm_rows(const double* x, const double* gain, double* y, double* inv_rms, int rows, int cols,
                  double eps) {
  const double work = static_cast<double>(rows) * cols;
#pragma omp parallel for schedule(static) if (work > 16384.0)
  for (int i = 0; i < rows; ++i) {
    const double* xi = x + static_cast<long>(i) * cols;
    double* yi = y + static_cast<long>(i) * cols;
    double ss = 0.0;
    for (int j = 0; j < cols; ++j) ss += xi[j] * xi[j];
    const double inv = 1.0 / std::sqrt(ss / cols + eps);
    inv_rms[i] = inv;
    for (int j = 0; j < cols; ++j) yi[j] = xi[j] * inv * gain[j];
  }
}

}  // namespace dft::kernels::par
