#include "dft/kernels.hpp"

#include <cmath>

// Naive reference loops. Each c[i,j] is one dot product evaluated left to
// right; keep it that way, the OpenMP path must match bit for bit.

namespace dft::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
  }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
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

}  // namespace dft::kernels::serial
