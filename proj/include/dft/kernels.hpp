#pragma once

namespace dft::kernels {

// Dense row-major kernels behind the autodiff ops. Two implementations with
// one contract: every output element accumulates its inner sum in ascending
// index order, so the serial reference and the OpenMP version produce
// bit-identical results at any thread count. The serial version is the
// auditable reference and stays wired into the test suite; the dispatchers
// below pick the OpenMP path unless it is switched off.
//
//   matmul_nn: c[m,n] (+)= a[m,k] * b[k,n]
//   matmul_nt: c[m,n] (+)= a[m,k] * b[n,k]^T    (sum_l a[i,l] * b[j,l])
//   matmul_tn: c[m,n] (+)= a[k,m]^T * b[k,n]    (sum_l a[l,i] * b[l,j])

namespace serial {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void softmax_rows(const double* x, double* y, int rows, int cols);
// y[i,:] = x[i,:] * gain * inv_rms[i], inv_rms[i] = 1/sqrt(mean(x[i,:]^2) + eps)
void rmsnorm_rows(const double* x, const double* gain, double* y, double* inv_rms, int rows, int cols,
                  double eps);
}  // namespace serial

namespace par {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void softmax_rows(const double* x, double* y, int rows, int cols);
void rmsnorm_rows(const double* x, const double* gain, double* y, double* inv_rms, int rows, int cols,
                  double eps);
}  // namespace par

bool parallel_enabled() noexcept;
void set_parallel(bool on) noexcept;

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void softmax_rows(const double* x, double* y, int rows, int cols);
void rmsnorm_rows(const double* x, const double* gain, double* y, double* inv_rms, int rows, int cols,
                  double eps);

}  // namespace dft::kernels
