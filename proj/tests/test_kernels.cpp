#include <doctest.h>

#include <vector>

#include "dft/kernels.hpp"
#include "dft/util/rng.hpp"

using namespace dft;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("openmp kernels match the serial reference bit for bit") {
  Rng rng(42);
  // Odd sizes on purpose; also large enough to clear the parallel threshold.
  const struct {
    int m, k, n;
  } shapes[] = {{1, 1, 1}, {3, 5, 2}, {17, 31, 13}, {64, 64, 64}, {65, 127, 33}, {128, 96, 160}};
  for (const auto& s : shapes) {
    const auto a = random_vec(static_cast<std::size_t>(s.m) * s.k, rng);
    const auto b_nn = random_vec(static_cast<std::size_t>(s.k) * s.n, rng);
    const auto b_nt = random_vec(static_cast<std::size_t>(s.n) * s.k, rng);
    const auto a_tn = random_vec(static_cast<std::size_t>(s.k) * s.m, rng);
    std::vector<double> seed = random_vec(static_cast<std::size_t>(s.m) * s.n, rng);

    for (bool accumulate : {false, true}) {
      std::vector<double> c_ref = seed, c_par = seed;
      kernels::serial::matmul_nn(a.data(), b_nn.data(), c_ref.data(), s.m, s.k, s.n, accumulate);
      kernels::par::matmul_nn(a.data(), b_nn.data(), c_par.data(), s.m, s.k, s.n, accumulate);
      CHECK(c_ref == c_par);

      c_ref = seed;
      c_par = seed;
      kernels::serial::matmul_nt(a.data(), b_nt.data(), c_ref.data(), s.m, s.k, s.n, accumulate);
      kernels::par::matmul_nt(a.data(), b_nt.data(), c_par.data(), s.m, s.k, s.n, accumulate);
      CHECK(c_ref == c_par);

      c_ref = seed;
      c_par = seed;
      kernels::serial::matmul_tn(a_tn.data(), b_nn.data(), c_ref.data(), s.m, s.k, s.n, accumulate);
      kernels::par::matmul_tn(a_tn.data(), b_nn.data(), c_par.data(), s.m, s.k, s.n, accumulate);
      CHECK(c_ref == c_par);
    }
  }
}

TEST_CASE("row kernels match the serial reference bit for bit") {
  Rng rng(43);
  for (int rows : {1, 7, 64, 200}) {
    for (int cols : {1, 5, 96}) {
      const auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
      auto gain = random_vec(cols, rng);
      std::vector<double> y_ref(x.size()), y_par(x.size());
      kernels::serial::softmax_rows(x.data(), y_ref.data(), rows, cols);
      kernels::par::softmax_rows(x.data(), y_par.data(), rows, cols);
      CHECK(y_ref == y_par);

      std::vector<double> inv_ref(rows), inv_par(rows);
      kernels::serial::rmsnorm_rows(x.data(), gain.data(), y_ref.data(), inv_ref.data(), rows, cols, 1e-6);
      kernels::par::rmsnorm_rows(x.data(), gain.data(), y_par.data(), inv_par.data(), rows, cols, 1e-6);
      CHECK(y_ref == y_par);
      CHECK(inv_ref == inv_par);
    }
  }
}

TEST_CASE("matmul_nn computes the plain product") {
  // 2x3 * 3x2, hand-computed.
  std::vector<double> a{1, 2, 3, 4, 5, 6};
  std::vector<double> b{7, 8, 9, 10, 11, 12};
  std::vector<double> c(4, 0.0);
  kernels::matmul_nn(a.data(), b.data(), c.data(), 2, 3, 2, false);
  CHECK(c[0] == 58.0);
  CHECK(c[1] == 64.0);
  CHECK(c[2] == 139.0);
  CHECK(c[3] == 154.0);
}

TEST_CASE("dispatch honors the parallel switch") {
  Rng rng(44);
  const auto a = random_vec(32 * 48, rng);
  const auto b = random_vec(48 * 24, rng);
  std::vector<double> c_on(32 * 24, 0.0), c_off(32 * 24, 0.0);
  kernels::set_parallel(true);
  kernels::matmul_nn(a.data(), b.data(), c_on.data(), 32, 48, 24, false);
  kernels::set_parallel(false);
  kernels::matmul_nn(a.data(), b.data(), c_off.data(), 32, 48, 24, false);
  kernels::set_parallel(true);
  CHECK(c_on == c_off);
}
