// Kernel benchmark: serial reference vs OpenMP, with a bitwise equality
// check on every shape. Usage: dft_bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <omp.h>

#include "dft/kernels.hpp"
#include "dft/util/rng.hpp"

using namespace dft;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <typename F>
double time_best_ms(F&& fn, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d, repeats: %d\n", omp_get_max_threads(), repeats);
  std::printf("%-28s %10s %10s %8s %10s %s\n", "kernel", "serial ms", "openmp ms", "speedup", "gflop/s",
              "bitwise");

  Rng rng(123);
  const struct {
    int m, k, n;
  } shapes[] = {{128, 128, 128}, {256, 256, 256}, {384, 384, 384}, {512, 256, 512}};

  for (const auto& s : shapes) {
    const auto a = random_vec(static_cast<std::size_t>(s.m) * s.k, rng);
    const auto b = random_vec(static_cast<std::size_t>(s.k) * s.n, rng);
    std::vector<double> c_ref(static_cast<std::size_t>(s.m) * s.n), c_par(c_ref.size());
    const double serial_ms =
        time_best_ms([&] { kernels::serial::matmul_nn(a.data(), b.data(), c_ref.data(), s.m, s.k, s.n, false); },
                     repeats);
    const double par_ms =
        time_best_ms([&] { kernels::par::matmul_nn(a.data(), b.data(), c_par.data(), s.m, s.k, s.n, false); },
                     repeats);
    const double gflops = 2.0 * s.m * s.k * s.n / (par_ms * 1e6);
    const std::string name =
        "matmul_nn " + std::to_string(s.m) + "x" + std::to_string(s.k) + "x" + std::to_string(s.n);
    std::printf("%-28s %10.2f %10.2f %8.2f %10.2f %s\n", name.c_str(), serial_ms, par_ms,
                serial_ms / par_ms, gflops, c_ref == c_par ? "ok" : "MISMATCH");
    if (c_ref != c_par) return 1;
  }

  {
    const int rows = 4096, cols = 512;
    const auto x = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    const auto gain = random_vec(cols, rng);
    std::vector<double> y_ref(x.size()), y_par(x.size()), inv_ref(rows), inv_par(rows);
    double serial_ms =
        time_best_ms([&] { kernels::serial::softmax_rows(x.data(), y_ref.data(), rows, cols); }, repeats);
    double par_ms =
        time_best_ms([&] { kernels::par::softmax_rows(x.data(), y_par.data(), rows, cols); }, repeats);
    std::printf("%-28s %10.2f %10.2f %8.2f %10s %s\n", "softmax_rows 4096x512", serial_ms, par_ms,
                serial_ms / par_ms, "-", y_ref == y_par ? "ok" : "MISMATCH");
    if (y_ref != y_par) return 1;

    serial_ms = time_best_ms(
        [&] { kernels::serial::rmsnorm_rows(x.data(), gain.data(), y_ref.data(), inv_ref.data(), rows, cols, 1e-6); },
        repeats);
    par_ms = time_best_ms(
        [&] { kernels::par::rmsnorm_rows(x.data(), gain.data(), y_par.data(), inv_par.data(), rows, cols, 1e-6); },
        repeats);
    std::printf("%-28s %10.2f %10.2f %8.2f %10s %s\n", "rmsnorm_rows 4096x512", serial_ms, par_ms,
                serial_ms / par_ms, "-", y_ref == y_par && inv_ref == inv_par ? "ok" : "MISMATCH");
    if (y_ref != y_par) return 1;
  }
  return 0;
}
