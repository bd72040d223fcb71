// Times the serial reference kernels against the OpenMP variants.
// AIR_THREADS caps the worker count.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "air/kernels.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0)
             .count() /
         reps;
}

std::vector<double> randvec(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", air::kern::max_threads());
  const int reps = 20;

  {
    int m = 256, k = 256, n = 256;
    auto a = randvec(size_t(m) * k, 1), b = randvec(size_t(k) * n, 2);
    std::vector<double> c(size_t(m) * n);
    double ts = time_ms(
        [&] { air::kern::matmul_serial(a.data(), b.data(), c.data(), m, k, n,
                                       false); },
        reps);
    double tp = time_ms(
        [&] { air::kern::matmul_omp(a.data(), b.data(), c.data(), m, k, n,
                                    false); },
        reps);
    std::printf("matmul %dx%dx%d: serial %.3f ms, omp %.3f ms, speedup %.2fx\n",
                m, k, n, ts, tp, ts / tp);
  }
  {
    int h = 256, w = 256, kw = 7;
    auto img = randvec(size_t(h) * w, 3), ker = randvec(size_t(kw) * kw, 4);
    std::vector<double> out(size_t(h) * w);
    double ts = time_ms(
        [&] { air::kern::conv2d_reflect_serial(img.data(), h, w, ker.data(),
                                               kw, kw, out.data()); },
        reps);
    double tp = time_ms(
        [&] { air::kern::conv2d_reflect_omp(img.data(), h, w, ker.data(), kw,
                                            kw, out.data()); },
        reps);
    std::printf("conv2d %dx%d k%d: serial %.3f ms, omp %.3f ms, speedup %.2fx\n",
                h, w, kw, ts, tp, ts / tp);
  }
  {
    int h = 512, w = 512, n = 1 << 18;
    auto img = randvec(size_t(h) * w, 5);
    auto xs = randvec(n, 6), ys = randvec(n, 7);
    for (auto& v : xs) v = (v + 1) * 0.5 * (w - 1);
    for (auto& v : ys) v = (v + 1) * 0.5 * (h - 1);
    std::vector<double> out(n);
    double ts = time_ms(
        [&] { air::kern::bilinear_gather_serial(img.data(), h, w, xs.data(),
                                                ys.data(), n, out.data()); },
        reps);
    double tp = time_ms(
        [&] { air::kern::bilinear_gather_omp(img.data(), h, w, xs.data(),
                                             ys.data(), n, out.data()); },
        reps);
    std::printf(
        "bilinear gather %d samples: serial %.3f ms, omp %.3f ms, speedup "
        "%.2fx\n",
        n, ts, tp, ts / tp);
  }
  return 0;
}
