#include "doctest.h"

#include <random>
#include <vector>

#include "air/kernels.hpp"

using namespace air;

namespace {
std::vector<double> randv(size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}
}  // namespace

TEST_CASE("omp matmul kernels are bit-identical to the serial reference") {
  int m = 7, k = 13, n = 5;
  auto a = randv(m * k, 1), b = randv(k * n, 2);
  std::vector<double> cs(m * n), cp(m * n);
  kern::matmul_serial(a.data(), b.data(), cs.data(), m, k, n, false);
  kern::matmul_omp(a.data(), b.data(), cp.data(), m, k, n, false);
  CHECK(cs == cp);

  auto bt = randv(n * k, 3);
  kern::matmul_nt_serial(a.data(), bt.data(), cs.data(), m, k, n, false);
  kern::matmul_nt_omp(a.data(), bt.data(), cp.data(), m, k, n, false);
  CHECK(cs == cp);

  auto at = randv(k * m, 4);
  kern::matmul_tn_serial(at.data(), b.data(), cs.data(), m, k, n, false);
  kern::matmul_tn_omp(at.data(), b.data(), cp.data(), m, k, n, false);
  CHECK(cs == cp);
}

TEST_CASE("omp convolution is bit-identical to the serial reference") {
  int h = 9, w = 11;
  auto img = randv(h * w, 5);
  std::vector<double> kern3 = {0.0625, 0.125, 0.0625, 0.125, 0.25,
                               0.125,  0.0625, 0.125, 0.0625};
  std::vector<double> os(h * w), op(h * w);
  kern::conv2d_reflect_serial(img.data(), h, w, kern3.data(), 3, 3, os.data());
  kern::conv2d_reflect_omp(img.data(), h, w, kern3.data(), 3, 3, op.data());
  CHECK(os == op);
}

TEST_CASE("omp bilinear gather is bit-identical to the serial reference") {
  int h = 6, w = 8;
  auto img = randv(h * w, 6);
  int n = 40;
  std::vector<double> xs(n), ys(n);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(-1.5, w + 0.5), uy(-1.5, h + 0.5);
  for (int i = 0; i < n; ++i) {
    xs[i] = ux(rng);
    ys[i] = uy(rng);
  }
  std::vector<double> os(n), op(n);
  kern::bilinear_gather_serial(img.data(), h, w, xs.data(), ys.data(), n,
                               os.data());
  kern::bilinear_gather_omp(img.data(), h, w, xs.data(), ys.data(), n,
                            op.data());
  CHECK(os == op);
}

TEST_CASE("parallel toggle dispatches without changing results") {
  int m = 4, k = 4, n = 4;
  auto a = randv(m * k, 8), b = randv(k * n, 9);
  std::vector<double> c1(m * n), c2(m * n);
  kern::set_parallel(false);
  kern::matmul(a.data(), b.data(), c1.data(), m, k, n);
  kern::set_parallel(true);
  kern::matmul(a.data(), b.data(), c2.data(), m, k, n);
  CHECK(c1 == c2);
}

TEST_CASE("max_threads is at least one") { CHECK(kern::max_threads() >= 1); }
