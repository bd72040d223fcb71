#include "doctest.h"

#include <cmath>
#include <random>

#include "air/nn.hpp"
#include "air/stn.hpp"

using namespace air;

namespace {
// Smooth random image: low-frequency cosine mixture, good for FD checks.
Tensor smooth_image(int h, int w, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
  std::vector<double> img(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col)
      img[r * w + col] = 0.5 + 0.3 * std::cos(a + 2.0 * b * r / h) *
                                   std::sin(c + 2.0 * d * col / w);
  return Tensor::from({h, w}, std::move(img));
}
}  // namespace

TEST_CASE("identity pose grid equals the canonical lattice") {
  AffineGrid g = affine_grid({1.0, 0.0, 0.0}, 3, 3);
  double expect[] = {-1.0, 0.0, 1.0};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      CHECK(g.xs[r * 3 + c] == doctest::Approx(expect[c]));
      CHECK(g.ys[r * 3 + c] == doctest::Approx(expect[r]));
    }
}

TEST_CASE("scale-half grid spans the central half; translation shifts it") {
  AffineGrid g = affine_grid({0.5, 0.0, 0.0}, 5, 5);
  CHECK(g.xs[0] == doctest::Approx(-0.5));
  CHECK(g.xs[4] == doctest::Approx(0.5));
  AffineGrid t = affine_grid({0.5, 0.5, 0.0}, 5, 5);
  for (size_t i = 0; i < g.xs.size(); ++i)
    CHECK(t.xs[i] == doctest::Approx(g.xs[i] + 0.5));
}

TEST_CASE("identity attend reproduces the image when resolutions match") {
  Tensor img = smooth_image(7, 9, 1);
  Tensor pose = Tensor::from({3}, {1.0, 0.0, 0.0});
  Tensor out = attend(img, pose, 7, 9);
  for (int i = 0; i < img.size(); ++i)
    CHECK(out.at(i) == doctest::Approx(img.at(i)).epsilon(1e-12));
}

TEST_CASE("one-pixel shift of a delta image moves the delta") {
  int n = 9;
  std::vector<double> d(n * n, 0.0);
  d[4 * n + 4] = 1.0;  // center
  Tensor img = Tensor::from({n, n}, std::move(d));
  // shifting sample points right by one pixel: tx = 2/(n-1)
  Tensor pose = Tensor::from({3}, {1.0, 2.0 / (n - 1), 0.0});
  Tensor out = attend(img, pose, n, n);
  CHECK(out.at(4 * n + 3) == doctest::Approx(1.0));
  CHECK(out.at(4 * n + 4) == doctest::Approx(0.0));
}

TEST_CASE("pose gradients match finite differences on smooth images") {
  for (unsigned seed : {2u, 3u, 4u}) {
    Tensor img = smooth_image(12, 12, seed);
    auto f = [&](const Tensor& pose) {
      return sum(square(attend(img, pose, 6, 6)));
    };
    Tensor pose = Tensor::from({3}, {0.6, 0.15, -0.2});
    CHECK(grad_check(f, pose, 1e-5) < 1e-3);
  }
}

TEST_CASE("image gradients through attend match finite differences") {
  Tensor pose = Tensor::from({3}, {0.7, 0.1, 0.05});
  auto f = [&](const Tensor& img) {
    return sum(square(attend(img, pose, 5, 5)));
  };
  CHECK(grad_check(f, smooth_image(8, 8, 5), 1e-5) < 1e-6);
}

TEST_CASE("write places a glimpse and zero glimpse writes a zero canvas") {
  Tensor zeros = Tensor::zeros({4, 4});
  Tensor pose = Tensor::from({3}, {0.5, 0.2, -0.3});
  Tensor canvas = write(zeros, pose, 10, 10);
  for (int i = 0; i < canvas.size(); ++i) CHECK(canvas.at(i) == 0.0);
}

TEST_CASE("attend-then-write round trip at a central half-scale pose") {
  Tensor img = smooth_image(20, 20, 6);
  Tensor pose = Tensor::from({3}, {0.5, 0.0, 0.0});
  Tensor glimpse = attend(img, pose, 12, 12);
  Tensor back = write(glimpse, pose, 20, 20);
  // compare the interior of the written patch against the original
  double err = 0.0;
  int count = 0;
  for (int r = 7; r < 13; ++r)
    for (int c = 7; c < 13; ++c) {
      err += std::abs(back.at(r * 20 + c) - img.at(r * 20 + c));
      ++count;
    }
  CHECK(err / count < 0.02);
}

TEST_CASE("writes at disjoint poses are additive and independent") {
  Tensor g = Tensor::full({3, 3}, 1.0);
  Tensor p1 = Tensor::from({3}, {0.2, -0.6, -0.6});
  Tensor p2 = Tensor::from({3}, {0.2, 0.6, 0.6});
  Tensor c1 = write(g, p1, 16, 16);
  Tensor c2 = write(g, p2, 16, 16);
  Tensor both = c1 + c2;
  // where c1 is nonzero, c2 is zero, and the sum equals each part
  for (int i = 0; i < both.size(); ++i) {
    if (c1.at(i) != 0.0) CHECK(c2.at(i) == 0.0);
    CHECK(both.at(i) == doctest::Approx(c1.at(i) + c2.at(i)));
  }
}

TEST_CASE("attend and write are linear in pixel values") {
  Tensor img1 = smooth_image(10, 10, 7);
  Tensor img2 = smooth_image(10, 10, 8);
  Tensor pose = Tensor::from({3}, {0.8, -0.1, 0.2});
  Tensor lhs = attend(img1 + img2, pose, 6, 6);
  Tensor rhs = attend(img1, pose, 6, 6) + attend(img2, pose, 6, 6);
  for (int i = 0; i < lhs.size(); ++i)
    CHECK(lhs.at(i) == doctest::Approx(rhs.at(i)).epsilon(1e-12));
}

TEST_CASE("tiny scale in write contributes zeros rather than failing") {
  Tensor g = Tensor::full({3, 3}, 1.0);
  Tensor pose = Tensor::from({3}, {1e-9, 0.0, 0.0});
  Tensor canvas = write(g, pose, 8, 8);
  for (int i = 0; i < canvas.size(); ++i) CHECK(std::isfinite(canvas.at(i)));
}

TEST_CASE("write pose gradients match finite differences") {
  Tensor glimpse = smooth_image(6, 6, 9);
  auto f = [&](const Tensor& pose) {
    return sum(square(write(glimpse, pose, 12, 12)));
  };
  Tensor pose = Tensor::from({3}, {0.55, 0.1, -0.15});
  CHECK(grad_check(f, pose, 1e-5) < 1e-3);
}
