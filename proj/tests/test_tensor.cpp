#include "doctest.h"

#include <cmath>
#include <random>

#include "air/nn.hpp"
#include "air/tensor.hpp"

using namespace air;

namespace {
Tensor randn(Shape shape, Rng& rng, bool requires_grad = false) {
  std::normal_distribution<double> nd(0.0, 1.0);
  int n = 1;
  for (int e : shape) n *= e;
  std::vector<double> data(n);
  for (auto& v : data) v = nd(rng);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}
}  // namespace

TEST_CASE("sigmoid at zero: value 0.5, gradient 0.25") {
  Tensor x = Tensor::scalar(0.0, true);
  Tensor y = sigmoid(x);
  CHECK(y.item() == doctest::Approx(0.5));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("log(exp(x)) inverts") {
  Tensor x = Tensor::scalar(1.7);
  CHECK(log(exp(x)).item() == doctest::Approx(1.7).epsilon(1e-12));
}

TEST_CASE("mul gradient matches central differences on random 3x4 tensors") {
  Rng rng(11);
  Tensor b = randn({3, 4}, rng);
  auto f = [&](const Tensor& x) { return sum(mul(x, b)); };
  Tensor a = randn({3, 4}, rng);
  CHECK(grad_check(f, a, 1e-5) < 1e-6);
}

TEST_CASE("elementwise shape mismatch rejected") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("scalar broadcasting") {
  Tensor a = Tensor::from({3}, {1.0, 2.0, 3.0});
  Tensor s = Tensor::scalar(10.0);
  Tensor y = a * s;
  CHECK(y.at(2) == doctest::Approx(30.0));
}

TEST_CASE("matmul identity and hand arithmetic") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(3);
  Tensor m = randn({3, 3}, rng);
  Tensor out = matmul(eye, m);
  for (int i = 0; i < 9; ++i) CHECK(out.at(i) == doctest::Approx(m.at(i)));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at(0) == doctest::Approx(3));
  CHECK(c.at(1) == doctest::Approx(7));
}

TEST_CASE("matmul dimension mismatch rejected") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                  std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor b = randn({4, 2}, rng);
  auto f = [&](const Tensor& x) { return sum(matmul(x, b)); };
  CHECK(grad_check(f, randn({3, 4}, rng), 1e-5) < 1e-6);
  Tensor a = randn({3, 4}, rng);
  auto g = [&](const Tensor& x) { return sum(square(matmul(a, x))); };
  CHECK(grad_check(g, randn({4, 2}, rng), 1e-5) < 1e-6);
}

TEST_CASE("backward of x^2 + 3x at x=2, and accumulation") {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor three = Tensor::scalar(3.0);
  Tensor y = square(x) + three * x;
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  Tensor y2 = square(x) + three * x;
  backward(y2);
  CHECK(x.grad()[0] == doctest::Approx(14.0));
  x.zero_grad();
  Tensor y3 = square(x) + three * x;
  backward(y3);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::zeros({2}, true);
  CHECK_THROWS_AS(backward(x + x), std::invalid_argument);
}

TEST_CASE("2-layer MLP grads match central differences") {
  Rng rng(42);
  ParamStore ps;
  Mlp mlp(ps, "mlp", {5, 8, 1}, rng);
  Tensor input = randn({5}, rng);
  Tensor loss = sum(square(mlp(input)));
  ps.zero_grad();
  backward(loss);
  double eps = 1e-5;
  for (auto& p : ps.params()) {
    for (int i = 0; i < p.tensor.size(); ++i) {
      double saved = p.tensor.data()[i];
      p.tensor.data()[i] = saved + eps;
      double fp = sum(square(mlp(input))).item();
      p.tensor.data()[i] = saved - eps;
      double fm = sum(square(mlp(input))).item();
      p.tensor.data()[i] = saved;
      double fd = (fp - fm) / (2 * eps);
      double a = p.tensor.grad()[i];
      double err = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-10);
      if (std::abs(a) < 1e-12 && std::abs(fd) < 1e-12) err = 0;
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("grad_check utility") {
  Rng rng(5);
  auto sumsq = [](const Tensor& x) { return sum(square(x)); };
  CHECK(grad_check(sumsq, randn({6}, rng), 1e-5) < 1e-8);

  auto chain = [](const Tensor& x) { return sum(sigmoid(tanh(x))); };
  CHECK(grad_check(chain, randn({6}, rng), 1e-5) < 1e-5);

  // dead relu region: gradient exactly zero
  Tensor x = Tensor::from({3}, {-1.0, -2.0, -0.5}, true);
  Tensor y = sum(relu(x));
  backward(y);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("stop_gradient semantics") {
  // backward through stop_gradient(x)*x gives grad equal to x's value
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = stop_gradient(x) * x;
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(3.0));

  // loss = stop_gradient(x) leaves grad empty / zero
  Tensor z = Tensor::scalar(1.0, true);
  z.zero_grad();
  Tensor w = stop_gradient(z);
  CHECK_FALSE(w.requires_grad());
}

TEST_CASE("gradient check over all registered ops, 100 seeds") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    Tensor b = randn({4}, rng);
    // compose add/sub/mul/div/exp/log/sigmoid/tanh/relu/square/softplus
    auto f = [&](const Tensor& x) {
      Tensor t = sigmoid(x) * b + tanh(x) - softplus(x);
      Tensor u = div(square(x) + Tensor::scalar(2.0), exp(x) + Tensor::scalar(1.5));
      Tensor v = log(softplus(x) + Tensor::scalar(1.0)) + relu(x + Tensor::scalar(0.3));
      return sum(t + u * v);
    };
    CHECK(grad_check(f, randn({4}, rng), 1e-5) < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(9);
  Tensor x = randn({5}, rng, true);
  auto fa = [&]() { return sum(square(x)); };
  auto fb = [&]() { return sum(sigmoid(x)); };

  x.zero_grad();
  backward(fa());
  auto ga = x.grad();
  x.zero_grad();
  backward(fb());
  auto gb = x.grad();

  double a = 2.5, b = -1.25;
  x.zero_grad();
  backward(Tensor::scalar(a) * fa() + Tensor::scalar(b) * fb());
  for (int i = 0; i < 5; ++i)
    CHECK(x.grad()[i] == doctest::Approx(a * ga[i] + b * gb[i]).epsilon(1e-12));
}

TEST_CASE("graph construction and backward are deterministic") {
  auto run = [] {
    Rng rng(77);
    Tensor x = randn({8}, rng, true);
    Tensor y = sum(square(sigmoid(x) * x - tanh(x)));
    backward(y);
    return std::make_pair(y.item(), x.grad());
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("concat and select route gradients") {
  Rng rng(13);
  Tensor a = randn({3}, rng, true);
  Tensor b = randn({2}, rng, true);
  a.zero_grad();
  b.zero_grad();
  Tensor cat = concat({a, b});
  Tensor y = select(cat, 4) * Tensor::scalar(2.0);
  backward(y);
  CHECK(b.grad()[1] == doctest::Approx(2.0));
  CHECK(a.grad()[0] == 0.0);
}
