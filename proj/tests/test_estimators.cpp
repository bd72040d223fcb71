#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "air/distributions.hpp"

using namespace air;

namespace {
double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

TEST_CASE("reparameterized gaussian sample values") {
  GaussianParams p{Tensor::from({1}, {1.5}, true),
                   Tensor::from({1}, {std::log(0.5)}, true)};
  CHECK(gaussian_sample_reparam(p, Tensor::scalar(0.0)).item() ==
        doctest::Approx(1.5));
  CHECK(gaussian_sample_reparam(p, Tensor::scalar(2.0)).item() ==
        doctest::Approx(2.5));

  // dz/dmean = 1 and dz/dlog_std = std*noise
  p.mean.zero_grad();
  p.log_std.zero_grad();
  backward(gaussian_sample_reparam(p, Tensor::scalar(2.0)));
  CHECK(p.mean.grad()[0] == doctest::Approx(1.0));
  CHECK(p.log_std.grad()[0] == doctest::Approx(0.5 * 2.0));
}

TEST_CASE("gaussian log pdf values") {
  GaussianParams p{Tensor::scalar(0.7), Tensor::scalar(0.0)};
  double at_mean = gaussian_log_pdf(Tensor::scalar(0.7), p).item();
  CHECK(at_mean == doctest::Approx(-0.9189385332046727));
  double at_one_sigma = gaussian_log_pdf(Tensor::scalar(1.7), p).item();
  CHECK(at_one_sigma == doctest::Approx(at_mean - 0.5));
}

TEST_CASE("gaussian pdf integrates to one (quadrature oracle)") {
  GaussianParams p{Tensor::scalar(0.3), Tensor::scalar(std::log(0.8))};
  double lo = -8.0, hi = 8.6, n = 20000;
  double h = (hi - lo) / n, total = 0.0;
  for (int i = 0; i <= n; ++i) {
    double z = lo + i * h;
    double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * std::exp(gaussian_log_pdf(Tensor::scalar(z), p).item());
  }
  CHECK(std::abs(total * h - 1.0) < 1e-6);
}

TEST_CASE("bernoulli sampling semantics") {
  CHECK(bernoulli_sample({Tensor::scalar(20.0)}, 0.999999) == 1);
  CHECK(bernoulli_sample({Tensor::scalar(0.0)}, 0.49) == 1);
  CHECK(bernoulli_sample({Tensor::scalar(0.0)}, 0.51) == 0);
}

TEST_CASE("bernoulli empirical mean at p=0.7 (monte carlo)") {
  BernoulliParams p{Tensor::scalar(0.8473)};  // sigmoid ~ 0.7
  Rng rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 100000, ones = 0;
  for (int i = 0; i < n; ++i) ones += bernoulli_sample(p, u(rng));
  CHECK(std::abs(static_cast<double>(ones) / n - 0.7) < 0.005);
}

TEST_CASE("discrete log pmf values and support checks") {
  BernoulliParams b{Tensor::scalar(0.0)};
  CHECK(discrete_log_pmf(0, b).item() == doctest::Approx(std::log(0.5)));
  CHECK(discrete_log_pmf(1, b).item() == doctest::Approx(std::log(0.5)));
  CHECK_THROWS_AS(discrete_log_pmf(2, b), std::invalid_argument);

  CategoricalParams c{Tensor::zeros({3})};
  for (int k = 0; k < 3; ++k)
    CHECK(discrete_log_pmf(k, c).item() == doctest::Approx(std::log(1.0 / 3)));
  CHECK_THROWS_AS(discrete_log_pmf(3, c), std::invalid_argument);
}

TEST_CASE("log pmf gradient vs finite differences on logits") {
  auto f_bern = [](const Tensor& logit) {
    return discrete_log_pmf(1, BernoulliParams{logit});
  };
  CHECK(grad_check(f_bern, Tensor::scalar(0.37), 1e-6) < 1e-6);

  auto f_cat = [](const Tensor& logits) {
    return discrete_log_pmf(2, CategoricalParams{logits});
  };
  CHECK(grad_check(f_cat, Tensor::from({4}, {0.1, -0.4, 0.9, 0.0}), 1e-6) <
        1e-6);
}

TEST_CASE("score function estimator: E[z] gradient on Bernoulli(0.3)") {
  // f(z) = z, q = Bern(sigmoid(logit)); d/dlogit E[f] = p(1-p).
  double logit = std::log(0.3 / 0.7);
  double exact = 0.3 * 0.7;
  Rng rng(123);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Tensor lt = Tensor::scalar(logit, true);
    BernoulliParams p{lt};
    int z = bernoulli_sample(p, u(rng));
    Tensor log_q = discrete_log_pmf(z, p);
    Tensor surrogate = score_function_surrogate(log_q, static_cast<double>(z), 0.0);
    lt.zero_grad();
    backward(surrogate);
    acc += lt.grad()[0];
    acc2 += lt.grad()[0] * lt.grad()[0];
  }
  double mc = acc / n;
  double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(mc - exact) < 3 * se + 1e-12);
  // against dE[f]/dp = 1, i.e. dE/dlogit / (p(1-p)) = 1
  CHECK(std::abs(mc / (0.3 * 0.7) - 1.0) < 0.02 / (0.3 * 0.7));
}

TEST_CASE("score function estimator: constant f has zero mean") {
  double logit = 0.4;
  Rng rng(321);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 100000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    Tensor lt = Tensor::scalar(logit, true);
    BernoulliParams p{lt};
    int z = bernoulli_sample(p, u(rng));
    Tensor surrogate =
        score_function_surrogate(discrete_log_pmf(z, p), 5.0, 0.0);
    lt.zero_grad();
    backward(surrogate);
    acc += lt.grad()[0];
    acc2 += lt.grad()[0] * lt.grad()[0];
  }
  double mc = acc / n;
  double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(mc) < 3 * se + 1e-12);
}

TEST_CASE("mean baseline reduces estimator variance") {
  double logit = std::log(0.3 / 0.7);
  double mean_f = 0.3;  // E[z] for f(z)=z
  Rng rng(555);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = 100000;
  double m0 = 0, s0 = 0, m1 = 0, s1 = 0;
  for (int i = 0; i < n; ++i) {
    Tensor lt = Tensor::scalar(logit, true);
    BernoulliParams p{lt};
    int z = bernoulli_sample(p, u(rng));
    Tensor log_q = discrete_log_pmf(z, p);

    lt.zero_grad();
    backward(score_function_surrogate(log_q, z, 0.0));
    double g0 = lt.grad()[0];
    m0 += g0;
    s0 += g0 * g0;

    Tensor lt2 = Tensor::scalar(logit, true);
    Tensor log_q2 = discrete_log_pmf(z, BernoulliParams{lt2});
    lt2.zero_grad();
    backward(score_function_surrogate(log_q2, z, mean_f));
    double g1 = lt2.grad()[0];
    m1 += g1;
    s1 += g1 * g1;
  }
  double var0 = s0 / n - (m0 / n) * (m0 / n);
  double var1 = s1 / n - (m1 / n) * (m1 / n);
  CHECK(var1 < var0);
}

TEST_CASE("no gradient flows into signal or baseline inputs") {
  Tensor lt = Tensor::scalar(0.2, true);
  Tensor signal_holder = Tensor::scalar(3.0, true);
  signal_holder.zero_grad();
  Tensor log_q = discrete_log_pmf(1, BernoulliParams{lt});
  // signal passed as detached real: by construction no path exists
  Tensor s = score_function_surrogate(log_q, signal_holder.item(), 1.0);
  lt.zero_grad();
  backward(s);
  CHECK(signal_holder.grad()[0] == 0.0);
  CHECK(lt.grad()[0] != 0.0);
}

TEST_CASE("baseline loss values and gradient isolation") {
  Rng rng(7);
  ParamStore ps;
  Baseline b(ps, "bl", {4, 8, 1}, rng);
  Tensor feat = Tensor::from({4}, {0.1, -0.2, 0.3, 0.4}, true);
  feat.zero_grad();
  Tensor out = b(feat);
  CHECK(baseline_loss(out, out.item()).item() == doctest::Approx(0.0));
  CHECK(baseline_loss(Tensor::scalar(0.0), 2.0).item() == doctest::Approx(4.0));

  ps.zero_grad();
  backward(baseline_loss(out, 1.0));
  CHECK(feat.grad()[0] == 0.0);  // detached input
}

TEST_CASE("baseline regresses to the mean of a fixed signal distribution") {
  Rng rng(11);
  ParamStore ps;
  Baseline b(ps, "bl", {2, 16, 1}, rng);
  Adam opt({.lr = 1e-2, .clip_norm = 10.0});
  std::normal_distribution<double> sig(2.0, 0.5);
  Tensor feat = Tensor::from({2}, {1.0, -1.0});
  for (int step = 0; step < 2000; ++step) {
    ps.zero_grad();
    backward(baseline_loss(b(feat), sig(rng)));
    opt.step(ps.params());
  }
  CHECK(std::abs(b(feat).item() - 2.0) < 0.1);  // within 5% of the mean
}
