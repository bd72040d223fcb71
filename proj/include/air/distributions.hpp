#pragma once

// Sampling distributions and the two stochastic gradient estimators:
// path-wise (reparameterized Gaussian) and likelihood-ratio (score function)
// with learned scalar baselines for variance reduction.

#include "air/nn.hpp"
#include "air/tensor.hpp"

namespace air {

struct GaussianParams {
  Tensor mean;
  Tensor log_std;  // std = exp(log_std), positive by construction
};

// z = mean + exp(log_std) * noise, differentiable w.r.t. both params.
Tensor gaussian_sample_reparam(const GaussianParams& p, const Tensor& noise);

// Sum over components of the Gaussian log-density.
Tensor gaussian_log_pdf(const Tensor& z, const GaussianParams& p);

struct BernoulliParams {
  Tensor logit;  // scalar
};

// 1 iff u < sigmoid(logit); the sample carries no gradient path.
int bernoulli_sample(const BernoulliParams& p, double u);

struct CategoricalParams {
  Tensor logits;  // [K]
};

int categorical_sample(const CategoricalParams& p, double u);

// Differentiable log-mass of an observed discrete sample.
Tensor discrete_log_pmf(int z, const BernoulliParams& p);
Tensor discrete_log_pmf(int z, const CategoricalParams& p);

// log_q * (learning_signal - baseline_value); the two reals are detached.
// Minimizing the negation of this ascends the objective along the
// likelihood-ratio estimator direction.
Tensor score_function_surrogate(const Tensor& log_q, double learning_signal,
                                double baseline_value);

// Scalar regression network b(features) used to center the learning signal.
struct Baseline {
  Mlp net;
  Baseline() = default;
  Baseline(ParamStore& ps, const std::string& prefix,
           const std::vector<int>& dims, Rng& rng);
  Tensor operator()(const Tensor& features) const;
};

// (output - learning_signal)^2; gradients reach only the baseline.
Tensor baseline_loss(const Tensor& baseline_output, double learning_signal);

}  // namespace air
