#include "air/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace air {

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)
}

Tensor gaussian_sample_reparam(const GaussianParams& p, const Tensor& noise) {
  if (p.mean.shape() != p.log_std.shape() || p.mean.shape() != noise.shape())
    throw std::invalid_argument("gaussian_sample_reparam: shape mismatch");
  return p.mean + exp(p.log_std) * noise;
}

Tensor gaussian_log_pdf(const Tensor& z, const GaussianParams& p) {
  Tensor zc = (z - p.mean) * exp(neg(p.log_std));
  Tensor half = Tensor::scalar(0.5);
  Tensor terms = neg(Tensor::scalar(0.5 * kLogTwoPi)) - p.log_std -
                 half * square(zc);
  return sum(terms);
}

int bernoulli_sample(const BernoulliParams& p, double u) {
  double logit = p.logit.item();
  double prob = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                           : std::exp(logit) / (1.0 + std::exp(logit));
  return u < prob ? 1 : 0;
}

int categorical_sample(const CategoricalParams& p, double u) {
  const auto& logits = p.logits.data();
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  double acc = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    acc += std::exp(logits[k] - mx) / z;
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(logits.size()) - 1;
}

Tensor discrete_log_pmf(int z, const BernoulliParams& p) {
  if (z != 0 && z != 1)
    throw std::invalid_argument("bernoulli log-pmf: sample outside {0,1}");
  // log sigmoid(logit) = -softplus(-logit); log(1-p) = -softplus(logit)
  return z == 1 ? neg(softplus(neg(p.logit))) : neg(softplus(p.logit));
}

Tensor discrete_log_pmf(int z, const CategoricalParams& p) {
  int k = p.logits.size();
  if (z < 0 || z >= k)
    throw std::invalid_argument("categorical log-pmf: sample outside support");
  // logits[z] - logsumexp(logits), with the max subtracted for stability
  double mx = p.logits.data()[0];
  for (double v : p.logits.data()) mx = std::max(mx, v);
  Tensor mxt = Tensor::scalar(mx);
  Tensor lse = log(sum(exp(p.logits - mxt))) + mxt;
  return select(p.logits, z) - lse;
}

Tensor score_function_surrogate(const Tensor& log_q, double learning_signal,
                                double baseline_value) {
  return log_q * Tensor::scalar(learning_signal - baseline_value);
}

Baseline::Baseline(ParamStore& ps, const std::string& prefix,
                   const std::vector<int>& dims, Rng& rng)
    : net(ps, prefix, dims, rng) {
  if (dims.back() != 1)
    throw std::invalid_argument("baseline: output must be scalar");
}

Tensor Baseline::operator()(const Tensor& features) const {
  // Inputs are detached so no gradient leaks into the main model.
  return reshape(net(stop_gradient(features)), {1});
}

Tensor baseline_loss(const Tensor& baseline_output, double learning_signal) {
  return sum(square(baseline_output - Tensor::scalar(learning_signal)));
}

}  // namespace air
