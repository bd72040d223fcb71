#include "air/count_prior.hpp"

#include <cmath>
#include <stdexcept>

namespace air {

CountPrior make_count_prior(std::vector<double> pmf) {
  if (pmf.empty()) throw std::invalid_argument("count prior: empty pmf");
  double total = 0.0;
  for (double p : pmf) {
    if (p < 0) throw std::invalid_argument("count prior: negative mass");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("count prior: pmf does not sum to 1");
  CountPrior prior;
  prior.pmf = std::move(pmf);
  int N = prior.max_count();
  prior.tail.assign(N + 2, 0.0);
  for (int n = N; n >= 0; --n) prior.tail[n] = prior.tail[n + 1] + prior.pmf[n];
  return prior;
}

CountPrior truncated_geometric(double rho, int N) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("truncated_geometric: rho must be in (0,1)");
  if (N < 0) throw std::invalid_argument("truncated_geometric: N must be >= 0");
  std::vector<double> pmf(N + 1);
  double w = 1.0, total = 0.0;
  for (int n = 0; n <= N; ++n) {
    pmf[n] = (1.0 - rho) * w;
    total += pmf[n];
    w *= rho;
  }
  for (auto& p : pmf) p /= total;
  // renormalize exactly
  double s = 0.0;
  for (double p : pmf) s += p;
  pmf[0] += 1.0 - s;
  return make_count_prior(std::move(pmf));
}

double unary_conditional(int i, const CountPrior& prior) {
  int N = prior.max_count();
  if (i < 1 || i > N + 1)
    throw std::invalid_argument("unary_conditional: step index out of range");
  if (prior.tail[i - 1] <= 0.0)
    throw std::invalid_argument(
        "unary_conditional: conditioning on an impossible prefix");
  return prior.tail[i] / prior.tail[i - 1];
}

double log_prob_count(int n, int budget, const CountPrior& prior) {
  int N = prior.max_count();
  if (n < 0 || n > budget || budget > N + 1)
    throw std::invalid_argument("log_prob_count: count out of range");
  double lp = 0.0;
  for (int i = 1; i <= n; ++i) lp += std::log(unary_conditional(i, prior));
  if (n < budget) lp += std::log1p(-unary_conditional(n + 1, prior));
  return lp;
}

double log_prob_unary(const std::vector<int>& code, const CountPrior& prior) {
  int N = prior.max_count();
  if (code.empty() || static_cast<int>(code.size()) > N + 1)
    throw std::invalid_argument("log_prob_unary: bad code length");
  int n = 0;
  bool terminated = false;
  for (int bit : code) {
    if (bit == 1) {
      if (terminated)
        throw std::invalid_argument("log_prob_unary: one after the zero");
      ++n;
    } else if (bit == 0) {
      if (terminated)
        throw std::invalid_argument("log_prob_unary: multiple zeros");
      terminated = true;
    } else {
      throw std::invalid_argument("log_prob_unary: bits must be 0 or 1");
    }
  }
  if (!terminated && n < N)
    throw std::invalid_argument("log_prob_unary: missing terminating zero");
  if (n > N) throw std::invalid_argument("log_prob_unary: count exceeds N");
  return log_prob_count(n, terminated ? n + 1 : n, prior);
}

}  // namespace air
