#pragma once

// Distributions over the object count n and its unary encoding z_pres
// (n ones followed by a zero), including the conditional construction that
// makes the sequential presence decisions consistent with p(n).

#include <vector>

namespace air {

struct CountPrior {
  std::vector<double> pmf;   // p(0..N)
  std::vector<double> tail;  // tail[n] = sum_{k>=n} p(k), n = 0..N+1

  int max_count() const { return static_cast<int>(pmf.size()) - 1; }
};

// Builds the tail sums and validates the pmf (sums to 1 within 1e-12).
CountPrior make_count_prior(std::vector<double> pmf);

// p(n) proportional to (1-rho) * rho^n on {0..N}, renormalized. Larger rho
// favors more objects.
CountPrior truncated_geometric(double rho, int N);

// Continue probability p(z_pres^i = 1 | z_pres^{1:i-1} all ones)
//   = tail[i] / tail[i-1], for 1 <= i <= N+1.
double unary_conditional(int i, const CountPrior& prior);

// Log-probability of the unary code for count n; equals log p(n) exactly.
// The terminating zero factor is included only when n <= N.
double log_prob_unary(const std::vector<int>& code, const CountPrior& prior);

// Same quantity from the count directly (code of n ones then a zero when
// n < budget; exactly budget ones otherwise).
double log_prob_count(int n, int budget, const CountPrior& prior);

}  // namespace air
