#pragma once

#include "rxpolicy/common.hpp"
#include "rxpolicy/rng.hpp"

#include <utility>

namespace rxp {

enum class PolicyMode { Randomized, Deterministic };

struct PolicyConfig {
    double xi = 1.0; // ignored in deterministic mode
    PolicyMode mode = PolicyMode::Randomized;
};

struct PolicyDistribution {
    Vec probs;
};

// Softmax over -xi * y_hat, evaluated after subtracting min(y_hat) so raw
// outcome units (e.g. blood pressure ~150) cannot overflow. Invariant to a
// common shift of y_hat; xi = 0 gives the uniform distribution.
PolicyDistribution policy_probs(const Vec& y_hat, double xi);

// Inverse-CDF draw over treatment indices in ascending order.
int sample_treatment(const PolicyDistribution& dist, Rng& rng);

// argmin of y_hat, ties toward the lowest index. The xi -> infinity limit of
// the randomized policy, implemented directly.
int deterministic_choice(const Vec& y_hat);

// Both sides of the expected-true-outcome bound for comparison arm k:
//   lhs = sum_m probs_m y_m
//   rhs = y_k + (yhat_k - mean(yhat)) + xi (mean(yhat^2) + sum_m probs_m y_m^2)
//         + log(M)/xi.
// Requires y_hat, y_true >= 0 elementwise and xi > 0.
std::pair<double, double> regret_bound_sides(const Vec& y_hat, const Vec& y_true, double xi,
                                             int k);

// dot(probs, y_hat): the policy's expected predicted outcome.
double expected_predicted_outcome(const PolicyDistribution& dist, const Vec& y_hat);

} // namespace rxp
