#include "rxpolicy/policy.hpp"

#include <cmath>

namespace rxp {

PolicyDistribution policy_probs(const Vec& y_hat, double xi) {
    require(y_hat.size() >= 1, "policy_probs: need at least one treatment");
    require(xi >= 0.0, "policy_probs: xi must be >= 0");
    require(y_hat.allFinite(), "policy_probs: predictions must be finite");

    const double shift = y_hat.minCoeff();
    Vec probs(y_hat.size());
    double total = 0.0;
    for (int m = 0; m < y_hat.size(); ++m) {
        probs[m] = std::exp(-xi * (y_hat[m] - shift));
        total += probs[m];
    }
    probs /= total;
    return {std::move(probs)};
}

int sample_treatment(const PolicyDistribution& dist, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (int m = 0; m < dist.probs.size(); ++m) {
        cum += dist.probs[m];
        if (u < cum) return m;
    }
    return static_cast<int>(dist.probs.size()) - 1;
}

int deterministic_choice(const Vec& y_hat) {
    require(y_hat.size() >= 1, "deterministic_choice: need at least one treatment");
    int best = 0;
    for (int m = 1; m < y_hat.size(); ++m)
        if (y_hat[m] < y_hat[best]) best = m;
    return best;
}

std::pair<double, double> regret_bound_sides(const Vec& y_hat, const Vec& y_true, double xi,
                                             int k) {
    const int m = static_cast<int>(y_hat.size());
    require(y_true.size() == m, "regret_bound_sides: length mismatch");
    require(xi > 0.0, "regret_bound_sides: xi must be > 0");
    require(k >= 0 && k < m, "regret_bound_sides: comparison arm out of range");
    if (y_hat.minCoeff() < 0.0 || y_true.minCoeff() < 0.0)
        throw UsageError("regret_bound_sides: outcomes must be non-negative");

    const PolicyDistribution dist = policy_probs(y_hat, xi);
    const double lhs = dist.probs.dot(y_true);

    const double mean_hat = y_hat.mean();
    const double mean_hat_sq = y_hat.squaredNorm() / static_cast<double>(m);
    const double weighted_true_sq = dist.probs.dot(y_true.cwiseProduct(y_true));
    const double rhs = y_true[k] + (y_hat[k] - mean_hat) +
                       xi * (mean_hat_sq + weighted_true_sq) +
                       std::log(static_cast<double>(m)) / xi;
    return {lhs, rhs};
}

double expected_predicted_outcome(const PolicyDistribution& dist, const Vec& y_hat) {
    require(dist.probs.size() == y_hat.size(), "expected_predicted_outcome: length mismatch");
    return dist.probs.dot(y_hat);
}

} // namespace rxp
