#pragma once

#include "rxpolicy/common.hpp"
#include "rxpolicy/dataset.hpp"
#include "rxpolicy/knn.hpp"
#include "rxpolicy/policy.hpp"
#include "rxpolicy/rlad.hpp"

#include <cstdint>
#include <vector>

namespace rxp {

// Subsample estimates of the conditional mean and standard deviation of the
// linear predicted outcome, per treatment arm.
struct MuCEstimate {
    Vec mu; // outcome units
    Vec c;  // >= 0, outcome units
    int a = 0;
    int d = 0;
};

// One arm's estimate: d repetitions of (subsample a members without
// replacement, fit the regularized LAD model, predict x'beta), then the
// sample mean and the 1/(d-1) standard deviation of those predictions.
std::pair<double, double> estimate_mu_c(const Vec& x, const TreatmentGroup& group, int a, int d,
                                        double r, std::uint64_t seed,
                                        const SolverOptions& opts = {});

// T(x) = max(0, min_m (x_co - mu_m - sqrt(-2 c_m^2 log(eps_bar / M)))).
double threshold_randomized(double x_co, const Vec& mu, const Vec& c, double eps_bar);

// Same with log(eps_bar): the tighter single-arm bound that matches the
// deterministic (xi -> infinity) policy.
double threshold_deterministic(double x_co, const Vec& mu, const Vec& c, double eps_bar);

struct FreezeDecision {
    bool frozen = false;
    double threshold = 0.0;
    int treatment = 0;
    Vec probs; // sampling distribution (degenerate when frozen/deterministic)
};

// Freeze rule on precomputed predictions: keep the current treatment m_c
// unless the policy's expected predicted outcome (randomized) or best
// predicted outcome (deterministic) improves on x_co by more than T(x).
// The boundary is inclusive: equality with x_co - T does not freeze.
FreezeDecision prescribe_from_predictions(const Vec& y_hat, double x_co, int current_treatment,
                                          const PolicyConfig& cfg, const MuCEstimate& est,
                                          double eps_bar, Rng& rng);

// Convenience wrapper computing y_hat from per-arm K-NN predictors.
FreezeDecision prescribe(const Vec& x, double x_co, int current_treatment,
                         const std::vector<KnnPredictor>& predictors, const PolicyConfig& cfg,
                         const MuCEstimate& est, double eps_bar, std::uint64_t seed);

} // namespace rxp
