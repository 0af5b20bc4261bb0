#include "rxpolicy/threshold.hpp"

#include <algorithm>
#include <cmath>

namespace rxp {

std::pair<double, double> estimate_mu_c(const Vec& x, const TreatmentGroup& group, int a, int d,
                                        double r, std::uint64_t seed,
                                        const SolverOptions& opts) {
    const int n = group.size();
    require(a >= 1 && a < n, "estimate_mu_c: need 1 <= a < N_m");
    require(d >= 2, "estimate_mu_c: need at least 2 repetitions");

    Rng rng(seed);
    Vec preds(d);
    for (int i = 0; i < d; ++i) {
        const std::vector<int> rows = rng.sample_without_replacement(n, a);
        Mat Xs(a, group.X.cols());
        Vec ys(a);
        for (int j = 0; j < a; ++j) {
            Xs.row(j) = group.X.row(rows[static_cast<std::size_t>(j)]);
            ys[j] = group.y[rows[static_cast<std::size_t>(j)]];
        }
        const RobustLinearModel model = fit_rlad(Xs, ys, r, opts);
        preds[i] = x.dot(model.beta);
    }

    const double mu = preds.mean();
    double ss = 0.0;
    for (int i = 0; i < d; ++i) ss += (preds[i] - mu) * (preds[i] - mu);
    const double c = std::sqrt(ss / static_cast<double>(d - 1));
    return {mu, c};
}

namespace {

double threshold_impl(double x_co, const Vec& mu, const Vec& c, double log_eps) {
    require(mu.size() >= 1 && mu.size() == c.size(), "threshold: mu/c length mismatch");
    require(c.minCoeff() >= 0.0, "threshold: c must be >= 0");
    double lowest = std::numeric_limits<double>::infinity();
    for (int m = 0; m < mu.size(); ++m) {
        const double slack = std::sqrt(-2.0 * c[m] * c[m] * log_eps);
        lowest = std::min(lowest, x_co - mu[m] - slack);
    }
    return std::max(0.0, lowest);
}

} // namespace

double threshold_randomized(double x_co, const Vec& mu, const Vec& c, double eps_bar) {
    require(eps_bar > 0.0 && eps_bar < 1.0, "threshold: eps_bar must lie in (0, 1)");
    return threshold_impl(x_co, mu, c, std::log(eps_bar / static_cast<double>(mu.size())));
}

double threshold_deterministic(double x_co, const Vec& mu, const Vec& c, double eps_bar) {
    require(eps_bar > 0.0 && eps_bar < 1.0, "threshold: eps_bar must lie in (0, 1)");
    return threshold_impl(x_co, mu, c, std::log(eps_bar));
}

FreezeDecision prescribe_from_predictions(const Vec& y_hat, double x_co, int current_treatment,
                                          const PolicyConfig& cfg, const MuCEstimate& est,
                                          double eps_bar, Rng& rng) {
    require(current_treatment >= 0 && current_treatment < y_hat.size(),
            "prescribe: current treatment out of range");
    FreezeDecision decision;
    if (cfg.mode == PolicyMode::Randomized) {
        const PolicyDistribution dist = policy_probs(y_hat, cfg.xi);
        decision.threshold = threshold_randomized(x_co, est.mu, est.c, eps_bar);
        decision.probs = dist.probs;
        const double expected = expected_predicted_outcome(dist, y_hat);
        decision.frozen = expected > x_co - decision.threshold;
        decision.treatment = decision.frozen ? current_treatment : sample_treatment(dist, rng);
    } else {
        decision.threshold = threshold_deterministic(x_co, est.mu, est.c, eps_bar);
        decision.probs = Vec::Zero(y_hat.size());
        const int best = deterministic_choice(y_hat);
        decision.probs[best] = 1.0;
        decision.frozen = y_hat[best] > x_co - decision.threshold;
        decision.treatment = decision.frozen ? current_treatment : best;
    }
    return decision;
}

FreezeDecision prescribe(const Vec& x, double x_co, int current_treatment,
                         const std::vector<KnnPredictor>& predictors, const PolicyConfig& cfg,
                         const MuCEstimate& est, double eps_bar, std::uint64_t seed) {
    require(!predictors.empty(), "prescribe: no treatment predictors");
    Vec y_hat(static_cast<int>(predictors.size()));
    for (std::size_t m = 0; m < predictors.size(); ++m)
        y_hat[static_cast<int>(m)] = predict_knn(x, predictors[m]);
    Rng rng(seed);
    return prescribe_from_predictions(y_hat, x_co, current_treatment, cfg, est, eps_bar, rng);
}

} // namespace rxp
