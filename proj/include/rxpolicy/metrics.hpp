#pragma once

#include "rxpolicy/common.hpp"
#include "rxpolicy/rlad.hpp"

#include <string>
#include <vector>

namespace rxp {

struct MetricsReport {
    double r2 = 0.0;
    double mse = 0.0;
    double mean_ae = 0.0;
    double median_ae = 0.0;
};

// 1 - sum (y - yhat)^2 / sum (y - ybar)^2. Throws DataError on constant y.
double r_square(const Vec& y, const Vec& y_hat);
double mse(const Vec& y, const Vec& y_hat);
double mean_ae(const Vec& y, const Vec& y_hat);
// Median of |y - yhat|; even lengths average the two central order statistics.
double median_ae(const Vec& y, const Vec& y_hat);

MetricsReport compute_metrics(const Vec& y, const Vec& y_hat);

// Coefficients ranked by |value| descending (signed values reported); ties
// keep feature-index order. top <= 0 means all.
std::vector<std::pair<std::string, double>> feature_importance(
    const RobustLinearModel& model, const std::vector<std::string>& names, int top = 20);

} // namespace rxp
