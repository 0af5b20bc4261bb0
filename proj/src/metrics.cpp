#include "rxpolicy/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace rxp {

namespace {

void check_lengths(const Vec& y, const Vec& y_hat) {
    if (y.size() != y_hat.size() || y.size() == 0)
        throw UsageError("metrics: y and y_hat must have equal nonzero length");
}

} // namespace

double r_square(const Vec& y, const Vec& y_hat) {
    check_lengths(y, y_hat);
    const double ybar = y.mean();
    const double ss_tot = (y.array() - ybar).square().sum();
    if (ss_tot == 0.0) throw DataError("r_square: constant target");
    const double ss_res = (y - y_hat).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

double mse(const Vec& y, const Vec& y_hat) {
    check_lengths(y, y_hat);
    return (y - y_hat).squaredNorm() / static_cast<double>(y.size());
}

double mean_ae(const Vec& y, const Vec& y_hat) {
    check_lengths(y, y_hat);
    return (y - y_hat).lpNorm<1>() / static_cast<double>(y.size());
}

double median_ae(const Vec& y, const Vec& y_hat) {
    check_lengths(y, y_hat);
    std::vector<double> abs_err(static_cast<std::size_t>(y.size()));
    for (int i = 0; i < y.size(); ++i) abs_err[static_cast<std::size_t>(i)] = std::abs(y[i] - y_hat[i]);
    std::sort(abs_err.begin(), abs_err.end());
    const std::size_t n = abs_err.size();
    if (n % 2 == 1) return abs_err[n / 2];
    return 0.5 * (abs_err[n / 2 - 1] + abs_err[n / 2]);
}

MetricsReport compute_metrics(const Vec& y, const Vec& y_hat) {
    return {r_square(y, y_hat), mse(y, y_hat), mean_ae(y, y_hat), median_ae(y, y_hat)};
}

std::vector<std::pair<std::string, double>> feature_importance(
    const RobustLinearModel& model, const std::vector<std::string>& names, int top) {
    require(static_cast<int>(names.size()) == model.beta.size(),
            "feature_importance: name count must match coefficient count");
    std::vector<int> order(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(model.beta[a]) > std::abs(model.beta[b]);
    });
    std::vector<std::pair<std::string, double>> out;
    const int limit = top <= 0 ? static_cast<int>(names.size())
                               : std::min<int>(top, static_cast<int>(names.size()));
    for (int i = 0; i < limit; ++i) {
        const int j = order[static_cast<std::size_t>(i)];
        out.emplace_back(names[static_cast<std::size_t>(j)], model.beta[j]);
    }
    return out;
}

} // namespace rxp
