#include "rxpolicy/knn.hpp"

#include "rxpolicy/rlad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rxp {

double weighted_distance(const Vec& x, const Vec& xi, const Vec& weights) {
    if (x.size() != xi.size() || x.size() != weights.size())
        throw UsageError("weighted_distance: length mismatch");
    double d = 0.0;
    for (int j = 0; j < x.size(); ++j) {
        const double diff = x[j] - xi[j];
        d += weights[j] * diff * diff;
    }
    return d;
}

std::vector<int> knn_neighbor_rows(const Vec& x, const Mat& X, const Vec& weights, int k) {
    const int n = static_cast<int>(X.rows());
    if (n == 0) throw DataError("knn: empty reference group");
    require(k >= 1 && k <= n, "knn: k out of range");
    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        dist[static_cast<std::size_t>(i)] = {weighted_distance(x, X.row(i).transpose(), weights), i};
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    // pair comparison orders by (distance, row index): the tie-break contract
    std::sort(dist.begin(), dist.begin() + k);
    std::vector<int> rows(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) rows[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i)].second;
    return rows;
}

double knn_predict_raw(const Vec& x, const Mat& X, const Vec& y, const Vec& weights, int k) {
    const std::vector<int> rows = knn_neighbor_rows(x, X, weights, k);
    double sum = 0.0;
    for (int row : rows) sum += y[row];
    return sum / static_cast<double>(rows.size());
}

double predict_knn(const Vec& x, const KnnPredictor& predictor) {
    return knn_predict_raw(x, predictor.X, predictor.y, predictor.weights, predictor.k);
}

KRule fit_k_rule(const std::vector<std::pair<int, int>>& pairs) {
    require(pairs.size() >= 2, "fit_k_rule: need at least 2 (N, K) pairs");
    bool distinct = false;
    for (std::size_t i = 1; i < pairs.size(); ++i)
        if (pairs[i].first != pairs[0].first) distinct = true;
    if (!distinct) throw DataError("fit_k_rule: degenerate pairs (all group sizes equal)");

    // Least squares on the 2x2 normal equations for K = a + b*sqrt(N).
    double s1 = 0.0, sx = 0.0, sxx = 0.0, sy = 0.0, sxy = 0.0;
    for (const auto& [n, k] : pairs) {
        const double xv = std::sqrt(static_cast<double>(n));
        const double yv = static_cast<double>(k);
        s1 += 1.0;
        sx += xv;
        sxx += xv * xv;
        sy += yv;
        sxy += xv * yv;
    }
    const double det = s1 * sxx - sx * sx;
    if (std::abs(det) < 1e-12 * (1.0 + sxx))
        throw DataError("fit_k_rule: degenerate pairs (singular fit)");
    KRule rule;
    rule.a = (sy * sxx - sx * sxy) / det;
    rule.b = (s1 * sxy - sx * sy) / det;
    return rule;
}

int apply_k_rule(const KRule& rule, int n) {
    require(n >= 1, "apply_k_rule: n must be >= 1");
    const double k = rule.a + rule.b * std::sqrt(static_cast<double>(n));
    return std::clamp(static_cast<int>(std::llround(k)), 1, n);
}

int tune_k(const TreatmentGroup& group, const Vec& weights, const std::vector<int>& k_grid,
           int folds, std::uint64_t seed) {
    require(!k_grid.empty(), "tune_k: empty grid");
    const int n = group.size();
    const std::vector<int> fold = cv_fold_assignment(n, folds, seed);

    int min_fold_train = n;
    for (int f = 0; f < folds; ++f) {
        int n_in = 0;
        for (int i = 0; i < n; ++i) n_in += fold[static_cast<std::size_t>(i)] != f;
        min_fold_train = std::min(min_fold_train, n_in);
    }

    std::vector<int> grid;
    for (int k : k_grid)
        if (k >= 1 && k <= min_fold_train) grid.push_back(k);
    if (grid.empty()) grid.push_back(1);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    // Distances are shared across the grid: compute neighbor pools per fold
    // once, then score each k.
    std::vector<double> err(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_rows;
        for (int i = 0; i < n; ++i)
            if (fold[static_cast<std::size_t>(i)] != f) train_rows.push_back(i);

        int n_out = 0;
        std::vector<double> fold_err(grid.size(), 0.0);
        for (int i = 0; i < n; ++i) {
            if (fold[static_cast<std::size_t>(i)] != f) continue;
            ++n_out;
            std::vector<std::pair<double, int>> dist;
            dist.reserve(train_rows.size());
            const Vec x = group.X.row(i).transpose();
            for (int row : train_rows)
                dist.emplace_back(weighted_distance(x, group.X.row(row).transpose(), weights), row);
            const int kmax = grid.back();
            std::nth_element(dist.begin(), dist.begin() + (kmax - 1), dist.end());
            std::sort(dist.begin(), dist.begin() + kmax);
            double run = 0.0;
            std::size_t gi = 0;
            for (int k = 1; k <= kmax; ++k) {
                run += group.y[dist[static_cast<std::size_t>(k - 1)].second];
                if (gi < grid.size() && grid[gi] == k) {
                    fold_err[gi] += std::abs(group.y[i] - run / k);
                    ++gi;
                }
            }
        }
        for (std::size_t g = 0; g < grid.size(); ++g)
            err[g] += fold_err[g] / static_cast<double>(n_out);
    }

    int best_k = grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (err[g] < best_err) { // strict: ties keep the smaller k
            best_err = err[g];
            best_k = grid[static_cast<std::size_t>(g)];
        }
    }
    return best_k;
}

} // namespace rxp
