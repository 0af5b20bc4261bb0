#pragma once

#include "rxpolicy/common.hpp"
#include "rxpolicy/dataset.hpp"

#include <cstdint>
#include <vector>

namespace rxp {

// K-NN regressor over one treatment group under the coefficient-weighted
// metric: weights are the squared fitted coefficients, so neighbors are close
// in the features that predict the outcome.
struct KnnPredictor {
    Vec weights; // squared coefficients, elementwise >= 0
    Mat X;       // reference features, group order
    Vec y;       // reference outcomes
    int k = 1;
};

// sum_j weights_j (x_j - xi_j)^2.
double weighted_distance(const Vec& x, const Vec& xi, const Vec& weights);

// Mean outcome of the k nearest members; ties break by (distance, index).
double predict_knn(const Vec& x, const KnnPredictor& predictor);

// Same selection against caller-owned buffers (no reference copy).
double knn_predict_raw(const Vec& x, const Mat& X, const Vec& y, const Vec& weights, int k);

// Row indices of the k nearest members, ascending by (distance, index).
std::vector<int> knn_neighbor_rows(const Vec& x, const Mat& X, const Vec& weights, int k);

// Linear rule K = a + b*sqrt(N) fitted to (group size, tuned K) pairs.
struct KRule {
    double a = 0.0;
    double b = 1.0;
};

KRule fit_k_rule(const std::vector<std::pair<int, int>>& pairs);

// clamp(round(a + b*sqrt(N)), 1, N).
int apply_k_rule(const KRule& rule, int n);

// CV-minimizing K under MeanAE over the grid (capped at the smallest fold
// training size); ties go to the smaller K.
int tune_k(const TreatmentGroup& group, const Vec& weights, const std::vector<int>& k_grid,
           int folds, std::uint64_t seed);

} // namespace rxp
