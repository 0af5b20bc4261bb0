#pragma once

#include "rxpolicy/common.hpp"

#include <memory>
#include <vector>

namespace rxp {

enum class LinearKind { Ols, Lasso, Huber };

struct LinearBaseline {
    LinearKind kind = LinearKind::Ols;
    Vec beta;
    double hyper = 0.0; // LASSO lambda or Huber delta; 0 for OLS
    bool ridge_jittered = false;
};

// Least squares via the normal equations; a 1e-10 ridge jitter is applied
// (and flagged) when X'X is numerically singular.
LinearBaseline fit_ols(const Mat& X, const Vec& y);

// (1/2N) ||y - X beta||^2 + lambda ||beta||_1 by cyclic coordinate descent.
LinearBaseline fit_lasso(const Mat& X, const Vec& y, double lambda, int max_iters = 100000,
                         double tol = 1e-12);

// Huber M-estimate with threshold delta (raw residual units), solved by
// iteratively reweighted least squares; exits when the gradient norm is
// <= 1e-6.
LinearBaseline fit_huber(const Mat& X, const Vec& y, double delta, int max_iters = 10000);

double predict_linear(const LinearBaseline& model, const Vec& x);

struct CartNode {
    int feature = -1;      // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;    // leaf mean
    int left = -1, right = -1;
};

struct CartModel {
    std::vector<CartNode> nodes;
    int max_depth = 6;
    int min_leaf = 10;

    double predict(const Vec& x) const;
};

// Greedy variance-reduction regression tree with deterministic tie-breaking
// (lowest feature index, then lowest split value). Split candidates are
// midpoints between consecutive distinct sorted values.
CartModel fit_cart(const Mat& X, const Vec& y, int max_depth, int min_leaf);

double predict_cart(const CartModel& model, const Vec& x);

} // namespace rxp
