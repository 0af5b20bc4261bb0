#pragma once

#include "rxpolicy/common.hpp"

#include <cstdint>
#include <vector>

namespace rxp {

struct SolverOptions {
    double tolerance = 1e-8; // absolute objective gap at exit
    int max_iters = 10000;   // Newton iterations across all continuation stages
};

struct RobustLinearModel {
    Vec beta;
    double r = 0.0;
    double objective_value = 0.0;
    int group = -1;
};

// (1/N) sum_i |y_i - x_i'beta| + r * sqrt(||beta||^2 + 1).
double rlad_objective(const Mat& X, const Vec& y, const Vec& beta, double r);

// Minimizes the objective above. The absolute-value term is smoothed as
// sqrt(t^2 + mu^2) and driven to the requested tolerance by damped Newton
// steps under a decreasing-mu continuation schedule; the smoothing gap is
// bounded by mu, so the final objective is within opts.tolerance of the
// global minimum of this convex problem. Throws ConvergenceError (carrying
// the best iterate and a gap estimate) if the iteration budget runs out.
RobustLinearModel fit_rlad(const Mat& X, const Vec& y, double r,
                           const SolverOptions& opts = {});

// K-fold cross-validation of the penalty: returns the grid value minimizing
// mean out-of-fold MeanAE, ties broken toward larger r.
double cross_validate_r(const Mat& X, const Vec& y, const std::vector<double>& grid, int folds,
                        std::uint64_t seed, const SolverOptions& opts = {});

// Balanced fold assignment shared by every CV harness in the library.
std::vector<int> cv_fold_assignment(int n, int folds, std::uint64_t seed);

} // namespace rxp
