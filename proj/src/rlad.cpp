#include "rxpolicy/rlad.hpp"

#include "rxpolicy/rng.hpp"

#include <algorithm>
#include <cmath>

namespace rxp {

namespace {

void check_shapes(const Mat& X, const Vec& y, const Vec& beta, double r) {
    if (X.rows() != y.size() || X.cols() != beta.size())
        throw UsageError("rlad: shape mismatch (X is " + std::to_string(X.rows()) + "x" +
                         std::to_string(X.cols()) + ", y has " + std::to_string(y.size()) +
                         ", beta has " + std::to_string(beta.size()) + ")");
    require(r >= 0.0, "rlad: penalty r must be >= 0");
}

double smoothed_objective(const Mat& X, const Vec& y, const Vec& beta, double r, double mu) {
    const Vec res = y - X * beta;
    double lad = 0.0;
    for (int i = 0; i < res.size(); ++i) lad += std::sqrt(res[i] * res[i] + mu * mu);
    lad /= static_cast<double>(res.size());
    return lad + r * std::sqrt(beta.squaredNorm() + 1.0);
}

} // namespace

double rlad_objective(const Mat& X, const Vec& y, const Vec& beta, double r) {
    check_shapes(X, y, beta, r);
    const double n = static_cast<double>(X.rows());
    const double lad = (y - X * beta).lpNorm<1>() / n;
    return lad + r * std::sqrt(beta.squaredNorm() + 1.0);
}

RobustLinearModel fit_rlad(const Mat& X, const Vec& y, double r, const SolverOptions& opts) {
    require(X.rows() >= 1, "rlad: need at least one observation");
    require(opts.tolerance > 0.0, "rlad: tolerance must be > 0");
    require(opts.max_iters >= 1, "rlad: max_iters must be >= 1");
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    Vec beta = Vec::Zero(p);
    check_shapes(X, y, beta, r);

    if (p == 0) {
        RobustLinearModel model;
        model.beta = beta;
        model.r = r;
        model.objective_value = rlad_objective(X, y, beta, r);
        return model;
    }

    const double y_scale = y.cwiseAbs().mean();
    // Continuation schedule: smoothing gap <= mu, so the last stage's mu plus
    // the Newton gap must stay under the requested tolerance.
    const double mu_final = std::max(0.4 * opts.tolerance, 1e-14 * (1.0 + y_scale));
    double mu = std::max(mu_final, 0.25 * (1.0 + y_scale));
    const double inner_final = 0.25 * opts.tolerance;

    int iters_used = 0;
    double last_decrement = std::numeric_limits<double>::infinity();
    const double inv_n = 1.0 / static_cast<double>(n);
    bool out_of_budget = false;

    while (true) {
        const bool last_stage = mu <= mu_final * (1.0 + 1e-12);
        const double inner_tol = last_stage ? inner_final : std::max(0.05 * mu, inner_final);

        while (true) {
            if (iters_used >= opts.max_iters) {
                out_of_budget = true;
                break;
            }
            const Vec res = y - X * beta;
            Vec w(n), curv(n);
            for (int i = 0; i < n; ++i) {
                const double s = std::sqrt(res[i] * res[i] + mu * mu);
                w[i] = res[i] / s;
                curv[i] = (mu * mu) / (s * s * s);
            }
            const double s_pen = std::sqrt(beta.squaredNorm() + 1.0);
            Vec grad = -inv_n * (X.transpose() * w) + (r / s_pen) * beta;

            Mat hess = inv_n * (X.transpose() * curv.asDiagonal() * X);
            hess += (r / s_pen) * (Mat::Identity(p, p) - (beta * beta.transpose()) / (s_pen * s_pen));

            // LDLT with escalating ridge; the Hessian is PSD but can be
            // numerically rank-deficient at tiny mu.
            Vec step;
            double ridge = 0.0;
            for (;;) {
                Mat h = hess;
                if (ridge > 0.0) h += ridge * Mat::Identity(p, p);
                Eigen::LDLT<Mat> ldlt(h);
                step = ldlt.solve(-grad);
                const double dec = -grad.dot(step);
                if (ldlt.info() == Eigen::Success && std::isfinite(dec) && dec >= 0.0) break;
                ridge = ridge == 0.0 ? 1e-12 * (1.0 + hess.trace()) : ridge * 100.0;
                if (ridge > 1e12 * (1.0 + hess.trace())) {
                    step = -grad;
                    break;
                }
            }

            last_decrement = -grad.dot(step);
            if (0.5 * last_decrement <= inner_tol) break;

            // Armijo backtracking.
            const double f0 = smoothed_objective(X, y, beta, r, mu);
            double t = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                const Vec cand = beta + t * step;
                if (smoothed_objective(X, y, cand, r, mu) <= f0 - 1e-4 * t * last_decrement) {
                    beta = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            ++iters_used;
            if (!accepted) break; // flat to machine precision at this mu
        }

        if (last_stage || out_of_budget) break;
        mu = std::max(mu * 0.1, mu_final);
    }

    // Smoothing contributes at most mu to the objective gap; the Newton
    // decrement bounds the remaining optimization gap at the exit iterate.
    const double gap_estimate = mu + 0.5 * last_decrement;
    if (gap_estimate > opts.tolerance)
        throw ConvergenceError("rlad: iteration budget exhausted (gap estimate " +
                                   std::to_string(gap_estimate) + ")",
                               beta, gap_estimate);

    RobustLinearModel model;
    model.beta = std::move(beta);
    model.r = r;
    model.objective_value = rlad_objective(X, y, model.beta, r);
    return model;
}

std::vector<int> cv_fold_assignment(int n, int folds, std::uint64_t seed) {
    require(folds >= 2, "cross-validation needs at least 2 folds");
    require(n >= folds, "cross-validation needs n >= folds");
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        fold[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % folds;
    return fold;
}

double cross_validate_r(const Mat& X, const Vec& y, const std::vector<double>& grid, int folds,
                        std::uint64_t seed, const SolverOptions& opts) {
    require(!grid.empty(), "cross_validate_r: grid must be nonempty");
    const int n = static_cast<int>(X.rows());
    const std::vector<int> fold = cv_fold_assignment(n, folds, seed);

    std::vector<double> sorted_grid = grid;
    std::sort(sorted_grid.begin(), sorted_grid.end());

    double best_r = sorted_grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (double r : sorted_grid) {
        double err_sum = 0.0;
        for (int f = 0; f < folds; ++f) {
            int n_in = 0;
            for (int i = 0; i < n; ++i) n_in += fold[static_cast<std::size_t>(i)] != f;
            Mat Xin(n_in, X.cols());
            Vec yin(n_in);
            int k = 0;
            for (int i = 0; i < n; ++i) {
                if (fold[static_cast<std::size_t>(i)] == f) continue;
                Xin.row(k) = X.row(i);
                yin[k] = y[i];
                ++k;
            }
            const RobustLinearModel model = fit_rlad(Xin, yin, r, opts);
            double abs_err = 0.0;
            int n_out = 0;
            for (int i = 0; i < n; ++i) {
                if (fold[static_cast<std::size_t>(i)] != f) continue;
                abs_err += std::abs(y[i] - X.row(i).dot(model.beta));
                ++n_out;
            }
            err_sum += abs_err / static_cast<double>(n_out);
        }
        const double mean_err = err_sum / static_cast<double>(folds);
        if (mean_err <= best_err) { // ties go to the larger r
            best_err = mean_err;
            best_r = r;
        }
    }
    return best_r;
}

} // namespace rxp
