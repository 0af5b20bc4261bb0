#include "rxpolicy/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rxp {

namespace {

void check_xy(const Mat& X, const Vec& y) {
    if (X.rows() != y.size())
        throw UsageError("baseline fit: X has " + std::to_string(X.rows()) + " rows but y has " +
                         std::to_string(y.size()));
}

} // namespace

LinearBaseline fit_ols(const Mat& X, const Vec& y) {
    check_xy(X, y);
    const Mat gram = X.transpose() * X;
    const Vec rhs = X.transpose() * y;

    LinearBaseline model;
    model.kind = LinearKind::Ols;

    Eigen::LDLT<Mat> ldlt(gram);
    Vec beta = ldlt.solve(rhs);
    const double resid = (gram * beta - rhs).norm();
    const Vec pivots = ldlt.vectorD();
    const bool singular =
        X.cols() > 0 && pivots.minCoeff() < 1e-12 * std::max(1.0, pivots.maxCoeff());
    if (ldlt.info() != Eigen::Success || !beta.allFinite() || singular ||
        resid > 1e-8 * (1.0 + rhs.norm())) {
        const double jitter = 1e-10 * (1.0 + gram.trace());
        Eigen::LDLT<Mat> ldlt2(gram + jitter * Mat::Identity(X.cols(), X.cols()));
        beta = ldlt2.solve(rhs);
        if (ldlt2.info() != Eigen::Success || !beta.allFinite())
            throw DataError("fit_ols: singular design matrix, ridge jitter failed");
        model.ridge_jittered = true;
    }
    model.beta = std::move(beta);
    return model;
}

LinearBaseline fit_lasso(const Mat& X, const Vec& y, double lambda, int max_iters, double tol) {
    check_xy(X, y);
    require(lambda >= 0.0, "fit_lasso: lambda must be >= 0");
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    const double inv_n = 1.0 / static_cast<double>(n);

    Vec col_sq(p);
    for (int j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm() * inv_n;

    Vec beta = Vec::Zero(p);
    Vec residual = y;
    const double y_scale = 1.0 + y.cwiseAbs().mean();

    for (int it = 0; it < max_iters; ++it) {
        double max_change = 0.0;
        for (int j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            const double old = beta[j];
            const double rho = X.col(j).dot(residual) * inv_n + col_sq[j] * old;
            const double shrunk = std::abs(rho) <= lambda
                                      ? 0.0
                                      : (rho - std::copysign(lambda, rho)) / col_sq[j];
            if (shrunk != old) {
                residual += X.col(j) * (old - shrunk);
                beta[j] = shrunk;
                max_change = std::max(max_change, std::abs(shrunk - old));
            }
        }
        if (max_change <= tol * y_scale) {
            LinearBaseline model;
            model.kind = LinearKind::Lasso;
            model.beta = std::move(beta);
            model.hyper = lambda;
            return model;
        }
    }
    throw ConvergenceError("fit_lasso: coordinate descent did not converge", beta, -1.0);
}

LinearBaseline fit_huber(const Mat& X, const Vec& y, double delta, int max_iters) {
    check_xy(X, y);
    require(delta > 0.0, "fit_huber: delta must be > 0");
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());

    Vec beta = fit_ols(X, y).beta;
    const double grad_tol = 1e-6;

    for (int it = 0; it < max_iters; ++it) {
        const Vec res = y - X * beta;

        // psi(t) = t on [-delta, delta], delta*sign(t) outside.
        Vec psi(n), w(n);
        for (int i = 0; i < n; ++i) {
            const double a = std::abs(res[i]);
            psi[i] = a <= delta ? res[i] : std::copysign(delta, res[i]);
            w[i] = a <= delta ? 1.0 : delta / a;
        }
        if ((X.transpose() * psi).norm() <= grad_tol) {
            LinearBaseline model;
            model.kind = LinearKind::Huber;
            model.beta = std::move(beta);
            model.hyper = delta;
            return model;
        }

        const Mat wx = w.asDiagonal() * X;
        Eigen::LDLT<Mat> ldlt(X.transpose() * wx +
                              1e-12 * (1.0 + w.sum()) * Mat::Identity(p, p));
        const Vec next = ldlt.solve(X.transpose() * w.cwiseProduct(y));
        if (!next.allFinite()) break;
        beta = next;
    }
    throw ConvergenceError("fit_huber: IRLS did not reach gradient tolerance", beta, -1.0);
}

double predict_linear(const LinearBaseline& model, const Vec& x) {
    if (x.size() != model.beta.size())
        throw UsageError("predict_linear: feature length mismatch");
    return model.beta.dot(x);
}

namespace {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity(); // weighted SSE after split
};

// Best (feature, threshold) by residual sum of squares; ties break toward
// the lowest feature index, then the lowest threshold (scan order).
SplitChoice best_split(const Mat& X, const Vec& y, const std::vector<int>& rows, int min_leaf) {
    SplitChoice best;
    const int n = static_cast<int>(rows.size());
    if (n < 2 * min_leaf) return best;

    // Splits must strictly reduce the parent SSE; constant targets stay leaves.
    double parent_sum = 0.0, parent_sq = 0.0;
    for (int r : rows) {
        parent_sum += y[r];
        parent_sq += y[r] * y[r];
    }
    const double parent_sse = parent_sq - parent_sum * parent_sum / n;
    best.score = parent_sse - 1e-12 * (1.0 + std::abs(parent_sse));

    std::vector<int> order(rows.size());
    for (int f = 0; f < X.cols(); ++f) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return X(rows[static_cast<std::size_t>(a)], f) < X(rows[static_cast<std::size_t>(b)], f);
        });

        double left_sum = 0.0, left_sq = 0.0;
        double right_sum = 0.0, right_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = y[rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]];
            right_sum += v;
            right_sq += v * v;
        }

        for (int i = 0; i + 1 < n; ++i) {
            const int row = rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
            const double v = y[row];
            left_sum += v;
            left_sq += v * v;
            right_sum -= v;
            right_sq -= v * v;

            const double xv = X(row, f);
            const double xnext =
                X(rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i + 1)])], f);
            if (xv == xnext) continue;
            const int nl = i + 1, nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;

            const double sse = (left_sq - left_sum * left_sum / nl) +
                               (right_sq - right_sum * right_sum / nr);
            if (sse < best.score - 1e-12 * (1.0 + std::abs(best.score))) {
                best.found = true;
                best.feature = f;
                best.threshold = 0.5 * (xv + xnext);
                best.score = sse;
            }
        }
    }
    return best;
}

int build_node(CartModel& model, const Mat& X, const Vec& y, const std::vector<int>& rows,
               int depth) {
    const int idx = static_cast<int>(model.nodes.size());
    model.nodes.push_back({});

    double mean = 0.0;
    for (int r : rows) mean += y[r];
    mean /= static_cast<double>(rows.size());
    model.nodes[static_cast<std::size_t>(idx)].value = mean;

    if (depth >= model.max_depth) return idx;
    const SplitChoice choice = best_split(X, y, rows, model.min_leaf);
    if (!choice.found) return idx;

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
        if (X(r, choice.feature) <= choice.threshold) left_rows.push_back(r);
        else right_rows.push_back(r);
    }

    model.nodes[static_cast<std::size_t>(idx)].feature = choice.feature;
    model.nodes[static_cast<std::size_t>(idx)].threshold = choice.threshold;
    const int left = build_node(model, X, y, left_rows, depth + 1);
    model.nodes[static_cast<std::size_t>(idx)].left = left;
    const int right = build_node(model, X, y, right_rows, depth + 1);
    model.nodes[static_cast<std::size_t>(idx)].right = right;
    return idx;
}

} // namespace

CartModel fit_cart(const Mat& X, const Vec& y, int max_depth, int min_leaf) {
    check_xy(X, y);
    require(max_depth >= 1, "fit_cart: max_depth must be >= 1");
    require(min_leaf >= 1, "fit_cart: min_leaf must be >= 1");
    if (X.rows() == 0) throw DataError("fit_cart: empty training set");

    CartModel model;
    model.max_depth = max_depth;
    model.min_leaf = min_leaf;
    std::vector<int> rows(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), 0);
    build_node(model, X, y, rows, 0);
    return model;
}

double CartModel::predict(const Vec& x) const {
    int idx = 0;
    while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
        const CartNode& node = nodes[static_cast<std::size_t>(idx)];
        idx = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(idx)].value;
}

double predict_cart(const CartModel& model, const Vec& x) { return model.predict(x); }

} // namespace rxp
