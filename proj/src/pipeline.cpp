#include "rxpolicy/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace rxp {

namespace {

constexpr std::uint64_t kSeedGroupCv = 0x01;
constexpr std::uint64_t kSeedGroupK = 0x02;
constexpr std::uint64_t kSeedImputation = 0x03;
constexpr std::uint64_t kSeedEnsemble = 0x04;
constexpr std::uint64_t kSeedPrescribe = 0x05;

struct Centered {
    Vec x_mean;
    double y_mean = 0.0;
    Mat X;
    Vec y;
};

Centered center(const Mat& X, const Vec& y) {
    Centered c;
    c.x_mean = X.colwise().mean().transpose();
    c.y_mean = y.mean();
    c.X = X.rowwise() - c.x_mean.transpose();
    c.y = y.array() - c.y_mean;
    return c;
}

// Reduce the fold count for small samples instead of failing; tiny groups
// fall back to a direct choice.
int effective_folds(int n, int folds) { return std::min(folds, std::max(2, n / 2)); }

double safe_cv_r(const Mat& X, const Vec& y, const std::vector<double>& grid, int folds,
                 std::uint64_t seed, const SolverOptions& opts) {
    const int n = static_cast<int>(X.rows());
    if (n < 4 || grid.size() == 1) return grid.front();
    return cross_validate_r(X, y, grid, effective_folds(n, folds), seed, opts);
}

int safe_tune_k(const TreatmentGroup& group, const Vec& weights, const std::vector<int>& grid,
                int folds, std::uint64_t seed) {
    const int n = group.size();
    if (n < 4) return std::max(1, n / 2);
    return tune_k(group, weights, grid, effective_folds(n, folds), seed);
}

double cv_mean_ae(const Mat& X, const Vec& y, int folds, std::uint64_t seed,
                  const std::function<Vec(const Mat&, const Vec&)>& fit_slopes) {
    const int n = static_cast<int>(X.rows());
    const std::vector<int> fold = cv_fold_assignment(n, folds, seed);
    double total = 0.0;
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
        const Centered c = center(Xin, yin);
        const Vec beta = fit_slopes(c.X, c.y);
        double err = 0.0;
        int n_out = 0;
        for (int i = 0; i < n; ++i) {
            if (fold[static_cast<std::size_t>(i)] != f) continue;
            const double pred = (X.row(i).transpose() - c.x_mean).dot(beta) + c.y_mean;
            err += std::abs(y[i] - pred);
            ++n_out;
        }
        total += err / static_cast<double>(n_out);
    }
    return total / static_cast<double>(folds);
}

double select_lasso_lambda(const Mat& Xc, const Vec& yc, const Mat& X, const Vec& y,
                           const TrainOptions& opts, std::uint64_t seed) {
    const double n = static_cast<double>(Xc.rows());
    double lambda_max = 0.0;
    for (int j = 0; j < Xc.cols(); ++j)
        lambda_max = std::max(lambda_max, std::abs(Xc.col(j).dot(yc)) / n);
    if (lambda_max == 0.0) return 0.0;
    if (X.rows() < 4 || opts.lasso_grid.size() == 1) return opts.lasso_grid.front() * lambda_max;

    std::vector<double> grid(opts.lasso_grid);
    std::sort(grid.begin(), grid.end());
    double best = grid.front() * lambda_max;
    double best_err = std::numeric_limits<double>::infinity();
    const int folds = effective_folds(static_cast<int>(X.rows()), opts.folds);
    for (double frac : grid) {
        const double lambda = frac * lambda_max;
        const double err = cv_mean_ae(X, y, folds, seed, [&](const Mat& Xi, const Vec& yi) {
            return fit_lasso(Xi, yi, lambda).beta;
        });
        if (err <= best_err) { // ties toward the stronger penalty
            best_err = err;
            best = lambda;
        }
    }
    return best;
}

int select_cart_depth(const Mat& X, const Vec& y, const TrainOptions& opts, std::uint64_t seed) {
    if (X.rows() < 4 || opts.cart_depth_grid.size() == 1) return opts.cart_depth_grid.front();
    const int folds = effective_folds(static_cast<int>(X.rows()), opts.folds);
    const std::vector<int> fold = cv_fold_assignment(static_cast<int>(X.rows()), folds, seed);

    int best_depth = opts.cart_depth_grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (int depth : opts.cart_depth_grid) {
        double total = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<int> in_rows;
            for (int i = 0; i < static_cast<int>(X.rows()); ++i)
                if (fold[static_cast<std::size_t>(i)] != f) in_rows.push_back(i);
            Mat Xin(static_cast<int>(in_rows.size()), X.cols());
            Vec yin(static_cast<int>(in_rows.size()));
            for (std::size_t i = 0; i < in_rows.size(); ++i) {
                Xin.row(static_cast<int>(i)) = X.row(in_rows[i]);
                yin[static_cast<int>(i)] = y[in_rows[i]];
            }
            const CartModel tree =
                fit_cart(Xin, yin, depth, std::min(opts.cart_min_leaf,
                                                   std::max(1, static_cast<int>(in_rows.size()) / 4)));
            double err = 0.0;
            int n_out = 0;
            for (int i = 0; i < static_cast<int>(X.rows()); ++i) {
                if (fold[static_cast<std::size_t>(i)] != f) continue;
                err += std::abs(y[i] - tree.predict(X.row(i).transpose()));
                ++n_out;
            }
            total += err / static_cast<double>(n_out);
        }
        const double mean_err = total / static_cast<double>(folds);
        if (mean_err < best_err) {
            best_err = mean_err;
            best_depth = depth;
        }
    }
    return best_depth;
}

struct LinearGroupPredictor final : GroupPredictor {
    CenteredLinear model;
    explicit LinearGroupPredictor(CenteredLinear m) : model(std::move(m)) {}
    double predict(const Vec& x) const override { return model.predict(x); }
};

struct KnnGroupPredictor final : GroupPredictor {
    KnnPredictor model;
    explicit KnnGroupPredictor(KnnPredictor m) : model(std::move(m)) {}
    double predict(const Vec& x) const override { return predict_knn(x, model); }
};

struct CartGroupPredictor final : GroupPredictor {
    CartModel model;
    explicit CartGroupPredictor(CartModel m) : model(std::move(m)) {}
    double predict(const Vec& x) const override { return model.predict(x); }
};

CenteredLinear fit_centered(Method method, const Mat& X, const Vec& y, const TrainOptions& opts,
                            std::uint64_t seed) {
    const Centered c = center(X, y);
    CenteredLinear out;
    out.x_mean = c.x_mean;
    out.y_mean = c.y_mean;
    switch (method) {
    case Method::Ols:
    case Method::OlsKnn:
        out.beta = fit_ols(c.X, c.y).beta;
        break;
    case Method::Lasso:
    case Method::LassoKnn: {
        const double lambda = select_lasso_lambda(c.X, c.y, X, y, opts, derive_seed(seed, 0x11));
        out.beta = fit_lasso(c.X, c.y, lambda).beta;
        break;
    }
    case Method::Huber:
    case Method::HuberKnn: {
        const double delta = huber_delta_from_mad(c.X, c.y, opts.huber_k);
        out.beta = fit_huber(c.X, c.y, delta).beta;
        break;
    }
    case Method::Rlad:
    case Method::RladKnn: {
        const double r =
            safe_cv_r(c.X, c.y, opts.r_grid, opts.folds, derive_seed(seed, 0x12), opts.solver);
        out.beta = fit_rlad(c.X, c.y, r, opts.solver).beta;
        break;
    }
    default:
        throw UsageError("fit_centered: not a linear method");
    }
    return out;
}

} // namespace

Method method_from_string(const std::string& name) {
    if (name == "ols") return Method::Ols;
    if (name == "lasso") return Method::Lasso;
    if (name == "huber") return Method::Huber;
    if (name == "rlad") return Method::Rlad;
    if (name == "cart") return Method::Cart;
    if (name == "knn") return Method::Knn;
    if (name == "ols-knn") return Method::OlsKnn;
    if (name == "lasso-knn") return Method::LassoKnn;
    if (name == "huber-knn") return Method::HuberKnn;
    if (name == "rlad-knn") return Method::RladKnn;
    throw UsageError("unknown method '" + name + "'");
}

std::string method_name(Method method) {
    switch (method) {
    case Method::Ols: return "ols";
    case Method::Lasso: return "lasso";
    case Method::Huber: return "huber";
    case Method::Rlad: return "rlad";
    case Method::Cart: return "cart";
    case Method::Knn: return "knn";
    case Method::OlsKnn: return "ols-knn";
    case Method::LassoKnn: return "lasso-knn";
    case Method::HuberKnn: return "huber-knn";
    case Method::RladKnn: return "rlad-knn";
    }
    return "?";
}

std::vector<int> select_group_ks(const std::vector<TreatmentGroup>& groups,
                                 const std::vector<int>& tuned, KRuleMode mode, KRule* rule_out,
                                 bool* rule_valid_out) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t m = 0; m < groups.size(); ++m)
        pairs.emplace_back(groups[m].size(), tuned[m]);

    KRule rule;
    bool valid = false;
    if (pairs.size() >= 2) {
        try {
            rule = fit_k_rule(pairs);
            valid = true;
        } catch (const DataError&) {
            valid = false;
        }
    }
    if (!valid) {
        // Scaled square-root fallback anchored at the first arm.
        rule.a = 0.0;
        rule.b = tuned[0] / std::sqrt(static_cast<double>(std::max(1, pairs[0].first)));
    }
    if (rule_out) *rule_out = rule;
    if (rule_valid_out) *rule_valid_out = valid;

    std::vector<int> ks(tuned);
    if (mode == KRuleMode::SqrtLaw) {
        for (std::size_t m = 0; m < groups.size(); ++m)
            ks[m] = apply_k_rule(rule, groups[m].size());
    }
    return ks;
}

std::vector<Method> parse_methods(const std::string& comma_list) {
    std::vector<Method> out;
    std::stringstream ss(comma_list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::size_t b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const std::size_t e = item.find_last_not_of(" \t");
        out.push_back(method_from_string(item.substr(b, e - b + 1)));
    }
    if (out.empty()) throw UsageError("no methods given");
    return out;
}

CenteredLinear center_and_fit_rlad(const Mat& X, const Vec& y, double r,
                                   const SolverOptions& opts) {
    const Centered c = center(X, y);
    CenteredLinear out;
    out.x_mean = c.x_mean;
    out.y_mean = c.y_mean;
    out.beta = fit_rlad(c.X, c.y, r, opts).beta;
    return out;
}

double huber_delta_from_mad(const Mat& X, const Vec& y, double k) {
    const Vec res = y - X * fit_ols(X, y).beta;
    std::vector<double> abs_dev(static_cast<std::size_t>(res.size()));
    std::vector<double> sorted(res.data(), res.data() + res.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double med = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    for (std::size_t i = 0; i < n; ++i) abs_dev[i] = std::abs(res[static_cast<int>(i)] - med);
    std::sort(abs_dev.begin(), abs_dev.end());
    const double mad = n % 2 == 1 ? abs_dev[n / 2] : 0.5 * (abs_dev[n / 2 - 1] + abs_dev[n / 2]);
    const double scale = mad / 0.6745;
    return k * std::max(scale, 1e-8 * (1.0 + y.cwiseAbs().mean()));
}

Vec ImputationModel::design(const Vec& features, int m) const {
    require(m >= 0 && m < arms, "impute: treatment index out of range");
    require(features.size() == p, "impute: feature length mismatch");
    Vec d = Vec::Zero(p + arms);
    d.head(p) = features;
    d[p + m] = 1.0;
    return d;
}

double ImputationModel::impute(const Vec& features, int m, int k) const {
    return knn_predict_raw(design(features, m), ref_X, ref_y, weights,
                           std::clamp(k, 1, static_cast<int>(ref_X.rows())));
}

MuCEstimate ThresholdEnsemble::estimate(const Vec& x) const {
    MuCEstimate est;
    const int arms = static_cast<int>(fits.size());
    est.mu = Vec(arms);
    est.c = Vec(arms);
    est.a = a;
    est.d = d;
    for (int m = 0; m < arms; ++m) {
        const auto& reps = fits[static_cast<std::size_t>(m)];
        double mean = 0.0;
        for (const auto& fit : reps) mean += fit.predict(x);
        mean /= static_cast<double>(reps.size());
        double ss = 0.0;
        for (const auto& fit : reps) {
            const double dev = fit.predict(x) - mean;
            ss += dev * dev;
        }
        est.mu[m] = mean;
        est.c[m] = std::sqrt(ss / static_cast<double>(reps.size() - 1));
    }
    return est;
}

ThresholdEnsemble fit_threshold_ensemble(const std::vector<TreatmentGroup>& groups,
                                         const std::vector<double>& group_r,
                                         double subsample_frac, int reps,
                                         const SolverOptions& opts, std::uint64_t seed) {
    require(reps >= 2, "threshold ensemble: need at least 2 repetitions");
    require(subsample_frac > 0.0 && subsample_frac < 1.0,
            "threshold ensemble: subsample fraction must lie in (0, 1)");
    ThresholdEnsemble ens;
    ens.d = reps;
    for (std::size_t m = 0; m < groups.size(); ++m) {
        const TreatmentGroup& g = groups[m];
        if (g.size() < 2)
            throw DataError("threshold ensemble: treatment group " + std::to_string(g.treatment) +
                            " has fewer than 2 members");
        const int a = std::clamp(static_cast<int>(std::ceil(subsample_frac * g.size())), 1,
                                 g.size() - 1);
        ens.a = a; // last arm's value is representative; per-arm a is implied by frac
        Rng rng(derive_seed(seed, m));
        std::vector<CenteredLinear> arm_fits;
        arm_fits.reserve(static_cast<std::size_t>(reps));
        for (int i = 0; i < reps; ++i) {
            const std::vector<int> rows = rng.sample_without_replacement(g.size(), a);
            Mat Xs(a, g.X.cols());
            Vec ys(a);
            for (int j = 0; j < a; ++j) {
                Xs.row(j) = g.X.row(rows[static_cast<std::size_t>(j)]);
                ys[j] = g.y[rows[static_cast<std::size_t>(j)]];
            }
            arm_fits.push_back(center_and_fit_rlad(Xs, ys, group_r[m], opts));
        }
        ens.fits.push_back(std::move(arm_fits));
    }
    return ens;
}

Vec MethodModel::predict_all(const Vec& x) const {
    Vec out(static_cast<int>(arms.size()));
    for (std::size_t m = 0; m < arms.size(); ++m) out[static_cast<int>(m)] = arms[m]->predict(x);
    return out;
}

MethodModel fit_method(Method method, const std::vector<TreatmentGroup>& groups,
                       const TrainOptions& opts, std::uint64_t seed) {
    MethodModel model;
    model.method = method;

    switch (method) {
    case Method::Ols:
    case Method::Lasso:
    case Method::Huber:
    case Method::Rlad:
        for (std::size_t m = 0; m < groups.size(); ++m)
            model.arms.push_back(std::make_unique<LinearGroupPredictor>(
                fit_centered(method, groups[m].X, groups[m].y, opts, derive_seed(seed, m))));
        return model;
    case Method::Cart:
        for (std::size_t m = 0; m < groups.size(); ++m) {
            const int depth =
                select_cart_depth(groups[m].X, groups[m].y, opts, derive_seed(seed, m));
            model.arms.push_back(std::make_unique<CartGroupPredictor>(
                fit_cart(groups[m].X, groups[m].y, depth,
                         std::min(opts.cart_min_leaf, std::max(1, groups[m].size() / 4)))));
        }
        return model;
    default:
        break;
    }

    // K-NN family: metric weights per arm, K tuned per arm then smoothed by
    // the sqrt-law rule.
    std::vector<Vec> weights(groups.size());
    for (std::size_t m = 0; m < groups.size(); ++m) {
        if (method == Method::Knn) {
            weights[m] = Vec::Ones(groups[m].X.cols());
        } else {
            Method base = Method::Ols;
            if (method == Method::LassoKnn) base = Method::Lasso;
            else if (method == Method::HuberKnn) base = Method::Huber;
            else if (method == Method::RladKnn) base = Method::Rlad;
            const CenteredLinear lin =
                fit_centered(base, groups[m].X, groups[m].y, opts, derive_seed(seed, m));
            weights[m] = lin.beta.cwiseProduct(lin.beta);
        }
    }
    std::vector<int> tuned(groups.size());
    for (std::size_t m = 0; m < groups.size(); ++m)
        tuned[m] = safe_tune_k(groups[m], weights[m], opts.k_grid, opts.folds,
                               derive_seed(seed, 0x100 + m));
    const std::vector<int> ks = select_group_ks(groups, tuned, opts.k_rule, nullptr, nullptr);
    return make_knn_method_model(method, groups, weights, ks);
}

MethodModel make_knn_method_model(Method method, const std::vector<TreatmentGroup>& groups,
                                  const std::vector<Vec>& weights, const std::vector<int>& ks) {
    MethodModel model;
    model.method = method;
    for (std::size_t m = 0; m < groups.size(); ++m) {
        KnnPredictor pred;
        pred.weights = weights[m];
        pred.X = groups[m].X;
        pred.y = groups[m].y;
        pred.k = ks[m];
        model.arms.push_back(std::make_unique<KnnGroupPredictor>(std::move(pred)));
    }
    return model;
}

std::unique_ptr<GroupPredictor> fit_universal(Method method, const Mat& X, const Vec& y,
                                              const TrainOptions& opts, std::uint64_t seed) {
    switch (method) {
    case Method::Ols:
    case Method::Lasso:
    case Method::Huber:
    case Method::Rlad:
        return std::make_unique<LinearGroupPredictor>(fit_centered(method, X, y, opts, seed));
    case Method::Cart: {
        const int depth = select_cart_depth(X, y, opts, seed);
        return std::make_unique<CartGroupPredictor>(
            fit_cart(X, y, depth, std::min(opts.cart_min_leaf,
                                           std::max(1, static_cast<int>(X.rows()) / 4))));
    }
    default:
        break;
    }

    Vec weights;
    if (method == Method::Knn) {
        weights = Vec::Ones(X.cols());
    } else {
        Method base = Method::Ols;
        if (method == Method::LassoKnn) base = Method::Lasso;
        else if (method == Method::HuberKnn) base = Method::Huber;
        else if (method == Method::RladKnn) base = Method::Rlad;
        const CenteredLinear lin = fit_centered(base, X, y, opts, seed);
        weights = lin.beta.cwiseProduct(lin.beta);
    }
    TreatmentGroup pool;
    pool.treatment = -1;
    pool.X = X;
    pool.y = y;
    const int k = safe_tune_k(pool, weights, opts.k_grid, opts.folds, derive_seed(seed, 0x200));

    KnnPredictor pred;
    pred.weights = std::move(weights);
    pred.X = X;
    pred.y = y;
    pred.k = k;
    return std::make_unique<KnnGroupPredictor>(std::move(pred));
}

void TrainedPipeline::rebuild_derived() {
    train_norm = apply_normalization(train_raw, stats);
    groups = group_by_treatment(train_norm);
    knn.clear();
    for (std::size_t m = 0; m < groups.size(); ++m) {
        KnnPredictor pred;
        pred.weights = group_models[m].knn_weights;
        pred.X = groups[m].X;
        pred.y = groups[m].y;
        pred.k = group_models[m].k;
        knn.push_back(std::move(pred));
    }

    // The imputation reference pool is a deterministic function of the
    // training records, so it is rebuilt rather than persisted.
    const int n = train_norm.n();
    const int p = train_norm.p();
    const int arms = train_norm.num_treatments();
    imputation.p = p;
    imputation.arms = arms;
    imputation.ref_X = Mat(n, p + arms);
    imputation.ref_y = Vec(n);
    imputation.ref_treatment.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const auto& rec = train_norm.records[static_cast<std::size_t>(i)];
        imputation.ref_X.row(i).head(p) = rec.features.transpose();
        imputation.ref_X.row(i).tail(arms).setZero();
        imputation.ref_X(i, p + rec.treatment) = 1.0;
        imputation.ref_y[i] = rec.outcome_next;
        imputation.ref_treatment[static_cast<std::size_t>(i)] = rec.treatment;
    }
}

int TrainedPipeline::imputation_k(int eval_set_size) const {
    const int k = apply_k_rule(krule, std::max(1, eval_set_size));
    return std::clamp(k, 1, static_cast<int>(imputation.ref_X.rows()));
}

namespace {

// Mean expected improvement of the randomized freeze policy, scored with
// imputed counterfactuals.
double xi_objective(const std::vector<PatientRecord>& records, const Mat& y_hat,
                    const Mat& imputed, const std::vector<MuCEstimate>& ests, double xi_eff,
                    double eps_bar) {
    const int n = static_cast<int>(y_hat.rows());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& rec = records[static_cast<std::size_t>(i)];
        const Vec preds = y_hat.row(i).transpose();
        const PolicyDistribution dist = policy_probs(preds, xi_eff);
        const double expected = expected_predicted_outcome(dist, preds);
        const double t =
            threshold_randomized(rec.outcome_current, ests[static_cast<std::size_t>(i)].mu,
                                 ests[static_cast<std::size_t>(i)].c, eps_bar);
        double value;
        if (expected > rec.outcome_current - t) {
            value = rec.outcome_next - rec.outcome_current;
        } else {
            value = dist.probs.dot(imputed.row(i).transpose()) - rec.outcome_current;
        }
        total += value;
    }
    return total / static_cast<double>(n);
}

} // namespace

XiChoice tune_xi(const std::vector<PatientRecord>& records, const Mat& y_hat, const Mat& imputed,
                 const std::vector<MuCEstimate>& ests, const std::vector<double>& grid,
                 double eps_bar) {
    require(!grid.empty(), "tune_xi: empty grid");
    XiChoice choice;
    const double mean = y_hat.mean();
    const double scale = std::sqrt((y_hat.array() - mean).square().mean());
    choice.scale = scale > 1e-12 ? scale : 1.0;

    double best_value = std::numeric_limits<double>::infinity();
    for (double xi : grid) {
        const double value = xi_objective(records, y_hat, imputed, ests, xi / choice.scale, eps_bar);
        if (value < best_value) {
            best_value = value;
            choice.xi = xi;
        }
    }
    return choice;
}

ImputationModel fit_imputation_model(const Dataset& train_norm, const TrainOptions& opts,
                                     std::uint64_t seed) {
    const int n = train_norm.n();
    const int p = train_norm.p();
    const int arms = train_norm.num_treatments();
    Mat X(n, p + arms);
    Vec y(n);
    std::vector<int> treat(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& rec = train_norm.records[static_cast<std::size_t>(i)];
        X.row(i).head(p) = rec.features.transpose();
        X.row(i).tail(arms).setZero();
        X(i, p + rec.treatment) = 1.0;
        y[i] = rec.outcome_next;
        treat[static_cast<std::size_t>(i)] = rec.treatment;
    }
    const Centered c = center(X, y);
    const double r = safe_cv_r(c.X, c.y, opts.r_grid, opts.folds, seed, opts.solver);
    const RobustLinearModel fitted = fit_rlad(c.X, c.y, r, opts.solver);

    ImputationModel model;
    model.linear.x_mean = c.x_mean;
    model.linear.y_mean = c.y_mean;
    model.linear.beta = fitted.beta;
    model.weights = fitted.beta.cwiseProduct(fitted.beta);
    model.ref_X = std::move(X);
    model.ref_y = std::move(y);
    model.ref_treatment = std::move(treat);
    model.p = p;
    model.arms = arms;
    model.r = r;
    return model;
}

TrainedPipeline fit_pipeline(const Dataset& raw_train, const TrainOptions& opts,
                             std::uint64_t seed) {
    TrainedPipeline pipe;
    pipe.train_raw = raw_train;
    pipe.opts = opts;
    pipe.seed = seed;
    pipe.stats = compute_normalization(raw_train);
    pipe.train_norm = apply_normalization(raw_train, pipe.stats);
    pipe.groups = group_by_treatment(pipe.train_norm);

    const auto empty = empty_groups(pipe.groups);
    if (!empty.empty())
        throw DataError("treatment '" +
                        raw_train.treatment_names[static_cast<std::size_t>(empty.front())] +
                        "' has no training members");

    const int arms = static_cast<int>(pipe.groups.size());
    std::vector<double> group_rs(static_cast<std::size_t>(arms));
    std::vector<int> tuned(static_cast<std::size_t>(arms));
    for (int m = 0; m < arms; ++m) {
        const TreatmentGroup& g = pipe.groups[static_cast<std::size_t>(m)];
        const Centered c = center(g.X, g.y);
        const double r = safe_cv_r(c.X, c.y, opts.r_grid, opts.folds,
                                   derive_seed(seed, kSeedGroupCv, static_cast<std::uint64_t>(m)),
                                   opts.solver);
        const RobustLinearModel fitted = fit_rlad(c.X, c.y, r, opts.solver);

        GroupModel gm;
        gm.linear.x_mean = c.x_mean;
        gm.linear.y_mean = c.y_mean;
        gm.linear.beta = fitted.beta;
        gm.r = r;
        gm.objective = fitted.objective_value;
        gm.knn_weights = fitted.beta.cwiseProduct(fitted.beta);
        gm.tuned_k = safe_tune_k(g, gm.knn_weights, opts.k_grid, opts.folds,
                                 derive_seed(seed, kSeedGroupK, static_cast<std::uint64_t>(m)));
        group_rs[static_cast<std::size_t>(m)] = r;
        tuned[static_cast<std::size_t>(m)] = gm.tuned_k;
        pipe.group_models.push_back(std::move(gm));
    }

    const std::vector<int> ks =
        select_group_ks(pipe.groups, tuned, opts.k_rule, &pipe.krule, &pipe.krule_valid);
    for (int m = 0; m < arms; ++m) pipe.group_models[static_cast<std::size_t>(m)].k = ks[static_cast<std::size_t>(m)];

    pipe.imputation =
        fit_imputation_model(pipe.train_norm, opts, derive_seed(seed, kSeedImputation));

    pipe.ensemble =
        fit_threshold_ensemble(pipe.groups, group_rs, opts.subsample_frac, opts.subsample_reps,
                               opts.solver, derive_seed(seed, kSeedEnsemble));

    pipe.rebuild_derived();

    // Tune the policy exponent on the training set: predictions, imputed
    // counterfactuals, and (mu, C) estimates are all cached per record.
    {
        const int n = pipe.train_norm.n();
        Mat y_hat(n, arms), imputed(n, arms);
        std::vector<MuCEstimate> ests;
        ests.reserve(static_cast<std::size_t>(n));
        const int k_imp = pipe.imputation_k(n);
        for (int i = 0; i < n; ++i) {
            const auto& rec = pipe.train_norm.records[static_cast<std::size_t>(i)];
            for (int m = 0; m < arms; ++m) {
                y_hat(i, m) = predict_knn(rec.features, pipe.knn[static_cast<std::size_t>(m)]);
                imputed(i, m) = m == rec.treatment
                                    ? rec.outcome_next
                                    : pipe.imputation.impute(rec.features, m, k_imp);
            }
            ests.push_back(pipe.ensemble.estimate(rec.features));
        }
        const XiChoice choice =
            tune_xi(pipe.train_norm.records, y_hat, imputed, ests, opts.xi_grid, opts.eps_bar);
        pipe.xi = choice.xi;
        pipe.xi_scale = choice.scale;
    }
    return pipe;
}

std::vector<PrescriptionRow> prescribe_dataset(const TrainedPipeline& pipeline,
                                               const Dataset& raw_input, PolicyMode mode,
                                               std::optional<double> xi_override,
                                               std::optional<double> eps_override,
                                               std::uint64_t seed) {
    if (raw_input.p() != pipeline.train_raw.p())
        throw DataError("prescribe: input has " + std::to_string(raw_input.p()) +
                        " features, model expects " + std::to_string(pipeline.train_raw.p()));

    // Remap input treatment labels onto the model's dense indices.
    std::unordered_map<std::string, int> label_to_index;
    for (std::size_t m = 0; m < pipeline.train_raw.treatment_names.size(); ++m)
        label_to_index[pipeline.train_raw.treatment_names[m]] = static_cast<int>(m);
    std::vector<int> remap(raw_input.treatment_names.size());
    for (std::size_t t = 0; t < raw_input.treatment_names.size(); ++t) {
        const auto it = label_to_index.find(raw_input.treatment_names[t]);
        if (it == label_to_index.end())
            throw DataError("prescribe: unknown treatment label '" +
                            raw_input.treatment_names[t] + "'");
        remap[t] = it->second;
    }

    PolicyConfig cfg;
    cfg.mode = mode;
    cfg.xi = xi_override.value_or(pipeline.xi) / pipeline.xi_scale;
    const double eps_bar = eps_override.value_or(pipeline.opts.eps_bar);

    std::vector<PrescriptionRow> rows;
    rows.reserve(raw_input.records.size());
    for (std::size_t i = 0; i < raw_input.records.size(); ++i) {
        const auto& rec = raw_input.records[i];
        const Vec x = (rec.features - pipeline.stats.mean).cwiseQuotient(pipeline.stats.std);
        Vec y_hat(static_cast<int>(pipeline.knn.size()));
        for (std::size_t m = 0; m < pipeline.knn.size(); ++m)
            y_hat[static_cast<int>(m)] = predict_knn(x, pipeline.knn[m]);
        const MuCEstimate est = pipeline.ensemble.estimate(x);
        Rng rng(derive_seed(seed, kSeedPrescribe, static_cast<std::uint64_t>(i)));
        const FreezeDecision decision =
            prescribe_from_predictions(y_hat, rec.outcome_current,
                                       remap[static_cast<std::size_t>(rec.treatment)], cfg, est,
                                       eps_bar, rng);
        rows.push_back({rec.id, decision.probs, decision.treatment, decision.frozen,
                        decision.threshold});
    }
    return rows;
}

void write_prescriptions_csv(const std::vector<PrescriptionRow>& rows,
                             const std::vector<std::string>& treatment_labels,
                             const std::string& path) {
    std::ostringstream out;
    out << "id";
    for (const auto& label : treatment_labels) out << ",p_" << label;
    out << ",chosen,frozen,threshold\n";
    char buf[64];
    for (const auto& row : rows) {
        out << row.id;
        for (int m = 0; m < row.probs.size(); ++m) {
            std::snprintf(buf, sizeof(buf), "%.17g", row.probs[m]);
            out << ',' << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", row.threshold);
        out << ',' << treatment_labels[static_cast<std::size_t>(row.treatment)] << ','
            << (row.frozen ? 1 : 0) << ',' << buf << '\n';
    }
    write_file_atomic(path, out.str());
}

} // namespace rxp
