#include "rxpolicy/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace rxp {

namespace {

constexpr std::uint64_t kSeedSplit = 0x10;
constexpr std::uint64_t kSeedEnsemble = 0x11;
constexpr std::uint64_t kSeedImputation = 0x12;
constexpr std::uint64_t kSeedRladCv = 0x13;
constexpr std::uint64_t kSeedRladK = 0x14;
constexpr std::uint64_t kSeedFit = 0x15;
constexpr std::uint64_t kSeedSample = 0x16;

struct RepAccumulator {
    std::vector<double> true_means;
    std::vector<double> imputed_means;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// Everything one repetition fits once and every method shares.
struct RepContext {
    Dataset train_norm;
    Dataset test_norm;
    std::vector<TreatmentGroup> groups;
    std::vector<double> group_rs;
    std::vector<Vec> rlad_weights;
    std::vector<int> rlad_tuned_k;
    KRule krule;
    ThresholdEnsemble ensemble;
    ImputationModel imputation;
    int k_imp_train = 1;
    int k_imp_test = 1;
    Mat imputed_train; // n_train x M
    Mat imputed_test;  // n_test x M
    std::vector<MuCEstimate> train_ests;
    std::vector<MuCEstimate> test_ests;
};

RepContext build_rep_context(const Dataset& train_raw, const Dataset& test_raw,
                             const TrainOptions& opts, std::uint64_t rep_seed) {
    RepContext ctx;
    const NormalizationStats stats = compute_normalization(train_raw);
    ctx.train_norm = apply_normalization(train_raw, stats);
    ctx.test_norm = apply_normalization(test_raw, stats);
    ctx.groups = group_by_treatment(ctx.train_norm);
    const auto empty = empty_groups(ctx.groups);
    if (!empty.empty())
        throw DataError("evaluate: treatment '" +
                        train_raw.treatment_names[static_cast<std::size_t>(empty.front())] +
                        "' has no members in this repetition's training split");

    const int arms = static_cast<int>(ctx.groups.size());
    ctx.group_rs.resize(static_cast<std::size_t>(arms));
    ctx.rlad_weights.resize(static_cast<std::size_t>(arms));
    ctx.rlad_tuned_k.resize(static_cast<std::size_t>(arms));
    for (int m = 0; m < arms; ++m) {
        const TreatmentGroup& g = ctx.groups[static_cast<std::size_t>(m)];
        const CenteredLinear lin = [&] {
            Mat Xc = g.X.rowwise() - g.X.colwise().mean();
            Vec yc = g.y.array() - g.y.mean();
            const double r =
                cross_validate_r(Xc, yc, opts.r_grid,
                                 std::min(opts.folds, std::max(2, g.size() / 2)),
                                 derive_seed(rep_seed, kSeedRladCv, static_cast<std::uint64_t>(m)),
                                 opts.solver);
            ctx.group_rs[static_cast<std::size_t>(m)] = r;
            return center_and_fit_rlad(g.X, g.y, r, opts.solver);
        }();
        ctx.rlad_weights[static_cast<std::size_t>(m)] = lin.beta.cwiseProduct(lin.beta);
        ctx.rlad_tuned_k[static_cast<std::size_t>(m)] =
            tune_k(g, ctx.rlad_weights[static_cast<std::size_t>(m)], opts.k_grid,
                   std::min(opts.folds, std::max(2, g.size() / 2)),
                   derive_seed(rep_seed, kSeedRladK, static_cast<std::uint64_t>(m)));
    }
    select_group_ks(ctx.groups, ctx.rlad_tuned_k, opts.k_rule, &ctx.krule, nullptr);

    ctx.ensemble =
        fit_threshold_ensemble(ctx.groups, ctx.group_rs, opts.subsample_frac, opts.subsample_reps,
                               opts.solver, derive_seed(rep_seed, kSeedEnsemble));
    ctx.imputation =
        fit_imputation_model(ctx.train_norm, opts, derive_seed(rep_seed, kSeedImputation));

    auto clamp_k = [&](int k) {
        return std::clamp(k, 1, static_cast<int>(ctx.imputation.ref_X.rows()));
    };
    ctx.k_imp_train = clamp_k(apply_k_rule(ctx.krule, ctx.train_norm.n()));
    ctx.k_imp_test = clamp_k(apply_k_rule(ctx.krule, ctx.test_norm.n()));

    const int n_train = ctx.train_norm.n();
    ctx.imputed_train = Mat(n_train, arms);
    ctx.train_ests.reserve(static_cast<std::size_t>(n_train));
    for (int i = 0; i < n_train; ++i) {
        const auto& rec = ctx.train_norm.records[static_cast<std::size_t>(i)];
        for (int m = 0; m < arms; ++m)
            ctx.imputed_train(i, m) = m == rec.treatment
                                          ? rec.outcome_next
                                          : ctx.imputation.impute(rec.features, m, ctx.k_imp_train);
        ctx.train_ests.push_back(ctx.ensemble.estimate(rec.features));
    }

    const int n_test = ctx.test_norm.n();
    ctx.imputed_test = Mat(n_test, arms);
    ctx.test_ests.reserve(static_cast<std::size_t>(n_test));
    for (int i = 0; i < n_test; ++i) {
        const auto& rec = ctx.test_norm.records[static_cast<std::size_t>(i)];
        for (int m = 0; m < arms; ++m)
            ctx.imputed_test(i, m) = m == rec.treatment
                                         ? rec.outcome_next
                                         : ctx.imputation.impute(rec.features, m, ctx.k_imp_test);
        ctx.test_ests.push_back(ctx.ensemble.estimate(rec.features));
    }
    return ctx;
}

// Ground-truth outcome for (record, arm): recorded when factual, oracle
// lookup otherwise.
double true_score(const OracleTable& oracle, const PatientRecord& rec, int arm) {
    if (arm == rec.treatment) return rec.outcome_next;
    const auto it = oracle.outcomes.find(rec.id);
    if (it == oracle.outcomes.end())
        throw DataError("oracle table is missing record '" + rec.id + "'");
    const double v = it->second[arm];
    if (std::isnan(v))
        throw DataError("oracle table is missing arm " + std::to_string(arm) + " for record '" +
                        rec.id + "'");
    return v;
}

int modal_treatment(const std::vector<int>& counts) {
    int best = 0;
    for (int m = 1; m < static_cast<int>(counts.size()); ++m)
        if (counts[static_cast<std::size_t>(m)] > counts[static_cast<std::size_t>(best)]) best = m;
    return best;
}

} // namespace

ImprovementReport evaluate_policies(const Dataset& train, const Dataset& test,
                                    const EvalOptions& opts, const OracleTable* oracle) {
    if (train.records.empty() || test.records.empty())
        throw DataError("evaluate: train and test must be nonempty");
    require(opts.reps >= 1, "evaluate: reps must be >= 1");
    require(!opts.methods.empty(), "evaluate: no methods selected");

    const int arms = train.num_treatments();

    // Pooled records for per-repetition re-splits.
    Dataset pool = train;
    for (const auto& rec : test.records) pool.records.push_back(rec);
    const double train_frac =
        static_cast<double>(train.n()) / static_cast<double>(train.n() + test.n());

    // Row layout: methods x {deterministic, randomized}, then the two
    // model-free baselines.
    const int method_rows = static_cast<int>(opts.methods.size()) * 2;
    std::vector<RepAccumulator> acc(static_cast<std::size_t>(method_rows) + 2);

    for (int rep = 0; rep < opts.reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(opts.seed, 0xe7a1, static_cast<std::uint64_t>(rep));

        Dataset rep_train = train, rep_test = test;
        if (opts.resplit) {
            auto parts = split(pool, train_frac, derive_seed(rep_seed, kSeedSplit));
            rep_train = std::move(parts.first);
            rep_test = std::move(parts.second);
        }
        const RepContext ctx = build_rep_context(rep_train, rep_test, opts.train, rep_seed);
        const int n_test = ctx.test_norm.n();

        for (std::size_t mi = 0; mi < opts.methods.size(); ++mi) {
            const Method method = opts.methods[mi];
            MethodModel model;
            if (method == Method::RladKnn) {
                const std::vector<int> ks =
                    select_group_ks(ctx.groups, ctx.rlad_tuned_k, opts.train.k_rule, nullptr,
                                    nullptr);
                model = make_knn_method_model(method, ctx.groups, ctx.rlad_weights, ks);
            } else {
                model = fit_method(method, ctx.groups, opts.train,
                                   derive_seed(rep_seed, kSeedFit, mi));
            }

            // Method predictions cached for xi tuning and test decisions.
            Mat train_hat(ctx.train_norm.n(), arms);
            for (int i = 0; i < ctx.train_norm.n(); ++i)
                train_hat.row(i) =
                    model.predict_all(ctx.train_norm.records[static_cast<std::size_t>(i)].features)
                        .transpose();
            Mat test_hat(n_test, arms);
            for (int i = 0; i < n_test; ++i)
                test_hat.row(i) =
                    model.predict_all(ctx.test_norm.records[static_cast<std::size_t>(i)].features)
                        .transpose();

            const XiChoice xi = tune_xi(ctx.train_norm.records, train_hat, ctx.imputed_train,
                                        ctx.train_ests, opts.train.xi_grid, opts.train.eps_bar);

            for (int mode_i = 0; mode_i < 2; ++mode_i) {
                const PolicyMode mode =
                    mode_i == 0 ? PolicyMode::Deterministic : PolicyMode::Randomized;
                PolicyConfig cfg;
                cfg.mode = mode;
                cfg.xi = xi.xi / xi.scale;

                double sum_true = 0.0, sum_imp = 0.0;
                for (int i = 0; i < n_test; ++i) {
                    const auto& rec = ctx.test_norm.records[static_cast<std::size_t>(i)];
                    Rng rng(derive_seed(rep_seed, kSeedSample,
                                        (mi * 2 + static_cast<std::size_t>(mode_i)) * 1000003 +
                                            static_cast<std::size_t>(i)));
                    const FreezeDecision decision = prescribe_from_predictions(
                        test_hat.row(i).transpose(), rec.outcome_current, rec.treatment, cfg,
                        ctx.test_ests[static_cast<std::size_t>(i)], opts.train.eps_bar, rng);
                    const int arm = decision.treatment;
                    sum_imp += ctx.imputed_test(i, arm) - rec.outcome_current;
                    sum_true += oracle ? true_score(*oracle, rec, arm) - rec.outcome_current
                                       : ctx.imputed_test(i, arm) - rec.outcome_current;
                }
                auto& slot = acc[mi * 2 + static_cast<std::size_t>(mode_i)];
                slot.true_means.push_back(sum_true / n_test);
                slot.imputed_means.push_back(sum_imp / n_test);
            }
        }

        // Current prescription: always continue m_c; the recorded outcome is
        // the score under both scorings.
        {
            double sum = 0.0;
            for (const auto& rec : ctx.test_norm.records)
                sum += rec.outcome_next - rec.outcome_current;
            auto& slot = acc[static_cast<std::size_t>(method_rows)];
            slot.true_means.push_back(sum / n_test);
            slot.imputed_means.push_back(sum / n_test);
        }

        // Standard of care: population-practice proxy.
        {
            std::vector<int> global_counts(static_cast<std::size_t>(arms), 0);
            for (const auto& rec : ctx.train_norm.records)
                ++global_counts[static_cast<std::size_t>(rec.treatment)];
            const int global_mode = modal_treatment(global_counts);

            double sum_true = 0.0, sum_imp = 0.0;
            for (int i = 0; i < n_test; ++i) {
                const auto& rec = ctx.test_norm.records[static_cast<std::size_t>(i)];
                int arm = global_mode;
                if (opts.soc == SocMode::ModalKnn) {
                    const std::vector<int> rows = knn_neighbor_rows(
                        ctx.imputation.design(rec.features, rec.treatment), ctx.imputation.ref_X,
                        ctx.imputation.weights, ctx.k_imp_test);
                    std::vector<int> counts(static_cast<std::size_t>(arms), 0);
                    for (int row : rows)
                        ++counts[static_cast<std::size_t>(
                            ctx.imputation.ref_treatment[static_cast<std::size_t>(row)])];
                    arm = modal_treatment(counts);
                }
                sum_imp += ctx.imputed_test(i, arm) - rec.outcome_current;
                sum_true += oracle ? true_score(*oracle, rec, arm) - rec.outcome_current
                                   : ctx.imputed_test(i, arm) - rec.outcome_current;
            }
            auto& slot = acc[static_cast<std::size_t>(method_rows) + 1];
            slot.true_means.push_back(sum_true / n_test);
            slot.imputed_means.push_back(sum_imp / n_test);
        }
    }

    ImprovementReport report;
    report.oracle_scored = oracle != nullptr;
    for (std::size_t mi = 0; mi < opts.methods.size(); ++mi) {
        for (int mode_i = 0; mode_i < 2; ++mode_i) {
            const auto& slot = acc[mi * 2 + static_cast<std::size_t>(mode_i)];
            ImprovementRow row;
            row.method = method_name(opts.methods[mi]);
            row.policy_mode = mode_i == 0 ? "deterministic" : "randomized";
            row.mean = mean_of(slot.true_means);
            row.stddev = sample_std(slot.true_means);
            row.mean_imputed = mean_of(slot.imputed_means);
            row.std_imputed = sample_std(slot.imputed_means);
            row.reps = opts.reps;
            report.rows.push_back(std::move(row));
        }
    }
    const char* labels[2] = {"current-prescription", "standard-of-care"};
    for (int b = 0; b < 2; ++b) {
        const auto& slot = acc[static_cast<std::size_t>(method_rows + b)];
        ImprovementRow row;
        row.method = labels[b];
        row.policy_mode = "none";
        row.mean = mean_of(slot.true_means);
        row.stddev = sample_std(slot.true_means);
        row.mean_imputed = mean_of(slot.imputed_means);
        row.std_imputed = sample_std(slot.imputed_means);
        row.reps = opts.reps;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string ImprovementReport::to_table() const {
    std::ostringstream out;
    std::size_t width = 20;
    for (const auto& row : rows) width = std::max(width, row.method.size() + 2);

    out << std::string(width, ' ').replace(0, 6, "method") << "  policy         "
        << (oracle_scored ? "true improvement      imputed improvement" : "improvement") << '\n';
    for (const auto& row : rows) {
        std::string name = row.method;
        name.resize(width, ' ');
        std::string mode = row.policy_mode;
        mode.resize(13, ' ');
        out << name << "  " << mode << "  " << fmt4(row.mean) << " (" << fmt4(row.stddev) << ")";
        if (oracle_scored)
            out << "     " << fmt4(row.mean_imputed) << " (" << fmt4(row.std_imputed) << ")";
        out << '\n';
    }
    return out.str();
}

std::string ImprovementReport::to_csv() const {
    std::ostringstream out;
    out << "method,policy_mode,mean,std,reps\n";
    for (const auto& row : rows)
        out << row.method << ',' << row.policy_mode << ',' << fmt17(row.mean) << ','
            << fmt17(row.stddev) << ',' << row.reps << '\n';
    return out.str();
}

BenchReport bench_methods(const Dataset& train, const Dataset& test,
                          const std::vector<Method>& methods, const TrainOptions& opts,
                          std::uint64_t seed) {
    if (train.records.empty() || test.records.empty())
        throw DataError("bench: train and test must be nonempty");
    require(!methods.empty(), "bench: no methods selected");

    const NormalizationStats stats = compute_normalization(train);
    const Dataset trn = apply_normalization(train, stats);
    const Dataset ten = apply_normalization(test, stats);
    const int arms = trn.num_treatments();
    const int p = trn.p();

    auto design_matrix = [&](const Dataset& ds) {
        Mat X(ds.n(), p + arms);
        for (int i = 0; i < ds.n(); ++i) {
            const auto& rec = ds.records[static_cast<std::size_t>(i)];
            X.row(i).head(p) = rec.features.transpose();
            X.row(i).tail(arms).setZero();
            if (rec.treatment < arms) X(i, p + rec.treatment) = 1.0;
        }
        return X;
    };
    const Mat Xtr = design_matrix(trn);
    const Mat Xte = design_matrix(ten);
    Vec ytr(trn.n()), yte(ten.n());
    for (int i = 0; i < trn.n(); ++i) ytr[i] = trn.records[static_cast<std::size_t>(i)].outcome_next;
    for (int i = 0; i < ten.n(); ++i) yte[i] = ten.records[static_cast<std::size_t>(i)].outcome_next;

    BenchReport report;
    // One shared seed: every method sees identical CV folds (paired design).
    const std::uint64_t fold_seed = derive_seed(seed, 0xbe);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const auto model = fit_universal(methods[mi], Xtr, ytr, opts, fold_seed);
        Vec pred(ten.n());
        for (int i = 0; i < ten.n(); ++i) pred[i] = model->predict(Xte.row(i).transpose());
        report.rows.push_back({method_name(methods[mi]), compute_metrics(yte, pred)});
    }
    return report;
}

std::string BenchReport::to_table() const {
    std::ostringstream out;
    out << "method        R2        MSE       MeanAE    MedianAE\n";
    for (const auto& row : rows) {
        std::string name = row.method;
        name.resize(12, ' ');
        out << name << "  " << fmt4(row.metrics.r2) << "    " << fmt4(row.metrics.mse) << "    "
            << fmt4(row.metrics.mean_ae) << "    " << fmt4(row.metrics.median_ae) << '\n';
    }
    return out.str();
}

std::string BenchReport::to_csv() const {
    std::ostringstream out;
    out << "method,r2,mse,mean_ae,median_ae\n";
    for (const auto& row : rows)
        out << row.method << ',' << fmt17(row.metrics.r2) << ',' << fmt17(row.metrics.mse) << ','
            << fmt17(row.metrics.mean_ae) << ',' << fmt17(row.metrics.median_ae) << '\n';
    return out.str();
}

} // namespace rxp
