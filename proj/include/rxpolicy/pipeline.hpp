#pragma once

#include "rxpolicy/baselines.hpp"
#include "rxpolicy/dataset.hpp"
#include "rxpolicy/knn.hpp"
#include "rxpolicy/policy.hpp"
#include "rxpolicy/rlad.hpp"
#include "rxpolicy/threshold.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rxp {

// Predictive models under comparison. The *-knn variants share one recipe:
// fit the named linear model per arm, use its squared coefficients as the
// neighbor metric, average outcomes over the K nearest.
enum class Method {
    Ols,
    Lasso,
    Huber,
    Rlad,
    Cart,
    Knn,
    OlsKnn,
    LassoKnn,
    HuberKnn,
    RladKnn,
};

Method method_from_string(const std::string& name);
std::string method_name(Method method);
std::vector<Method> parse_methods(const std::string& comma_list);

enum class KRuleMode { Cv, SqrtLaw };
enum class SocMode { ModalKnn, ModalGlobal };

struct TrainOptions {
    std::vector<double> r_grid{1e-4, 1e-3, 1e-2, 1e-1};
    std::vector<int> k_grid{1, 2, 3, 5, 8, 13, 21, 34};
    std::vector<double> xi_grid{0.1, 0.5, 1.0, 2.0, 5.0};
    std::vector<double> lasso_grid{1e-4, 1e-3, 1e-2, 1e-1}; // fractions of lambda_max
    std::vector<int> cart_depth_grid{2, 4, 6, 8};
    int cart_min_leaf = 10;
    int folds = 5;
    SolverOptions solver{};
    KRuleMode k_rule = KRuleMode::SqrtLaw;
    double eps_bar = 0.05;
    double subsample_frac = 0.7;
    int subsample_reps = 30;
    double huber_k = 1.345; // times the MAD scale estimate
};

// Slopes fitted on mean deviations. Features are z-scored but outcomes stay
// in raw units, so the recovered mean keeps linear predictions calibrated
// without an intercept column entering the penalized objective.
struct CenteredLinear {
    Vec x_mean;
    double y_mean = 0.0;
    Vec beta;

    double predict(const Vec& x) const { return (x - x_mean).dot(beta) + y_mean; }
};

CenteredLinear center_and_fit_rlad(const Mat& X, const Vec& y, double r,
                                   const SolverOptions& opts);

struct GroupModel {
    CenteredLinear linear;
    double r = 0.0;
    double objective = 0.0; // rlad objective of the centered fit
    Vec knn_weights;        // squared slopes
    int tuned_k = 1;
    int k = 1;
};

// Universal model over all arms: one-hot treatment indicators appended to
// the feature vector, one robust fit, one neighbor pool.
struct ImputationModel {
    CenteredLinear linear;
    Vec weights;
    Mat ref_X; // n x (p + arms) design rows
    Vec ref_y;
    std::vector<int> ref_treatment;
    int p = 0;
    int arms = 0;
    double r = 0.0;

    Vec design(const Vec& features, int m) const;
    double impute(const Vec& features, int m, int k) const;
};

// Algorithm-1 machinery, fitted once so per-record (mu, C) estimates are
// dot products instead of repeated solver runs.
struct ThresholdEnsemble {
    std::vector<std::vector<CenteredLinear>> fits; // [arm][repetition]
    int a = 0;
    int d = 0;

    MuCEstimate estimate(const Vec& x) const;
};

ThresholdEnsemble fit_threshold_ensemble(const std::vector<TreatmentGroup>& groups,
                                         const std::vector<double>& group_r,
                                         double subsample_frac, int reps,
                                         const SolverOptions& opts, std::uint64_t seed);

// The trained artifact: everything cmd_prescribe / cmd_evaluate need,
// persisted by model_io.
struct TrainedPipeline {
    Dataset train_raw;
    NormalizationStats stats;
    TrainOptions opts;
    std::uint64_t seed = 0;

    std::vector<GroupModel> group_models;
    KRule krule{};
    bool krule_valid = false;
    ImputationModel imputation;
    ThresholdEnsemble ensemble;
    double xi = 1.0;       // tuned policy exponent (unit-variance scale)
    double xi_scale = 1.0; // train-set prediction std; effective xi = xi / xi_scale

    // Derived state, rebuilt after deserialization.
    Dataset train_norm;
    std::vector<TreatmentGroup> groups;
    std::vector<KnnPredictor> knn;

    void rebuild_derived();
    int imputation_k(int eval_set_size) const;
};

TrainedPipeline fit_pipeline(const Dataset& raw_train, const TrainOptions& opts,
                             std::uint64_t seed);

// Per-arm predictor interface used by the policy-comparison harness.
struct GroupPredictor {
    virtual ~GroupPredictor() = default;
    virtual double predict(const Vec& x) const = 0;
};

struct MethodModel {
    Method method = Method::RladKnn;
    std::vector<std::unique_ptr<GroupPredictor>> arms;

    Vec predict_all(const Vec& x) const;
};

MethodModel fit_method(Method method, const std::vector<TreatmentGroup>& groups,
                       const TrainOptions& opts, std::uint64_t seed);

// Assembles a K-NN method model from already-fitted weights and neighbor
// counts (lets the evaluation harness reuse its RLAD fits).
MethodModel make_knn_method_model(Method method, const std::vector<TreatmentGroup>& groups,
                                  const std::vector<Vec>& weights, const std::vector<int>& ks);

ImputationModel fit_imputation_model(const Dataset& train_norm, const TrainOptions& opts,
                                     std::uint64_t seed);

// Sqrt-law rule over per-arm tuned K values, with a scaled-sqrt fallback
// when the group sizes cannot identify a line.
std::vector<int> select_group_ks(const std::vector<TreatmentGroup>& groups,
                                 const std::vector<int>& tuned, KRuleMode mode, KRule* rule_out,
                                 bool* rule_valid_out);

struct XiChoice {
    double xi = 1.0;    // grid value, unit-variance scale
    double scale = 1.0; // train-set prediction std
};

// Grid search maximizing mean expected improvement (most negative value) of
// the randomized freeze policy on the training records, with counterfactual
// outcomes imputed. y_hat, imputed are n x M caches aligned with `records`.
XiChoice tune_xi(const std::vector<PatientRecord>& records, const Mat& y_hat, const Mat& imputed,
                 const std::vector<MuCEstimate>& ests, const std::vector<double>& grid,
                 double eps_bar);

// Universal (non-grouped) predictor on the one-hot design, for the
// predictive-metrics benchmark.
std::unique_ptr<GroupPredictor> fit_universal(Method method, const Mat& X, const Vec& y,
                                              const TrainOptions& opts, std::uint64_t seed);

double huber_delta_from_mad(const Mat& X, const Vec& y, double k);

struct PrescriptionRow {
    std::string id;
    Vec probs;
    int treatment = 0;
    bool frozen = false;
    double threshold = 0.0;
};

std::vector<PrescriptionRow> prescribe_dataset(const TrainedPipeline& pipeline,
                                               const Dataset& raw_input, PolicyMode mode,
                                               std::optional<double> xi_override,
                                               std::optional<double> eps_override,
                                               std::uint64_t seed);

void write_prescriptions_csv(const std::vector<PrescriptionRow>& rows,
                             const std::vector<std::string>& treatment_labels,
                             const std::string& path);

} // namespace rxp
