#pragma once

#include "rxpolicy/metrics.hpp"
#include "rxpolicy/pipeline.hpp"
#include "rxpolicy/synth.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rxp {

struct EvalOptions {
    std::vector<Method> methods{Method::Lasso, Method::Cart, Method::OlsKnn, Method::RladKnn};
    int reps = 5;
    std::uint64_t seed = 1;
    SocMode soc = SocMode::ModalKnn;
    // Re-randomize the train/test split per repetition (the protocol behind
    // the reported means/stds); with false, repetitions keep the given split
    // and only the policy sampling varies.
    bool resplit = true;
    TrainOptions train;
};

struct ImprovementRow {
    std::string method;      // CLI token, plus "current-prescription" / "standard-of-care"
    std::string policy_mode; // "deterministic" | "randomized" | "none"
    double mean = 0.0;
    double stddev = 0.0;
    // Imputed-counterfactual scoring, reported alongside the oracle-scored
    // numbers when ground truth is available (exposes imputation bias).
    double mean_imputed = 0.0;
    double std_imputed = 0.0;
    int reps = 0;
};

struct ImprovementReport {
    std::vector<ImprovementRow> rows;
    bool oracle_scored = false;

    std::string to_table() const;
    std::string to_csv() const; // frozen schema: method,policy_mode,mean,std,reps
};

// Table-1 protocol: per repetition (optionally re-splitting the pooled
// records), fit per-arm predictors for every method, run the freeze policy
// on each test record in both modes, and score improvement = outcome under
// the prescribed arm minus the current observed outcome. Ground-truth
// outcomes score the counterfactuals when an oracle is supplied; the
// universal imputation model otherwise. Rows for "current prescription"
// (always m_c) and "standard of care" are appended.
ImprovementReport evaluate_policies(const Dataset& train, const Dataset& test,
                                    const EvalOptions& opts,
                                    const OracleTable* oracle = nullptr);

struct BenchRow {
    std::string method;
    MetricsReport metrics;
};

struct BenchReport {
    std::vector<BenchRow> rows;

    std::string to_table() const;
    std::string to_csv() const; // method,r2,mse,mean_ae,median_ae
};

// Predictive-metrics comparison on the non-grouped data: one universal model
// per method with the treatment indicator among the predictors, scored on
// the factual test outcomes.
BenchReport bench_methods(const Dataset& train, const Dataset& test,
                          const std::vector<Method>& methods, const TrainOptions& opts,
                          std::uint64_t seed);

} // namespace rxp
