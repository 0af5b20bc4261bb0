/*
 * rxpolicy C API: robust prescriptive-policy pipeline behind opaque handles.
 *
 * Every function returns RXP_OK (0) on success or a nonzero status that
 * doubles as the CLI exit code; rxp_last_error() describes the most recent
 * failure on the calling thread. Out-parameters are written only on success.
 * Handles are freed with the matching *_free function.
 */
#ifndef RXPOLICY_H
#define RXPOLICY_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RXP_API __declspec(dllexport)
#else
#define RXP_API __attribute__((visibility("default")))
#endif

typedef enum rxp_status {
    RXP_OK = 0,
    RXP_ERR_USAGE = 2,       /* invalid arguments or configuration */
    RXP_ERR_DATA = 3,        /* malformed input data or model files */
    RXP_ERR_CONVERGENCE = 4, /* solver failed to reach tolerance */
    RXP_ERR_IO = 5           /* filesystem failure */
} rxp_status;

typedef struct rxp_dataset rxp_dataset;
typedef struct rxp_model rxp_model;

RXP_API int rxp_api_version(void);

/* Thread-local message for the last failing call; never NULL. */
RXP_API const char *rxp_last_error(void);

RXP_API void rxp_string_free(char *s);

/* ---- synthetic data ---------------------------------------------------- */

/*
 * config_path: key=value file, NULL for defaults. overrides: semicolon- or
 * newline-separated key=value pairs applied on top, NULL for none. seed < 0
 * keeps the config's seed. out_oracle_csv NULL writes "<out_csv minus
 * .csv>.oracle.csv".
 */
RXP_API rxp_status rxp_generate_data(const char *config_path, const char *overrides,
                                     int64_t seed, const char *out_csv,
                                     const char *out_oracle_csv);

/* ---- datasets ----------------------------------------------------------- */

RXP_API rxp_status rxp_dataset_load(const char *csv_path, const char *schema_path,
                                    rxp_dataset **out);
RXP_API void rxp_dataset_free(rxp_dataset *ds);
RXP_API int64_t rxp_dataset_rows(const rxp_dataset *ds);
RXP_API int64_t rxp_dataset_features(const rxp_dataset *ds);
RXP_API int64_t rxp_dataset_treatments(const rxp_dataset *ds);

/* ---- training ----------------------------------------------------------- */

typedef struct rxp_train_options {
    const char *r_grid;  /* comma list, NULL for default */
    const char *k_grid;  /* comma list, NULL for default */
    const char *xi_grid; /* comma list, NULL for default */
    int folds;
    int k_rule_sqrt_law; /* 1: K = a + b*sqrt(N) rule (default), 0: per-arm CV */
    double rlad_tol;
    int64_t rlad_max_iters;
    double eps_bar;
    double subsample_frac;
    int64_t subsample_reps;
    uint64_t seed;
} rxp_train_options;

RXP_API void rxp_train_options_init(rxp_train_options *opts);

RXP_API rxp_status rxp_train(const rxp_dataset *train, const rxp_train_options *opts,
                             rxp_model **out);
RXP_API rxp_status rxp_model_save(const rxp_model *model, const char *path);
RXP_API rxp_status rxp_model_load(const char *path, rxp_model **out);
RXP_API void rxp_model_free(rxp_model *model);

/* One-line summary (groups, penalties, neighbor counts, xi); caller frees. */
RXP_API rxp_status rxp_model_summary(const rxp_model *model, char **text_out);

/* ---- prescription -------------------------------------------------------- */

typedef struct rxp_prescribe_options {
    int deterministic; /* 0: randomized softmax policy, 1: argmin policy */
    double xi;         /* policy exponent; NAN keeps the trained value */
    double eps_bar;    /* freeze confidence; NAN keeps the trained value */
    uint64_t seed;
} rxp_prescribe_options;

RXP_API void rxp_prescribe_options_init(rxp_prescribe_options *opts);

/* Writes id, per-arm probabilities, chosen arm, frozen flag, threshold. */
RXP_API rxp_status rxp_prescribe(const rxp_model *model, const rxp_dataset *input,
                                 const rxp_prescribe_options *opts, const char *out_csv);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct rxp_evaluate_options {
    const char *methods;    /* comma list, NULL for lasso,cart,ols-knn,rlad-knn */
    const char *oracle_csv; /* counterfactual table; NULL scores by imputation */
    int64_t reps;
    uint64_t seed;
    int soc_modal_global; /* 0: modal arm among nearest neighbors (default) */
    int resplit;          /* 1: re-split train+test per repetition (default) */
} rxp_evaluate_options;

RXP_API void rxp_evaluate_options_init(rxp_evaluate_options *opts);

/*
 * Improvement comparison (methods x {deterministic, randomized} plus the
 * current-prescription and standard-of-care rows). Writes the CSV report to
 * out_csv (optional) and returns the aligned text table via table_out
 * (optional; caller frees).
 */
RXP_API rxp_status rxp_evaluate(const rxp_model *model, const rxp_dataset *test,
                                const rxp_evaluate_options *opts, const char *out_csv,
                                char **table_out);

/* ---- predictive benchmark ------------------------------------------------- */

typedef struct rxp_bench_options {
    const char *methods; /* comma list, NULL for the full comparator set */
    const char *r_grid;
    const char *k_grid;
    int folds;
    double rlad_tol;
    int64_t rlad_max_iters;
    uint64_t seed;
} rxp_bench_options;

RXP_API void rxp_bench_options_init(rxp_bench_options *opts);

/* R2 / MSE / MeanAE / MedianAE per method on the non-grouped design. */
RXP_API rxp_status rxp_bench(const rxp_dataset *train, const rxp_dataset *test,
                             const rxp_bench_options *opts, const char *out_csv,
                             char **table_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* RXPOLICY_H */
