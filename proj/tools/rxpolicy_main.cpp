// rxpolicy command-line tool. Links the shared library through the C API
// only; all pipeline logic lives behind rxpolicy.h.

#include "rxpolicy/rxpolicy.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

namespace {

int report_failure(rxp_status status) {
    std::cerr << "error: " << rxp_last_error() << "\n";
    return static_cast<int>(status);
}

struct DatasetHandle {
    rxp_dataset* ptr = nullptr;
    ~DatasetHandle() { rxp_dataset_free(ptr); }
};

struct ModelHandle {
    rxp_model* ptr = nullptr;
    ~ModelHandle() { rxp_model_free(ptr); }
};

int load_dataset(const std::string& csv, const std::string& schema, DatasetHandle& out) {
    const rxp_status status =
        rxp_dataset_load(csv.c_str(), schema.empty() ? nullptr : schema.c_str(), &out.ptr);
    return status == RXP_OK ? 0 : report_failure(status);
}

// Bare config names resolve against RXPOLICY_CONFIG_DIR when the path does
// not exist as given.
std::string resolve_config(const std::string& path) {
    if (path.empty() || std::filesystem::exists(path)) return path;
    const char* dir = std::getenv("RXPOLICY_CONFIG_DIR");
    if (!dir) return path;
    const std::filesystem::path candidate = std::filesystem::path(dir) / path;
    if (std::filesystem::exists(candidate)) return candidate.string();
    return path;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust prescriptive-policy pipeline"};
    app.require_subcommand(1);

    // gen-data ---------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic cohort CSV + oracle CSV");
    std::string gen_config, gen_out = "cohort.csv", gen_oracle;
    std::vector<std::string> gen_sets;
    std::int64_t gen_seed = -1;
    gen->add_option("--config", gen_config, "generator config file (key = value lines)");
    gen->add_option("--set", gen_sets, "config override key=value (repeatable)");
    gen->add_option("--seed", gen_seed, "override the config seed");
    gen->add_option("--out", gen_out, "output CSV path")->capture_default_str();
    gen->add_option("--oracle-out", gen_oracle, "oracle CSV path (default: <out>.oracle.csv)");

    // train -------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "fit the per-arm models and save a model file");
    std::string train_csv, train_schema, train_out = "model.rxp";
    rxp_train_options topts;
    rxp_train_options_init(&topts);
    std::string t_rgrid, t_kgrid, t_xigrid, t_krule = "sqrt-law";
    std::uint64_t t_seed = 1;
    int t_folds = 5;
    double t_tol = 1e-8, t_eps = 0.05, t_frac = 0.7;
    std::int64_t t_iters = 10000, t_reps = 30;
    train->add_option("--train-csv", train_csv, "training data")->required();
    train->add_option("--schema", train_schema, "column schema file");
    train->add_option("--out-model", train_out, "model output path")->capture_default_str();
    train->add_option("--r-grid", t_rgrid, "penalty grid, comma separated");
    train->add_option("--k-grid", t_kgrid, "neighbor-count grid, comma separated");
    train->add_option("--xi-grid", t_xigrid, "policy exponent grid, comma separated");
    train->add_option("--folds", t_folds, "cross-validation folds")->capture_default_str();
    train->add_option("--k-rule", t_krule, "cv | sqrt-law")->capture_default_str();
    train->add_option("--rlad-tol", t_tol, "solver objective tolerance")->capture_default_str();
    train->add_option("--rlad-max-iters", t_iters, "solver iteration budget")
        ->capture_default_str();
    train->add_option("--eps-bar", t_eps, "freeze confidence level")->capture_default_str();
    train->add_option("--subsample-frac", t_frac, "threshold subsample fraction")
        ->capture_default_str();
    train->add_option("--subsample-reps", t_reps, "threshold subsample repetitions")
        ->capture_default_str();
    train->add_option("--seed", t_seed, "root seed")->capture_default_str();

    // prescribe -----------------------------------------------------------------
    auto* rx = app.add_subcommand("prescribe", "apply the freeze policy to a cohort");
    std::string rx_model, rx_csv, rx_schema, rx_out = "prescriptions.csv";
    std::string rx_policy = "randomized";
    double rx_xi = std::nan(""), rx_eps = std::nan("");
    std::uint64_t rx_seed = 1;
    rx->add_option("--model", rx_model, "trained model file")->required();
    rx->add_option("--input-csv", rx_csv, "records to prescribe for")->required();
    rx->add_option("--schema", rx_schema, "column schema file");
    rx->add_option("--policy", rx_policy, "randomized | deterministic")->capture_default_str();
    rx->add_option("--xi", rx_xi, "override the trained policy exponent");
    rx->add_option("--eps-bar", rx_eps, "override the trained freeze confidence");
    rx->add_option("--seed", rx_seed, "sampling seed")->capture_default_str();
    rx->add_option("--out", rx_out, "output CSV path")->capture_default_str();

    // evaluate -----------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "improvement comparison against baselines");
    std::string ev_model, ev_csv, ev_schema, ev_oracle, ev_out, ev_methods, ev_soc = "modal-knn";
    std::int64_t ev_reps = 5;
    std::uint64_t ev_seed = 1;
    bool ev_no_resplit = false;
    ev->add_option("--model", ev_model, "trained model file")->required();
    ev->add_option("--test-csv", ev_csv, "held-out records")->required();
    ev->add_option("--schema", ev_schema, "column schema file");
    ev->add_option("--oracle-csv", ev_oracle, "counterfactual table for true-outcome scoring");
    ev->add_option("--methods", ev_methods, "comma list (default lasso,cart,ols-knn,rlad-knn)");
    ev->add_option("--reps", ev_reps, "repetitions")->capture_default_str();
    ev->add_option("--seed", ev_seed, "root seed")->capture_default_str();
    ev->add_option("--soc", ev_soc, "standard-of-care proxy: modal-knn | modal-global")
        ->capture_default_str();
    ev->add_flag("--no-resplit", ev_no_resplit, "keep the given split across repetitions");
    ev->add_option("--out", ev_out, "report CSV path");

    // bench ----------------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "predictive-metrics comparison (universal models)");
    std::string b_train, b_test, b_schema, b_out, b_methods, b_rgrid, b_kgrid, b_baseline;
    int b_folds = 5;
    std::uint64_t b_seed = 1;
    bench->add_option("--train-csv", b_train, "training data")->required();
    bench->add_option("--test-csv", b_test, "held-out data")->required();
    bench->add_option("--schema", b_schema, "column schema file");
    bench->add_option("--methods", b_methods, "comma list (default: all comparators)");
    bench->add_option("--baseline", b_baseline, "single comparator shorthand");
    bench->add_option("--r-grid", b_rgrid, "penalty grid");
    bench->add_option("--k-grid", b_kgrid, "neighbor-count grid");
    bench->add_option("--folds", b_folds, "cross-validation folds")->capture_default_str();
    bench->add_option("--seed", b_seed, "root seed")->capture_default_str();
    bench->add_option("--out", b_out, "metrics CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (gen->parsed()) {
        std::string overrides;
        for (const auto& kv : gen_sets) {
            if (!overrides.empty()) overrides += ';';
            overrides += kv;
        }
        const std::string config = resolve_config(gen_config);
        const rxp_status status = rxp_generate_data(
            config.empty() ? nullptr : config.c_str(),
            overrides.empty() ? nullptr : overrides.c_str(), gen_seed, gen_out.c_str(),
            gen_oracle.empty() ? nullptr : gen_oracle.c_str());
        if (status != RXP_OK) return report_failure(status);
        std::cout << "wrote " << gen_out << "\n";
        return 0;
    }

    if (train->parsed()) {
        DatasetHandle data;
        if (int rc = load_dataset(train_csv, train_schema, data)) return rc;

        if (!t_rgrid.empty()) topts.r_grid = t_rgrid.c_str();
        if (!t_kgrid.empty()) topts.k_grid = t_kgrid.c_str();
        if (!t_xigrid.empty()) topts.xi_grid = t_xigrid.c_str();
        topts.folds = t_folds;
        if (t_krule == "cv") topts.k_rule_sqrt_law = 0;
        else if (t_krule == "sqrt-law") topts.k_rule_sqrt_law = 1;
        else {
            std::cerr << "error: --k-rule must be cv or sqrt-law\n";
            return 2;
        }
        topts.rlad_tol = t_tol;
        topts.rlad_max_iters = t_iters;
        topts.eps_bar = t_eps;
        topts.subsample_frac = t_frac;
        topts.subsample_reps = t_reps;
        topts.seed = t_seed;

        ModelHandle model;
        rxp_status status = rxp_train(data.ptr, &topts, &model.ptr);
        if (status != RXP_OK) return report_failure(status);
        status = rxp_model_save(model.ptr, train_out.c_str());
        if (status != RXP_OK) return report_failure(status);

        char* summary = nullptr;
        if (rxp_model_summary(model.ptr, &summary) == RXP_OK) {
            std::cout << summary;
            rxp_string_free(summary);
        }
        std::cout << "wrote " << train_out << "\n";
        return 0;
    }

    if (rx->parsed()) {
        if (rx_policy != "randomized" && rx_policy != "deterministic") {
            std::cerr << "error: --policy must be randomized or deterministic\n";
            return 2;
        }
        ModelHandle model;
        rxp_status status = rxp_model_load(rx_model.c_str(), &model.ptr);
        if (status != RXP_OK) return report_failure(status);
        DatasetHandle data;
        if (int rc = load_dataset(rx_csv, rx_schema, data)) return rc;

        rxp_prescribe_options opts;
        rxp_prescribe_options_init(&opts);
        opts.deterministic = rx_policy == "deterministic" ? 1 : 0;
        opts.xi = rx_xi;
        opts.eps_bar = rx_eps;
        opts.seed = rx_seed;
        status = rxp_prescribe(model.ptr, data.ptr, &opts, rx_out.c_str());
        if (status != RXP_OK) return report_failure(status);
        std::cout << "wrote " << rx_out << "\n";
        return 0;
    }

    if (ev->parsed()) {
        if (ev_soc != "modal-knn" && ev_soc != "modal-global") {
            std::cerr << "error: --soc must be modal-knn or modal-global\n";
            return 2;
        }
        ModelHandle model;
        rxp_status status = rxp_model_load(ev_model.c_str(), &model.ptr);
        if (status != RXP_OK) return report_failure(status);
        DatasetHandle data;
        if (int rc = load_dataset(ev_csv, ev_schema, data)) return rc;

        rxp_evaluate_options opts;
        rxp_evaluate_options_init(&opts);
        if (!ev_methods.empty()) opts.methods = ev_methods.c_str();
        if (!ev_oracle.empty()) opts.oracle_csv = ev_oracle.c_str();
        opts.reps = ev_reps;
        opts.seed = ev_seed;
        opts.soc_modal_global = ev_soc == "modal-global" ? 1 : 0;
        opts.resplit = ev_no_resplit ? 0 : 1;

        char* table = nullptr;
        status = rxp_evaluate(model.ptr, data.ptr, &opts, ev_out.empty() ? nullptr : ev_out.c_str(),
                              &table);
        if (status != RXP_OK) return report_failure(status);
        std::cout << table;
        rxp_string_free(table);
        if (!ev_out.empty()) std::cout << "wrote " << ev_out << "\n";
        return 0;
    }

    if (bench->parsed()) {
        DatasetHandle train_data, test_data;
        if (int rc = load_dataset(b_train, b_schema, train_data)) return rc;
        if (int rc = load_dataset(b_test, b_schema, test_data)) return rc;

        rxp_bench_options opts;
        rxp_bench_options_init(&opts);
        std::string methods = b_methods;
        if (!b_baseline.empty()) {
            if (!methods.empty()) methods += ',';
            methods += b_baseline;
        }
        if (!methods.empty()) opts.methods = methods.c_str();
        if (!b_rgrid.empty()) opts.r_grid = b_rgrid.c_str();
        if (!b_kgrid.empty()) opts.k_grid = b_kgrid.c_str();
        opts.folds = b_folds;
        opts.seed = b_seed;

        char* table = nullptr;
        const rxp_status status = rxp_bench(train_data.ptr, test_data.ptr, &opts,
                                            b_out.empty() ? nullptr : b_out.c_str(), &table);
        if (status != RXP_OK) return report_failure(status);
        std::cout << table;
        rxp_string_free(table);
        if (!b_out.empty()) std::cout << "wrote " << b_out << "\n";
        return 0;
    }

    return 2;
}
