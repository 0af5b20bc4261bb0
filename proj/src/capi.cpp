#include "rxpolicy/rxpolicy.h"

#include "rxpolicy/evaluation.hpp"
#include "rxpolicy/model_io.hpp"
#include "rxpolicy/pipeline.hpp"
#include "rxpolicy/synth.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <sstream>

namespace {

thread_local std::string g_last_error = "no error";

rxp_status fail(rxp_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Exception-to-status boundary for every entry point.
template <typename Fn>
rxp_status guarded(Fn&& fn) {
    try {
        fn();
        return RXP_OK;
    } catch (const rxp::ConvergenceError& e) {
        return fail(RXP_ERR_CONVERGENCE, e.what());
    } catch (const rxp::UsageError& e) {
        return fail(RXP_ERR_USAGE, e.what());
    } catch (const rxp::IoError& e) {
        return fail(RXP_ERR_IO, e.what());
    } catch (const rxp::DataError& e) {
        return fail(RXP_ERR_DATA, e.what());
    } catch (const std::exception& e) {
        return fail(RXP_ERR_DATA, e.what());
    }
}

std::vector<double> parse_double_list(const char* text, const std::vector<double>& fallback) {
    if (!text) return fallback;
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw rxp::UsageError("empty numeric list");
    return out;
}

std::vector<int> parse_int_list(const char* text, const std::vector<int>& fallback) {
    if (!text) return fallback;
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    if (out.empty()) throw rxp::UsageError("empty integer list");
    return out;
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

rxp::TrainOptions to_train_options(const rxp_train_options& o) {
    rxp::TrainOptions t;
    t.r_grid = parse_double_list(o.r_grid, t.r_grid);
    t.k_grid = parse_int_list(o.k_grid, t.k_grid);
    t.xi_grid = parse_double_list(o.xi_grid, t.xi_grid);
    if (o.folds > 0) t.folds = o.folds;
    t.k_rule = o.k_rule_sqrt_law ? rxp::KRuleMode::SqrtLaw : rxp::KRuleMode::Cv;
    if (o.rlad_tol > 0) t.solver.tolerance = o.rlad_tol;
    if (o.rlad_max_iters > 0) t.solver.max_iters = static_cast<int>(o.rlad_max_iters);
    if (o.eps_bar > 0) t.eps_bar = o.eps_bar;
    if (o.subsample_frac > 0) t.subsample_frac = o.subsample_frac;
    if (o.subsample_reps > 0) t.subsample_reps = static_cast<int>(o.subsample_reps);
    return t;
}

} // namespace

struct rxp_dataset {
    rxp::Dataset data;
};

struct rxp_model {
    rxp::TrainedPipeline pipeline;
};

extern "C" {

int rxp_api_version(void) { return 1; }

const char* rxp_last_error(void) { return g_last_error.c_str(); }

void rxp_string_free(char* s) { delete[] s; }

rxp_status rxp_generate_data(const char* config_path, const char* overrides, int64_t seed,
                             const char* out_csv, const char* out_oracle_csv) {
    return guarded([&] {
        if (!out_csv) throw rxp::UsageError("rxp_generate_data: out_csv is required");
        rxp::GeneratorConfig cfg = config_path ? rxp::load_generator_config(config_path)
                                               : rxp::default_generator_config();
        if (overrides) {
            std::string text(overrides);
            for (char& c : text)
                if (c == ';') c = '\n';
            std::stringstream ss(text);
            std::string line;
            while (std::getline(ss, line)) {
                if (line.find_first_not_of(" \t") == std::string::npos) continue;
                const std::size_t eq = line.find('=');
                if (eq == std::string::npos)
                    throw rxp::UsageError("override '" + line + "' is not key=value");
                rxp::apply_config_override(cfg, line.substr(0, eq), line.substr(eq + 1));
            }
        }
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);

        const rxp::SyntheticCohort cohort = rxp::generate(cfg);
        rxp::write_csv(cohort.dataset, out_csv);
        std::string oracle_path;
        if (out_oracle_csv) {
            oracle_path = out_oracle_csv;
        } else {
            oracle_path = out_csv;
            const std::size_t dot = oracle_path.rfind(".csv");
            if (dot != std::string::npos && dot == oracle_path.size() - 4)
                oracle_path = oracle_path.substr(0, dot);
            oracle_path += ".oracle.csv";
        }
        rxp::write_oracle_csv(cohort, oracle_path);
    });
}

rxp_status rxp_dataset_load(const char* csv_path, const char* schema_path, rxp_dataset** out) {
    return guarded([&] {
        if (!csv_path || !out) throw rxp::UsageError("rxp_dataset_load: null argument");
        rxp::ColumnSchema schema;
        if (schema_path) schema = rxp::load_schema_file(schema_path);
        auto handle = std::make_unique<rxp_dataset>();
        handle->data = rxp::load_csv(csv_path, schema);
        *out = handle.release();
    });
}

void rxp_dataset_free(rxp_dataset* ds) { delete ds; }

int64_t rxp_dataset_rows(const rxp_dataset* ds) { return ds ? ds->data.n() : 0; }
int64_t rxp_dataset_features(const rxp_dataset* ds) { return ds ? ds->data.p() : 0; }
int64_t rxp_dataset_treatments(const rxp_dataset* ds) {
    return ds ? ds->data.num_treatments() : 0;
}

void rxp_train_options_init(rxp_train_options* opts) {
    if (!opts) return;
    *opts = rxp_train_options{};
    opts->folds = 5;
    opts->k_rule_sqrt_law = 1;
    opts->rlad_tol = 1e-8;
    opts->rlad_max_iters = 10000;
    opts->eps_bar = 0.05;
    opts->subsample_frac = 0.7;
    opts->subsample_reps = 30;
    opts->seed = 1;
}

rxp_status rxp_train(const rxp_dataset* train, const rxp_train_options* opts, rxp_model** out) {
    return guarded([&] {
        if (!train || !opts || !out) throw rxp::UsageError("rxp_train: null argument");
        auto handle = std::make_unique<rxp_model>();
        handle->pipeline = rxp::fit_pipeline(train->data, to_train_options(*opts), opts->seed);
        *out = handle.release();
    });
}

rxp_status rxp_model_save(const rxp_model* model, const char* path) {
    return guarded([&] {
        if (!model || !path) throw rxp::UsageError("rxp_model_save: null argument");
        rxp::save_model(model->pipeline, path);
    });
}

rxp_status rxp_model_load(const char* path, rxp_model** out) {
    return guarded([&] {
        if (!path || !out) throw rxp::UsageError("rxp_model_load: null argument");
        auto handle = std::make_unique<rxp_model>();
        handle->pipeline = rxp::load_model(path);
        *out = handle.release();
    });
}

void rxp_model_free(rxp_model* model) { delete model; }

rxp_status rxp_model_summary(const rxp_model* model, char** text_out) {
    return guarded([&] {
        if (!model || !text_out) throw rxp::UsageError("rxp_model_summary: null argument");
        const auto& pipe = model->pipeline;
        std::ostringstream out;
        out << "treatments=" << pipe.train_raw.num_treatments()
            << " features=" << pipe.train_raw.p() << " records=" << pipe.train_raw.n() << "\n";
        for (std::size_t m = 0; m < pipe.group_models.size(); ++m) {
            const auto& g = pipe.group_models[m];
            out << "arm " << pipe.train_raw.treatment_names[m] << ": N="
                << pipe.groups[m].size() << " r=" << g.r << " K=" << g.k
                << " (tuned " << g.tuned_k << ")\n";
        }
        out << "k-rule: K = " << pipe.krule.a << " + " << pipe.krule.b << "*sqrt(N)"
            << (pipe.krule_valid ? "" : " [fallback]") << "\n";
        out << "xi=" << pipe.xi << " (scale " << pipe.xi_scale << "), eps_bar="
            << pipe.opts.eps_bar << "\n";
        *text_out = dup_string(out.str());
    });
}

void rxp_prescribe_options_init(rxp_prescribe_options* opts) {
    if (!opts) return;
    *opts = rxp_prescribe_options{};
    opts->deterministic = 0;
    opts->xi = std::nan("");
    opts->eps_bar = std::nan("");
    opts->seed = 1;
}

rxp_status rxp_prescribe(const rxp_model* model, const rxp_dataset* input,
                         const rxp_prescribe_options* opts, const char* out_csv) {
    return guarded([&] {
        if (!model || !input || !opts || !out_csv)
            throw rxp::UsageError("rxp_prescribe: null argument");
        const auto rows = rxp::prescribe_dataset(
            model->pipeline, input->data,
            opts->deterministic ? rxp::PolicyMode::Deterministic : rxp::PolicyMode::Randomized,
            std::isnan(opts->xi) ? std::nullopt : std::optional<double>(opts->xi),
            std::isnan(opts->eps_bar) ? std::nullopt : std::optional<double>(opts->eps_bar),
            opts->seed);
        rxp::write_prescriptions_csv(rows, model->pipeline.train_raw.treatment_names, out_csv);
    });
}

void rxp_evaluate_options_init(rxp_evaluate_options* opts) {
    if (!opts) return;
    *opts = rxp_evaluate_options{};
    opts->reps = 5;
    opts->seed = 1;
    opts->soc_modal_global = 0;
    opts->resplit = 1;
}

rxp_status rxp_evaluate(const rxp_model* model, const rxp_dataset* test,
                        const rxp_evaluate_options* opts, const char* out_csv, char** table_out) {
    return guarded([&] {
        if (!model || !test || !opts) throw rxp::UsageError("rxp_evaluate: null argument");
        rxp::EvalOptions eval;
        if (opts->methods) eval.methods = rxp::parse_methods(opts->methods);
        eval.reps = static_cast<int>(opts->reps);
        eval.seed = opts->seed;
        eval.soc = opts->soc_modal_global ? rxp::SocMode::ModalGlobal : rxp::SocMode::ModalKnn;
        eval.resplit = opts->resplit != 0;
        eval.train = model->pipeline.opts;

        // The input dataset's labels may be ordered differently; remap onto
        // the model's dense indices before comparing records.
        rxp::Dataset test_mapped = test->data;
        {
            const auto& labels = model->pipeline.train_raw.treatment_names;
            std::vector<int> remap(test_mapped.treatment_names.size(), -1);
            for (std::size_t t = 0; t < test_mapped.treatment_names.size(); ++t) {
                for (std::size_t m = 0; m < labels.size(); ++m)
                    if (labels[m] == test_mapped.treatment_names[t])
                        remap[t] = static_cast<int>(m);
                if (remap[t] < 0)
                    throw rxp::DataError("evaluate: unknown treatment label '" +
                                         test_mapped.treatment_names[t] + "'");
            }
            for (auto& rec : test_mapped.records)
                rec.treatment = remap[static_cast<std::size_t>(rec.treatment)];
            test_mapped.treatment_names = labels;
        }

        rxp::OracleTable oracle;
        const rxp::OracleTable* oracle_ptr = nullptr;
        if (opts->oracle_csv) {
            oracle = rxp::load_oracle_csv(opts->oracle_csv,
                                          model->pipeline.train_raw.treatment_names);
            oracle_ptr = &oracle;
        }

        const rxp::ImprovementReport report = rxp::evaluate_policies(
            model->pipeline.train_raw, test_mapped, eval, oracle_ptr);
        if (out_csv) rxp::write_file_atomic(out_csv, report.to_csv());
        if (table_out) *table_out = dup_string(report.to_table());
    });
}

void rxp_bench_options_init(rxp_bench_options* opts) {
    if (!opts) return;
    *opts = rxp_bench_options{};
    opts->folds = 5;
    opts->rlad_tol = 1e-8;
    opts->rlad_max_iters = 10000;
    opts->seed = 1;
}

rxp_status rxp_bench(const rxp_dataset* train, const rxp_dataset* test,
                     const rxp_bench_options* opts, const char* out_csv, char** table_out) {
    return guarded([&] {
        if (!train || !test || !opts) throw rxp::UsageError("rxp_bench: null argument");
        rxp::TrainOptions t;
        t.r_grid = parse_double_list(opts->r_grid, t.r_grid);
        t.k_grid = parse_int_list(opts->k_grid, t.k_grid);
        if (opts->folds > 0) t.folds = opts->folds;
        if (opts->rlad_tol > 0) t.solver.tolerance = opts->rlad_tol;
        if (opts->rlad_max_iters > 0) t.solver.max_iters = static_cast<int>(opts->rlad_max_iters);

        std::vector<rxp::Method> methods;
        if (opts->methods) {
            methods = rxp::parse_methods(opts->methods);
        } else {
            methods = {rxp::Method::Ols,      rxp::Method::Lasso,   rxp::Method::Huber,
                       rxp::Method::Rlad,     rxp::Method::Knn,     rxp::Method::OlsKnn,
                       rxp::Method::LassoKnn, rxp::Method::HuberKnn, rxp::Method::RladKnn,
                       rxp::Method::Cart};
        }

        // Bench compares predictions of factual outcomes, so the test labels
        // must align with the training label order.
        rxp::Dataset test_mapped = test->data;
        {
            const auto& labels = train->data.treatment_names;
            std::vector<int> remap(test_mapped.treatment_names.size(), -1);
            for (std::size_t t2 = 0; t2 < test_mapped.treatment_names.size(); ++t2) {
                for (std::size_t m = 0; m < labels.size(); ++m)
                    if (labels[m] == test_mapped.treatment_names[t2]) remap[t2] = static_cast<int>(m);
                if (remap[t2] < 0)
                    throw rxp::DataError("bench: unknown treatment label '" +
                                         test_mapped.treatment_names[t2] + "'");
            }
            for (auto& rec : test_mapped.records)
                rec.treatment = remap[static_cast<std::size_t>(rec.treatment)];
            test_mapped.treatment_names = labels;
        }

        const rxp::BenchReport report =
            rxp::bench_methods(train->data, test_mapped, methods, t, opts->seed);
        if (out_csv) rxp::write_file_atomic(out_csv, report.to_csv());
        if (table_out) *table_out = dup_string(report.to_table());
    });
}

} // extern "C"
