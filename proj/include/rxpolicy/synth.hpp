#pragma once

#include "rxpolicy/common.hpp"
#include "rxpolicy/dataset.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace rxp {

enum class Nonlinearity { None, Quadratic, Radial };
enum class NoiseKind { Gaussian, Laplace, Contaminated };
enum class Assignment { Random, OutcomeBiased };

// Desk-scale defaults: n=5000, p=10, M=3, quadratic nonlinearity with
// amplitude 0.5, unit gaussian noise, outcome-biased assignment.
struct GeneratorConfig {
    int n = 5000;
    int p = 10; // includes the current-outcome feature at co_index
    int m = 3;
    int co_index = 0;
    Mat beta_star;            // M x p; empty -> drawn from the seed
    double beta_co = 0.8;     // coefficient on the current-outcome feature
    double beta_scale = 0.5;  // scale of the other drawn coefficients
    Nonlinearity nonlinearity = Nonlinearity::Quadratic;
    double amplitude = 0.5;
    Vec noise_std;            // per arm; empty -> all ones
    NoiseKind noise_kind = NoiseKind::Gaussian;
    double contam_frac = 0.1;
    double contam_shift = 10.0;
    Assignment assignment = Assignment::OutcomeBiased;
    double bias_strength = 0.3;
    double x_co_mean = 10.0;
    double x_co_std = 2.0;
    std::uint64_t seed = 1;
};

// Dataset plus the full counterfactual table: oracle(i, m) is the outcome
// record i would realize under arm m (noise drawn once per record-arm pair,
// so the factual entry equals the recorded outcome exactly).
struct SyntheticCohort {
    Dataset dataset;
    Mat oracle; // n x M
    GeneratorConfig config;

    std::unordered_map<std::string, int> id_to_row;
};

GeneratorConfig default_generator_config();
GeneratorConfig parse_generator_config(const std::string& text);
GeneratorConfig load_generator_config(const std::string& path);
void apply_config_override(GeneratorConfig& cfg, const std::string& key,
                           const std::string& value);

SyntheticCohort generate(const GeneratorConfig& cfg);

double true_outcome(const SyntheticCohort& cohort, const std::string& record_id, int m);

// Sidecar counterfactual file: columns id, m (treatment label), y_true.
void write_oracle_csv(const SyntheticCohort& cohort, const std::string& path);

// id -> per-arm true outcomes, aligned with `treatments` label order.
struct OracleTable {
    std::unordered_map<std::string, Vec> outcomes;
    std::vector<std::string> treatments;
};

OracleTable load_oracle_csv(const std::string& path,
                            const std::vector<std::string>& treatment_labels);
OracleTable oracle_table(const SyntheticCohort& cohort);

} // namespace rxp
