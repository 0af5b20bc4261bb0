#pragma once

#include "rxpolicy/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rxp {

// One patient visit. `features` has fixed length p across the dataset and
// contains the current observed outcome as the component at
// Dataset::co_index. `outcome_current` keeps that value in raw units even
// after the features have been normalized; the freeze threshold compares
// against it directly.
struct PatientRecord {
    std::string id;
    Vec features;
    int treatment = 0;
    double outcome_current = 0.0;
    double outcome_next = 0.0;
};

struct NormalizationStats {
    Vec mean;
    Vec std; // constant features get std = 1 by convention
};

struct Dataset {
    std::vector<PatientRecord> records;
    std::vector<std::string> feature_names;
    std::vector<std::string> treatment_names;
    int co_index = 0;
    // Present once normalize() has been applied (training statistics).
    std::optional<NormalizationStats> normalization;

    int n() const { return static_cast<int>(records.size()); }
    int p() const { return static_cast<int>(feature_names.size()); }
    int num_treatments() const { return static_cast<int>(treatment_names.size()); }
};

// Members of one treatment group in dataset order. `source_rows` maps back
// to record indices so tie-breaking stays bit-reproducible.
struct TreatmentGroup {
    int treatment = 0;
    Mat X;              // N_m x p feature matrix
    Vec y;              // outcome_next
    std::vector<int> source_rows;

    int size() const { return static_cast<int>(y.size()); }
};

// Column-role mapping for CSV ingestion. Columns not claimed by a role are
// features. An empty `treatment_labels` means labels are assigned dense
// indices in first-appearance order; a non-empty list makes unknown labels
// an error (used when prescribing against a trained model).
struct ColumnSchema {
    std::string id_column = "id";
    std::string treatment_column = "treatment";
    std::string outcome_current_column = "outcome_current";
    std::string outcome_next_column = "outcome_next";
    std::vector<std::string> treatment_labels;
};

ColumnSchema load_schema_file(const std::string& path);

// Parses a comma-separated CSV with a header row. The outcome_current column
// is duplicated into the feature vector at co_index = 0. Throws DataError
// with row/column context on missing columns, non-numeric cells, and (when
// the schema pins labels) unknown treatments.
Dataset load_csv(const std::string& path, const ColumnSchema& schema = {});

// Inverse of load_csv for datasets whose co_index feature mirrors
// outcome_current. Writes atomically (temp file + rename).
void write_csv(const Dataset& ds, const std::string& path);

// Deterministic random partition with |train| = round(train_frac * N).
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed);

NormalizationStats compute_normalization(const Dataset& train);
Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats);

// Z-scores every dataset with the training means/stds (population std,
// constant columns pass through with std 1). outcome_current keeps raw units.
std::pair<Dataset, std::vector<Dataset>> normalize(const Dataset& train,
                                                   const std::vector<Dataset>& others);

// Always returns one group per treatment label, possibly empty; callers
// decide whether an empty arm is an error.
std::vector<TreatmentGroup> group_by_treatment(const Dataset& ds);

std::vector<int> empty_groups(const std::vector<TreatmentGroup>& groups);

// Filesystem helper shared by every writer: write to <path>.tmp, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

} // namespace rxp
