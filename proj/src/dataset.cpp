#include "rxpolicy/dataset.hpp"

#include "rxpolicy/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace rxp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& cell, int row, const std::string& col) {
    const std::string t = trim(cell);
    double value = 0.0;
    const char* begin = t.data();
    const char* end = begin + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || t.empty() || !std::isfinite(value)) {
        throw DataError("non-numeric cell at row " + std::to_string(row) + ", column '" + col +
                        "': '" + cell + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << contents;
        if (!out) throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename '" + tmp + "' -> '" + path + "' failed: " + ec.message());
}

ColumnSchema load_schema_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open schema file '" + path + "'");
    ColumnSchema schema;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("schema file '" + path + "' line " + std::to_string(lineno) +
                            ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key == "id") schema.id_column = value;
        else if (key == "treatment") schema.treatment_column = value;
        else if (key == "outcome_current") schema.outcome_current_column = value;
        else if (key == "outcome_next") schema.outcome_next_column = value;
        else if (key == "treatment_labels") {
            schema.treatment_labels.clear();
            for (const auto& label : split_line(value)) schema.treatment_labels.push_back(trim(label));
        } else {
            throw DataError("schema file '" + path + "': unknown key '" + key + "'");
        }
    }
    return schema;
}

Dataset load_csv(const std::string& path, const ColumnSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CSV file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file '" + path + "' is empty");
    const std::vector<std::string> header = split_line(line);

    auto find_column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return static_cast<int>(i);
        throw DataError("CSV file '" + path + "': missing column '" + name + "'");
    };

    const int id_col = find_column(schema.id_column);
    const int treat_col = find_column(schema.treatment_column);
    const int co_col = find_column(schema.outcome_current_column);
    const int next_col = find_column(schema.outcome_next_column);

    std::vector<int> feature_cols;
    Dataset ds;
    ds.co_index = 0;
    ds.feature_names.push_back(trim(header[static_cast<std::size_t>(co_col)]));
    for (int i = 0; i < static_cast<int>(header.size()); ++i) {
        if (i == id_col || i == treat_col || i == co_col || i == next_col) continue;
        feature_cols.push_back(i);
        ds.feature_names.push_back(trim(header[static_cast<std::size_t>(i)]));
    }
    if (feature_cols.empty())
        throw DataError("CSV file '" + path + "': no feature columns beyond the required roles");

    std::unordered_map<std::string, int> label_to_index;
    const bool fixed_labels = !schema.treatment_labels.empty();
    if (fixed_labels) {
        ds.treatment_names = schema.treatment_labels;
        for (std::size_t i = 0; i < schema.treatment_labels.size(); ++i)
            label_to_index[schema.treatment_labels[i]] = static_cast<int>(i);
    }

    const int p = 1 + static_cast<int>(feature_cols.size());
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw DataError("CSV file '" + path + "' row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));

        PatientRecord rec;
        rec.id = trim(cells[static_cast<std::size_t>(id_col)]);
        const std::string label = trim(cells[static_cast<std::size_t>(treat_col)]);
        auto it = label_to_index.find(label);
        if (it == label_to_index.end()) {
            if (fixed_labels)
                throw DataError("CSV file '" + path + "' row " + std::to_string(row) +
                                ": unknown treatment label '" + label + "'");
            const int idx = static_cast<int>(ds.treatment_names.size());
            ds.treatment_names.push_back(label);
            it = label_to_index.emplace(label, idx).first;
        }
        rec.treatment = it->second;
        rec.outcome_current =
            parse_cell(cells[static_cast<std::size_t>(co_col)], row, schema.outcome_current_column);
        rec.outcome_next =
            parse_cell(cells[static_cast<std::size_t>(next_col)], row, schema.outcome_next_column);
        rec.features = Vec(p);
        rec.features[0] = rec.outcome_current;
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            rec.features[static_cast<int>(j) + 1] =
                parse_cell(cells[static_cast<std::size_t>(feature_cols[j])], row,
                           ds.feature_names[j + 1]);
        }
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw DataError("CSV file '" + path + "' has no data rows");
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
    // Canonical role names in the header regardless of internal feature
    // names, so the default schema round-trips.
    std::ostringstream out;
    out << "id,treatment,outcome_current,outcome_next";
    for (int j = 0; j < ds.p(); ++j) {
        if (j == ds.co_index) continue;
        out << ',' << ds.feature_names[static_cast<std::size_t>(j)];
    }
    out << '\n';
    for (const auto& rec : ds.records) {
        out << rec.id << ',' << ds.treatment_names[static_cast<std::size_t>(rec.treatment)] << ','
            << format_double(rec.outcome_current) << ',' << format_double(rec.outcome_next);
        for (int j = 0; j < ds.p(); ++j) {
            if (j == ds.co_index) continue;
            out << ',' << format_double(rec.features[j]);
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
    if (ds.records.empty()) throw DataError("cannot split an empty dataset");
    require(train_frac > 0.0 && train_frac < 1.0, "train_frac must lie in (0, 1)");

    const int n = ds.n();
    const int n_train = static_cast<int>(std::llround(train_frac * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<bool> in_train(static_cast<std::size_t>(n), false);
    for (int i = 0; i < n_train; ++i) in_train[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    Dataset train = ds, test = ds;
    train.records.clear();
    test.records.clear();
    for (int i = 0; i < n; ++i) {
        if (in_train[static_cast<std::size_t>(i)])
            train.records.push_back(ds.records[static_cast<std::size_t>(i)]);
        else
            test.records.push_back(ds.records[static_cast<std::size_t>(i)]);
    }
    return {std::move(train), std::move(test)};
}

NormalizationStats compute_normalization(const Dataset& train) {
    if (train.records.empty()) throw DataError("cannot compute normalization on an empty dataset");
    const int p = train.p();
    const int n = train.n();
    NormalizationStats stats;
    stats.mean = Vec::Zero(p);
    stats.std = Vec::Ones(p);
    for (const auto& rec : train.records) stats.mean += rec.features;
    stats.mean /= static_cast<double>(n);
    Vec ss = Vec::Zero(p);
    for (const auto& rec : train.records) {
        const Vec d = rec.features - stats.mean;
        ss += d.cwiseProduct(d);
    }
    for (int j = 0; j < p; ++j) {
        const double sd = std::sqrt(ss[j] / static_cast<double>(n)); // population std
        stats.std[j] = sd > 0.0 ? sd : 1.0;
    }
    return stats;
}

Dataset apply_normalization(const Dataset& ds, const NormalizationStats& stats) {
    Dataset out = ds;
    for (auto& rec : out.records)
        rec.features = (rec.features - stats.mean).cwiseQuotient(stats.std);
    out.normalization = stats;
    return out;
}

std::pair<Dataset, std::vector<Dataset>> normalize(const Dataset& train,
                                                   const std::vector<Dataset>& others) {
    const NormalizationStats stats = compute_normalization(train);
    std::vector<Dataset> mapped;
    mapped.reserve(others.size());
    for (const auto& ds : others) mapped.push_back(apply_normalization(ds, stats));
    return {apply_normalization(train, stats), std::move(mapped)};
}

std::vector<TreatmentGroup> group_by_treatment(const Dataset& ds) {
    if (ds.records.empty()) throw DataError("cannot group an empty dataset");
    const int m = ds.num_treatments();
    const int p = ds.p();
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(m));
    for (int i = 0; i < ds.n(); ++i)
        rows[static_cast<std::size_t>(ds.records[static_cast<std::size_t>(i)].treatment)].push_back(i);

    std::vector<TreatmentGroup> groups(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) {
        TreatmentGroup& g = groups[static_cast<std::size_t>(t)];
        g.treatment = t;
        const auto& idx = rows[static_cast<std::size_t>(t)];
        g.X = Mat(static_cast<int>(idx.size()), p);
        g.y = Vec(static_cast<int>(idx.size()));
        g.source_rows = idx;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto& rec = ds.records[static_cast<std::size_t>(idx[i])];
            g.X.row(static_cast<int>(i)) = rec.features.transpose();
            g.y[static_cast<int>(i)] = rec.outcome_next;
        }
    }
    return groups;
}

std::vector<int> empty_groups(const std::vector<TreatmentGroup>& groups) {
    std::vector<int> out;
    for (const auto& g : groups)
        if (g.size() == 0) out.push_back(g.treatment);
    return out;
}

} // namespace rxp
