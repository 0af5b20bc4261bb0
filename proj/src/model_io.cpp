#include "rxpolicy/model_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace rxp {

namespace {

const char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string hex(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double unhex(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + s.size())
        throw DataError("model file: malformed numeric field '" + s + "'");
    return v;
}

std::string encode_vec(const Vec& v) {
    return base64_encode(reinterpret_cast<const unsigned char*>(v.data()),
                         static_cast<std::size_t>(v.size()) * sizeof(double));
}

Vec decode_vec(const std::string& text) {
    const std::string bytes = base64_decode(text);
    if (bytes.size() % sizeof(double) != 0)
        throw DataError("model file: vector blob has invalid length");
    Vec v(static_cast<int>(bytes.size() / sizeof(double)));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back(',');
        out += items[i];
    }
    return out;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

class Writer {
public:
    void put(const std::string& key, const std::string& value) {
        out_ << key << '\t' << value << '\n';
    }
    void put(const std::string& key, double value) { put(key, hex(value)); }
    void put(const std::string& key, int value) { put(key, std::to_string(value)); }
    void put(const std::string& key, std::uint64_t value) { put(key, std::to_string(value)); }
    void put(const std::string& key, const Vec& value) { put(key, encode_vec(value)); }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos)
                throw DataError("model file: malformed line '" + line + "'");
            fields_[line.substr(0, tab)] = line.substr(tab + 1);
        }
    }

    const std::string& str(const std::string& key) const {
        const auto it = fields_.find(key);
        if (it == fields_.end()) throw DataError("model file: missing field '" + key + "'");
        return it->second;
    }
    double num(const std::string& key) const { return unhex(str(key)); }
    int integer(const std::string& key) const { return std::stoi(str(key)); }
    std::uint64_t u64(const std::string& key) const { return std::stoull(str(key)); }
    Vec vec(const std::string& key) const { return decode_vec(str(key)); }

private:
    std::unordered_map<std::string, std::string> fields_;
};

std::string key_for(const char* prefix, std::size_t i, const char* field) {
    return std::string(prefix) + "." + std::to_string(i) + "." + field;
}

void put_linear(Writer& w, const std::string& prefix, const CenteredLinear& lin) {
    w.put(prefix + ".x_mean", lin.x_mean);
    w.put(prefix + ".y_mean", lin.y_mean);
    w.put(prefix + ".beta", lin.beta);
}

CenteredLinear get_linear(const Reader& r, const std::string& prefix) {
    CenteredLinear lin;
    lin.x_mean = r.vec(prefix + ".x_mean");
    lin.y_mean = r.num(prefix + ".y_mean");
    lin.beta = r.vec(prefix + ".beta");
    return lin;
}

std::string doubles_csv(const std::vector<double>& v) {
    std::vector<std::string> items;
    for (double x : v) items.push_back(hex(x));
    return join(items);
}

std::vector<double> csv_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_commas(s)) out.push_back(unhex(item));
    return out;
}

std::string ints_csv(const std::vector<int>& v) {
    std::vector<std::string> items;
    for (int x : v) items.push_back(std::to_string(x));
    return join(items);
}

std::vector<int> csv_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split_commas(s)) out.push_back(std::stoi(item));
    return out;
}

} // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned int block = static_cast<unsigned int>(data[i]) << 16;
        if (i + 1 < len) block |= static_cast<unsigned int>(data[i + 1]) << 8;
        if (i + 2 < len) block |= static_cast<unsigned int>(data[i + 2]);
        out.push_back(kB64Alphabet[(block >> 18) & 0x3f]);
        out.push_back(kB64Alphabet[(block >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kB64Alphabet[(block >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kB64Alphabet[block & 0x3f] : '=');
    }
    return out;
}

std::string base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw DataError("base64: length must be a multiple of 4");
    int lookup[256];
    std::fill(std::begin(lookup), std::end(lookup), -1);
    for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Alphabet[i])] = i;

    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        unsigned int block = 0;
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + static_cast<std::size_t>(j)];
            block <<= 6;
            if (c == '=') {
                ++pad;
            } else {
                const int v = lookup[static_cast<unsigned char>(c)];
                if (v < 0 || pad > 0) throw DataError("base64: invalid character");
                block |= static_cast<unsigned int>(v);
            }
        }
        out.push_back(static_cast<char>((block >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<char>((block >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<char>(block & 0xff));
    }
    return out;
}

void save_model(const TrainedPipeline& pipe, const std::string& path) {
    Writer w;
    const Dataset& ds = pipe.train_raw;
    const int n = ds.n();
    const int p = ds.p();

    w.put("feature_names", join(ds.feature_names));
    w.put("treatment_names", join(ds.treatment_names));
    w.put("co_index", ds.co_index);
    w.put("seed", pipe.seed);

    w.put("stats.mean", pipe.stats.mean);
    w.put("stats.std", pipe.stats.std);

    // Raw training records: the K-NN reference pool and the re-splittable
    // source for the evaluation harness.
    {
        std::vector<std::string> ids;
        std::vector<int> treatments;
        Vec features(static_cast<int>(n) * p), current(n), next(n);
        for (int i = 0; i < n; ++i) {
            const auto& rec = ds.records[static_cast<std::size_t>(i)];
            ids.push_back(rec.id);
            treatments.push_back(rec.treatment);
            features.segment(i * p, p) = rec.features;
            current[i] = rec.outcome_current;
            next[i] = rec.outcome_next;
        }
        w.put("train.n", n);
        w.put("train.ids", join(ids));
        w.put("train.treatments", ints_csv(treatments));
        w.put("train.features", features);
        w.put("train.outcome_current", current);
        w.put("train.outcome_next", next);
    }

    const auto& o = pipe.opts;
    w.put("opts.r_grid", doubles_csv(o.r_grid));
    w.put("opts.k_grid", ints_csv(o.k_grid));
    w.put("opts.xi_grid", doubles_csv(o.xi_grid));
    w.put("opts.lasso_grid", doubles_csv(o.lasso_grid));
    w.put("opts.cart_depth_grid", ints_csv(o.cart_depth_grid));
    w.put("opts.cart_min_leaf", o.cart_min_leaf);
    w.put("opts.folds", o.folds);
    w.put("opts.solver_tol", o.solver.tolerance);
    w.put("opts.solver_max_iters", o.solver.max_iters);
    w.put("opts.k_rule", o.k_rule == KRuleMode::SqrtLaw ? 1 : 0);
    w.put("opts.eps_bar", o.eps_bar);
    w.put("opts.subsample_frac", o.subsample_frac);
    w.put("opts.subsample_reps", o.subsample_reps);
    w.put("opts.huber_k", o.huber_k);

    w.put("group_count", static_cast<int>(pipe.group_models.size()));
    for (std::size_t m = 0; m < pipe.group_models.size(); ++m) {
        const GroupModel& g = pipe.group_models[m];
        put_linear(w, key_for("group", m, "linear"), g.linear);
        w.put(key_for("group", m, "r"), g.r);
        w.put(key_for("group", m, "objective"), g.objective);
        w.put(key_for("group", m, "weights"), g.knn_weights);
        w.put(key_for("group", m, "tuned_k"), g.tuned_k);
        w.put(key_for("group", m, "k"), g.k);
    }

    w.put("krule.a", pipe.krule.a);
    w.put("krule.b", pipe.krule.b);
    w.put("krule.valid", pipe.krule_valid ? 1 : 0);

    put_linear(w, "imputation.linear", pipe.imputation.linear);
    w.put("imputation.weights", pipe.imputation.weights);
    w.put("imputation.r", pipe.imputation.r);

    w.put("ensemble.a", pipe.ensemble.a);
    w.put("ensemble.d", pipe.ensemble.d);
    for (std::size_t m = 0; m < pipe.ensemble.fits.size(); ++m)
        for (std::size_t i = 0; i < pipe.ensemble.fits[m].size(); ++i)
            put_linear(w, key_for("ensemble", m, std::to_string(i).c_str()),
                       pipe.ensemble.fits[m][i]);

    w.put("xi", pipe.xi);
    w.put("xi_scale", pipe.xi_scale);

    write_file_atomic(path, std::string(kModelFormatVersion) + "\n" + w.str());
}

TrainedPipeline load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::string version;
    if (!std::getline(in, version)) throw DataError("model file '" + path + "' is empty");
    if (!version.empty() && version.back() == '\r') version.pop_back();
    if (version != kModelFormatVersion)
        throw DataError("model file '" + path + "': version '" + version +
                        "' does not match expected '" + kModelFormatVersion + "'");

    const Reader r(in);
    TrainedPipeline pipe;

    Dataset& ds = pipe.train_raw;
    ds.feature_names = split_commas(r.str("feature_names"));
    ds.treatment_names = split_commas(r.str("treatment_names"));
    ds.co_index = r.integer("co_index");
    pipe.seed = r.u64("seed");

    pipe.stats.mean = r.vec("stats.mean");
    pipe.stats.std = r.vec("stats.std");

    {
        const int n = r.integer("train.n");
        const int p = static_cast<int>(ds.feature_names.size());
        const auto ids = split_commas(r.str("train.ids"));
        const auto treatments = csv_ints(r.str("train.treatments"));
        const Vec features = r.vec("train.features");
        const Vec current = r.vec("train.outcome_current");
        const Vec next = r.vec("train.outcome_next");
        if (static_cast<int>(ids.size()) != n || static_cast<int>(treatments.size()) != n ||
            features.size() != static_cast<long>(n) * p || current.size() != n ||
            next.size() != n)
            throw DataError("model file '" + path + "': inconsistent training blob sizes");
        for (int i = 0; i < n; ++i) {
            PatientRecord rec;
            rec.id = ids[static_cast<std::size_t>(i)];
            rec.treatment = treatments[static_cast<std::size_t>(i)];
            rec.features = features.segment(i * p, p);
            rec.outcome_current = current[i];
            rec.outcome_next = next[i];
            ds.records.push_back(std::move(rec));
        }
    }

    TrainOptions& o = pipe.opts;
    o.r_grid = csv_doubles(r.str("opts.r_grid"));
    o.k_grid = csv_ints(r.str("opts.k_grid"));
    o.xi_grid = csv_doubles(r.str("opts.xi_grid"));
    o.lasso_grid = csv_doubles(r.str("opts.lasso_grid"));
    o.cart_depth_grid = csv_ints(r.str("opts.cart_depth_grid"));
    o.cart_min_leaf = r.integer("opts.cart_min_leaf");
    o.folds = r.integer("opts.folds");
    o.solver.tolerance = r.num("opts.solver_tol");
    o.solver.max_iters = r.integer("opts.solver_max_iters");
    o.k_rule = r.integer("opts.k_rule") == 1 ? KRuleMode::SqrtLaw : KRuleMode::Cv;
    o.eps_bar = r.num("opts.eps_bar");
    o.subsample_frac = r.num("opts.subsample_frac");
    o.subsample_reps = r.integer("opts.subsample_reps");
    o.huber_k = r.num("opts.huber_k");

    const int groups = r.integer("group_count");
    for (int m = 0; m < groups; ++m) {
        GroupModel g;
        g.linear = get_linear(r, key_for("group", static_cast<std::size_t>(m), "linear"));
        g.r = r.num(key_for("group", static_cast<std::size_t>(m), "r"));
        g.objective = r.num(key_for("group", static_cast<std::size_t>(m), "objective"));
        g.knn_weights = r.vec(key_for("group", static_cast<std::size_t>(m), "weights"));
        g.tuned_k = r.integer(key_for("group", static_cast<std::size_t>(m), "tuned_k"));
        g.k = r.integer(key_for("group", static_cast<std::size_t>(m), "k"));
        pipe.group_models.push_back(std::move(g));
    }

    pipe.krule.a = r.num("krule.a");
    pipe.krule.b = r.num("krule.b");
    pipe.krule_valid = r.integer("krule.valid") == 1;

    pipe.imputation.linear = get_linear(r, "imputation.linear");
    pipe.imputation.weights = r.vec("imputation.weights");
    pipe.imputation.r = r.num("imputation.r");

    pipe.ensemble.a = r.integer("ensemble.a");
    pipe.ensemble.d = r.integer("ensemble.d");
    pipe.ensemble.fits.resize(static_cast<std::size_t>(groups));
    for (int m = 0; m < groups; ++m)
        for (int i = 0; i < pipe.ensemble.d; ++i)
            pipe.ensemble.fits[static_cast<std::size_t>(m)].push_back(get_linear(
                r, key_for("ensemble", static_cast<std::size_t>(m), std::to_string(i).c_str())));

    pipe.xi = r.num("xi");
    pipe.xi_scale = r.num("xi_scale");

    pipe.rebuild_derived();
    return pipe;
}

} // namespace rxp
