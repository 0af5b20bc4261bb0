#include "rxpolicy/synth.hpp"

#include "rxpolicy/rng.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rxp {

namespace {

class InvalidConfig : public UsageError {
public:
    explicit InvalidConfig(const std::string& what) : UsageError("generator config: " + what) {}
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("value '" + s + "' for key '" + key + "' is not a finite number");
    }
}

long long to_int(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidConfig("value '" + s + "' for key '" + key + "' is not an integer");
    }
}

std::vector<double> to_double_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item), key));
    return out;
}

void validate(const GeneratorConfig& cfg) {
    if (cfg.n < 1) throw InvalidConfig("n must be >= 1");
    if (cfg.p < 1) throw InvalidConfig("p must be >= 1");
    if (cfg.m < 1) throw InvalidConfig("m must be >= 1");
    if (cfg.co_index < 0 || cfg.co_index >= cfg.p)
        throw InvalidConfig("co_index must lie in [0, p)");
    if (cfg.beta_star.size() != 0 &&
        (cfg.beta_star.rows() != cfg.m || cfg.beta_star.cols() != cfg.p))
        throw InvalidConfig("beta matrix must be M x p");
    if (cfg.noise_std.size() != 0) {
        if (cfg.noise_std.size() != cfg.m) throw InvalidConfig("noise_std needs one entry per arm");
        if (cfg.noise_std.minCoeff() <= 0.0) throw InvalidConfig("noise_std must be > 0");
    }
    if (cfg.contam_frac < 0.0 || cfg.contam_frac >= 0.5)
        throw InvalidConfig("contamination fraction must lie in [0, 0.5)");
    if (cfg.bias_strength < 0.0 || cfg.bias_strength > 1.0)
        throw InvalidConfig("bias_strength must lie in [0, 1]");
    if (cfg.x_co_std <= 0.0) throw InvalidConfig("x_co_std must be > 0");
    if (cfg.amplitude < 0.0) throw InvalidConfig("amplitude must be >= 0");
}

} // namespace

GeneratorConfig default_generator_config() { return {}; }

void apply_config_override(GeneratorConfig& cfg, const std::string& rawkey,
                           const std::string& rawvalue) {
    const std::string key = trim(rawkey);
    const std::string value = trim(rawvalue);
    if (key == "n") cfg.n = static_cast<int>(to_int(value, key));
    else if (key == "p") cfg.p = static_cast<int>(to_int(value, key));
    else if (key == "m") cfg.m = static_cast<int>(to_int(value, key));
    else if (key == "co_index") cfg.co_index = static_cast<int>(to_int(value, key));
    else if (key == "beta_co") cfg.beta_co = to_double(value, key);
    else if (key == "beta_scale") cfg.beta_scale = to_double(value, key);
    else if (key == "amplitude") cfg.amplitude = to_double(value, key);
    else if (key == "contam_frac") cfg.contam_frac = to_double(value, key);
    else if (key == "contam_shift") cfg.contam_shift = to_double(value, key);
    else if (key == "bias_strength") cfg.bias_strength = to_double(value, key);
    else if (key == "x_co_mean") cfg.x_co_mean = to_double(value, key);
    else if (key == "x_co_std") cfg.x_co_std = to_double(value, key);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(value, key));
    else if (key == "nonlinearity") {
        if (value == "none") cfg.nonlinearity = Nonlinearity::None;
        else if (value == "quadratic") cfg.nonlinearity = Nonlinearity::Quadratic;
        else if (value == "radial") cfg.nonlinearity = Nonlinearity::Radial;
        else throw InvalidConfig("nonlinearity must be none|quadratic|radial");
    } else if (key == "noise_kind") {
        if (value == "gaussian") cfg.noise_kind = NoiseKind::Gaussian;
        else if (value == "laplace") cfg.noise_kind = NoiseKind::Laplace;
        else if (value == "contaminated") cfg.noise_kind = NoiseKind::Contaminated;
        else throw InvalidConfig("noise_kind must be gaussian|laplace|contaminated");
    } else if (key == "assignment") {
        if (value == "random") cfg.assignment = Assignment::Random;
        else if (value == "biased" || value == "outcome-biased")
            cfg.assignment = Assignment::OutcomeBiased;
        else throw InvalidConfig("assignment must be random|outcome-biased");
    } else if (key == "noise_std") {
        const auto vals = to_double_list(value, key);
        cfg.noise_std = Eigen::Map<const Vec>(vals.data(), static_cast<int>(vals.size()));
    } else if (key.rfind("beta.", 0) == 0) {
        const int arm = static_cast<int>(to_int(key.substr(5), key));
        const auto vals = to_double_list(value, key);
        if (cfg.beta_star.size() == 0) cfg.beta_star = Mat::Zero(cfg.m, cfg.p);
        if (arm < 0 || arm >= cfg.beta_star.rows() ||
            static_cast<int>(vals.size()) != cfg.beta_star.cols())
            throw InvalidConfig("beta." + std::to_string(arm) + " must list p values for a valid arm");
        for (std::size_t j = 0; j < vals.size(); ++j)
            cfg.beta_star(arm, static_cast<int>(j)) = vals[j];
    } else {
        throw InvalidConfig("unknown key '" + key + "'");
    }
}

GeneratorConfig parse_generator_config(const std::string& text) {
    GeneratorConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("expected 'key = value', got '" + t + "'");
        apply_config_override(cfg, t.substr(0, eq), t.substr(eq + 1));
    }
    validate(cfg);
    return cfg;
}

GeneratorConfig load_generator_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_generator_config(buf.str());
}

SyntheticCohort generate(const GeneratorConfig& input_cfg) {
    GeneratorConfig cfg = input_cfg;
    validate(cfg);
    if (cfg.noise_std.size() == 0) cfg.noise_std = Vec::Ones(cfg.m);

    Rng beta_rng(derive_seed(cfg.seed, 0xb17a));
    if (cfg.beta_star.size() == 0) {
        cfg.beta_star = Mat(cfg.m, cfg.p);
        for (int m = 0; m < cfg.m; ++m)
            for (int j = 0; j < cfg.p; ++j)
                cfg.beta_star(m, j) = j == cfg.co_index ? cfg.beta_co
                                                        : cfg.beta_scale * beta_rng.normal();
    }

    // Arm-specific nonlinearity parameters, fixed by the seed.
    std::vector<Mat> quad(static_cast<std::size_t>(cfg.m));
    std::vector<Vec> centers(static_cast<std::size_t>(cfg.m));
    Rng shape_rng(derive_seed(cfg.seed, 0x5af3));
    for (int m = 0; m < cfg.m; ++m) {
        Mat q(cfg.p, cfg.p);
        for (int i = 0; i < cfg.p; ++i)
            for (int j = 0; j <= i; ++j) {
                const double v = shape_rng.normal();
                q(i, j) = v;
                q(j, i) = v;
            }
        quad[static_cast<std::size_t>(m)] = q;
        Vec c(cfg.p);
        for (int j = 0; j < cfg.p; ++j) c[j] = shape_rng.normal();
        centers[static_cast<std::size_t>(m)] = c;
    }

    // The nonlinearity acts on internally standardized coordinates (the
    // current-outcome feature is drawn in raw units, the rest are already
    // standard normal), so the amplitude controls its size regardless of the
    // outcome scale.
    auto h = [&](int m, const Vec& x) -> double {
        if (cfg.nonlinearity == Nonlinearity::None) return 0.0;
        Vec z = x;
        z[cfg.co_index] = (x[cfg.co_index] - cfg.x_co_mean) / cfg.x_co_std;
        switch (cfg.nonlinearity) {
        case Nonlinearity::Quadratic:
            return cfg.amplitude * z.dot(quad[static_cast<std::size_t>(m)] * z) /
                   static_cast<double>(cfg.p);
        case Nonlinearity::Radial:
            return cfg.amplitude *
                   std::exp(-(z - centers[static_cast<std::size_t>(m)]).squaredNorm());
        default:
            return 0.0;
        }
    };

    SyntheticCohort cohort;
    cohort.config = cfg;
    cohort.oracle = Mat(cfg.n, cfg.m);

    Dataset& ds = cohort.dataset;
    ds.co_index = cfg.co_index;
    for (int j = 0; j < cfg.p; ++j)
        ds.feature_names.push_back(j == cfg.co_index ? "outcome_current" : "f" + std::to_string(j));
    for (int m = 0; m < cfg.m; ++m) ds.treatment_names.push_back("t" + std::to_string(m));

    char idbuf[32];
    for (int i = 0; i < cfg.n; ++i) {
        Rng rng(derive_seed(cfg.seed, 0x7ec0, static_cast<std::uint64_t>(i)));
        PatientRecord rec;
        std::snprintf(idbuf, sizeof(idbuf), "r%06d", i);
        rec.id = idbuf;
        rec.features = Vec(cfg.p);
        for (int j = 0; j < cfg.p; ++j) rec.features[j] = rng.normal();
        rec.features[cfg.co_index] = rng.normal(cfg.x_co_mean, cfg.x_co_std);
        rec.outcome_current = rec.features[cfg.co_index];

        for (int m = 0; m < cfg.m; ++m) {
            double eps = 0.0;
            switch (cfg.noise_kind) {
            case NoiseKind::Gaussian:
                eps = cfg.noise_std[m] * rng.normal();
                break;
            case NoiseKind::Laplace:
                eps = rng.laplace_with_std(cfg.noise_std[m]);
                break;
            case NoiseKind::Contaminated:
                eps = cfg.noise_std[m] * rng.normal();
                if (rng.uniform() < cfg.contam_frac) eps += cfg.contam_shift;
                break;
            }
            cohort.oracle(i, m) =
                rec.features.dot(cfg.beta_star.row(m).transpose()) + h(m, rec.features) + eps;
        }

        int assigned = 0;
        switch (cfg.assignment) {
        case Assignment::Random:
            assigned = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.m)));
            break;
        case Assignment::OutcomeBiased: {
            int best = 0;
            for (int m = 1; m < cfg.m; ++m)
                if (cohort.oracle(i, m) < cohort.oracle(i, best)) best = m;
            assigned = rng.uniform() < cfg.bias_strength
                           ? best
                           : static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.m)));
            break;
        }
        }
        rec.treatment = assigned;
        rec.outcome_next = cohort.oracle(i, assigned);
        cohort.id_to_row.emplace(rec.id, i);
        ds.records.push_back(std::move(rec));
    }
    return cohort;
}

double true_outcome(const SyntheticCohort& cohort, const std::string& record_id, int m) {
    const auto it = cohort.id_to_row.find(record_id);
    if (it == cohort.id_to_row.end())
        throw DataError("true_outcome: unknown record id '" + record_id + "'");
    if (m < 0 || m >= cohort.oracle.cols())
        throw UsageError("true_outcome: treatment index " + std::to_string(m) + " out of range");
    return cohort.oracle(it->second, m);
}

void write_oracle_csv(const SyntheticCohort& cohort, const std::string& path) {
    std::ostringstream out;
    out << "id,m,y_true\n";
    char buf[64];
    for (int i = 0; i < cohort.dataset.n(); ++i) {
        for (int m = 0; m < cohort.oracle.cols(); ++m) {
            std::snprintf(buf, sizeof(buf), "%.17g", cohort.oracle(i, m));
            out << cohort.dataset.records[static_cast<std::size_t>(i)].id << ','
                << cohort.dataset.treatment_names[static_cast<std::size_t>(m)] << ',' << buf << '\n';
        }
    }
    write_file_atomic(path, out.str());
}

OracleTable load_oracle_csv(const std::string& path,
                            const std::vector<std::string>& treatment_labels) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open oracle file '" + path + "'");
    OracleTable table;
    table.treatments = treatment_labels;

    std::unordered_map<std::string, int> label_to_index;
    for (std::size_t i = 0; i < treatment_labels.size(); ++i)
        label_to_index[treatment_labels[i]] = static_cast<int>(i);

    std::string line;
    if (!std::getline(in, line)) throw DataError("oracle file '" + path + "' is empty");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        const std::string t = trim(line);
        if (t.empty()) continue;
        std::stringstream ss(t);
        std::string id, label, value;
        if (!std::getline(ss, id, ',') || !std::getline(ss, label, ',') ||
            !std::getline(ss, value, ','))
            throw DataError("oracle file '" + path + "' row " + std::to_string(row) +
                            ": expected id,m,y_true");
        const auto it = label_to_index.find(trim(label));
        if (it == label_to_index.end())
            throw DataError("oracle file '" + path + "' row " + std::to_string(row) +
                            ": unknown treatment label '" + label + "'");
        auto& vec = table.outcomes[trim(id)];
        if (vec.size() == 0) {
            vec = Vec::Constant(static_cast<int>(treatment_labels.size()),
                                std::numeric_limits<double>::quiet_NaN());
        }
        vec[it->second] = to_double(trim(value), "y_true");
    }
    return table;
}

OracleTable oracle_table(const SyntheticCohort& cohort) {
    OracleTable table;
    table.treatments = cohort.dataset.treatment_names;
    for (int i = 0; i < cohort.dataset.n(); ++i)
        table.outcomes[cohort.dataset.records[static_cast<std::size_t>(i)].id] =
            cohort.oracle.row(i).transpose();
    return table;
}

} // namespace rxp
