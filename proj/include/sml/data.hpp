#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sml/net.hpp"
#include "sml/rng.hpp"

namespace sml {

enum class SizeClass { small, large, very_large };

struct Dataset {
    std::string name;
    Matrix X;  // N x d
    std::vector<double> y;
    SizeClass size_class = SizeClass::small;

    std::size_t n() const { return X.rows; }
    std::size_t dim() const { return X.cols; }
};

// Column selection applied at ingestion: features = header minus target minus
// dropped columns. Loadable from a JSON manifest
// {"target": ..., "drop": [...], "features": [...]}; a non-empty feature list
// is validated against the header and used verbatim.
struct CsvSchema {
    std::string target_column;              // empty = last column
    std::vector<std::string> drop_columns;
    std::vector<std::string> feature_columns;  // empty = everything not dropped
};

inline CsvSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_schema: cannot open " + path);
    nlohmann::json j;
    in >> j;
    CsvSchema s;
    if (j.contains("target")) s.target_column = j.at("target").get<std::string>();
    if (j.contains("drop"))
        for (const auto& c : j.at("drop")) s.drop_columns.push_back(c.get<std::string>());
    if (j.contains("features"))
        for (const auto& c : j.at("features")) s.feature_columns.push_back(c.get<std::string>());
    return s;
}

// Preprocessing rules for the named UCI datasets; everything else takes the
// last column (or the schema's target) as ground truth.
inline CsvSchema builtin_schema(const std::string& name, const std::vector<std::string>& header) {
    CsvSchema s;
    if (name == "abalone") {
        if (!header.empty()) s.drop_columns.push_back(header.front());  // sex column ignored
    } else if (name == "energy") {
        // two targets: heating then cooling; keep cooling load
        if (header.size() >= 2) s.drop_columns.push_back(header[header.size() - 2]);
    } else if (name == "naval") {
        // two targets: compressor then turbine decay; keep turbine
        if (header.size() >= 2) s.drop_columns.push_back(header[header.size() - 2]);
    }
    return s;
}

inline SizeClass size_class_for(const std::string& name, std::size_t n) {
    static const std::vector<std::string> small = {"yacht", "diabetes", "boston", "energy", "concrete", "wine-red"};
    static const std::vector<std::string> large = {"abalone", "power", "naval", "california", "superconduct",
                                                   "protein"};
    if (std::find(small.begin(), small.end(), name) != small.end()) return SizeClass::small;
    if (std::find(large.begin(), large.end(), name) != large.end()) return SizeClass::large;
    if (name == "year") return SizeClass::very_large;
    if (n < 2000) return SizeClass::small;
    if (n < 100000) return SizeClass::large;
    return SizeClass::very_large;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, std::size_t row, std::size_t col) {
    std::size_t used = 0;
    double v;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::runtime_error("load_dataset: non-numeric value '" + s + "' at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
    }
    while (used < s.size() && (s[used] == ' ' || s[used] == '\r' || s[used] == '\t')) ++used;
    if (used != s.size())
        throw std::runtime_error("load_dataset: non-numeric value '" + s + "' at row " + std::to_string(row) +
                                 ", column " + std::to_string(col));
    if (!std::isfinite(v))
        throw std::runtime_error("load_dataset: non-finite value at row " + std::to_string(row) + ", column " +
                                 std::to_string(col));
    return v;
}
}  // namespace detail

// Reads a headered comma-separated file. Column handling comes from the
// explicit schema if given, otherwise from the built-in rules for the name.
inline Dataset load_dataset(const std::string& path, const std::string& name, const CsvSchema* schema = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() < 2) throw std::runtime_error("load_dataset: need at least one feature and a target column");

    CsvSchema resolved = schema ? *schema : builtin_schema(name, header);
    if (resolved.target_column.empty()) {
        std::string target = header.back();
        for (const auto& d : resolved.drop_columns)
            if (d == target) throw std::runtime_error("load_dataset: target column is listed as dropped");
        resolved.target_column = target;
    }

    std::vector<std::size_t> feature_cols;
    std::size_t target_col = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == resolved.target_column) {
            target_col = c;
            continue;
        }
        bool wanted;
        if (!resolved.feature_columns.empty()) {
            wanted = std::find(resolved.feature_columns.begin(), resolved.feature_columns.end(), header[c]) !=
                     resolved.feature_columns.end();
        } else {
            wanted = std::find(resolved.drop_columns.begin(), resolved.drop_columns.end(), header[c]) ==
                     resolved.drop_columns.end();
        }
        if (wanted) feature_cols.push_back(c);
    }
    if (target_col == header.size())
        throw std::runtime_error("load_dataset: target column '" + resolved.target_column + "' not found in header");
    if (!resolved.feature_columns.empty() && feature_cols.size() != resolved.feature_columns.size())
        throw std::runtime_error("load_dataset: schema names feature columns missing from the header");
    if (feature_cols.empty()) throw std::runtime_error("load_dataset: no feature columns left after dropping");

    std::vector<double> values;
    std::vector<double> targets;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error("load_dataset: row " + std::to_string(row) + " has " +
                                     std::to_string(fields.size()) + " fields, header has " +
                                     std::to_string(header.size()));
        for (std::size_t c : feature_cols) values.push_back(detail::parse_number(fields[c], row, c + 1));
        targets.push_back(detail::parse_number(fields[target_col], row, target_col + 1));
    }
    if (targets.size() < 10) throw std::runtime_error("load_dataset: need at least 10 rows, got " +
                                                      std::to_string(targets.size()));

    Dataset ds;
    ds.name = name;
    ds.X.rows = targets.size();
    ds.X.cols = feature_cols.size();
    ds.X.a = std::move(values);
    ds.y = std::move(targets);
    ds.size_class = size_class_for(name, ds.n());
    return ds;
}

// Per-column affine transform fitted on a row subset (population statistics).
// Zero-variance columns keep std 1 and raise the warning flag.
struct Standardizer {
    std::vector<double> x_mean, x_std;
    double y_mean = 0.0, y_std = 1.0;
    bool had_zero_variance = false;

    void apply_x(std::span<const double> x, std::span<double> out) const {
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - x_mean[j]) / x_std[j];
    }
    void invert_x(std::span<const double> x, std::span<double> out) const {
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] * x_std[j] + x_mean[j];
    }
    double apply_y(double y) const { return (y - y_mean) / y_std; }
    double invert_y(double y) const { return y * y_std + y_mean; }
    double apply_sigma(double s) const { return s / y_std; }
    double invert_sigma(double s) const { return s * y_std; }
};

inline Standardizer fit_standardizer(const Dataset& ds, std::span<const int> idx) {
    if (idx.empty()) throw std::invalid_argument("fit_standardizer: empty index set");
    const std::size_t d = ds.dim();
    const double n = static_cast<double>(idx.size());
    Standardizer st;
    st.x_mean.assign(d, 0.0);
    st.x_std.assign(d, 0.0);
    for (int i : idx) {
        const double* xr = ds.X.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < d; ++j) st.x_mean[j] += xr[j];
        st.y_mean += ds.y[static_cast<std::size_t>(i)];
    }
    for (std::size_t j = 0; j < d; ++j) st.x_mean[j] /= n;
    st.y_mean /= n;
    double yv = 0.0;
    for (int i : idx) {
        const double* xr = ds.X.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = xr[j] - st.x_mean[j];
            st.x_std[j] += dx * dx;
        }
        const double dy = ds.y[static_cast<std::size_t>(i)] - st.y_mean;
        yv += dy * dy;
    }
    for (std::size_t j = 0; j < d; ++j) {
        st.x_std[j] = std::sqrt(st.x_std[j] / n);
        if (st.x_std[j] == 0.0) {
            st.x_std[j] = 1.0;
            st.had_zero_variance = true;
        }
    }
    st.y_std = std::sqrt(yv / n);
    if (st.y_std == 0.0) {
        st.y_std = 1.0;
        st.had_zero_variance = true;
    }
    return st;
}

enum class SplitKind { iid_train, iid_test, pca_interp, pca_extrap, label_interp, label_extrap };

inline std::string split_kind_name(SplitKind k) {
    switch (k) {
        case SplitKind::iid_train: return "iid-train";
        case SplitKind::iid_test: return "iid-test";
        case SplitKind::pca_interp: return "pca-interp";
        case SplitKind::pca_extrap: return "pca-extrap";
        case SplitKind::label_interp: return "label-interp";
        case SplitKind::label_extrap: return "label-extrap";
    }
    return "?";
}

inline SplitKind parse_split_kind(const std::string& s) {
    for (SplitKind k : {SplitKind::iid_train, SplitKind::iid_test, SplitKind::pca_interp, SplitKind::pca_extrap,
                        SplitKind::label_interp, SplitKind::label_extrap})
        if (split_kind_name(k) == s) return k;
    throw std::invalid_argument("unknown split kind '" + s + "'");
}

struct DatasetSplit {
    std::vector<int> train_idx, test_idx;
    SplitKind kind = SplitKind::iid_test;
    int fold = 0;
};

inline std::vector<DatasetSplit> kfold(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > ds.n()) throw std::invalid_argument("kfold: k exceeds dataset size");
    std::vector<int> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<DatasetSplit> splits;
    const std::size_t n = ds.n();
    std::size_t start = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = n / static_cast<std::size_t>(k) + (static_cast<std::size_t>(f) < n % k ? 1 : 0);
        DatasetSplit sp;
        sp.kind = SplitKind::iid_test;
        sp.fold = f;
        sp.test_idx.assign(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(start + size));
        sp.train_idx.reserve(n - size);
        sp.train_idx.insert(sp.train_idx.end(), order.begin(), order.begin() + static_cast<long>(start));
        sp.train_idx.insert(sp.train_idx.end(), order.begin() + static_cast<long>(start + size), order.end());
        splits.push_back(std::move(sp));
        start += size;
    }
    return splits;
}

// Leading eigenvector of the covariance of the centered rows, by power
// iteration (tolerance 1e-10, at most 10^4 sweeps). The sign is fixed so the
// largest-magnitude entry is positive.
inline std::vector<double> pca_first_component(const Matrix& X) {
    if (X.rows < 2) throw std::invalid_argument("pca_first_component: need at least 2 rows");
    const std::size_t n = X.rows, d = X.cols;

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = X.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += xr[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix cov(d, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = X.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double cj = xr[j] - mean[j];
            double* cr = cov.row(j);
            for (std::size_t l = j; l < d; ++l) cr[l] += cj * (xr[l] - mean[l]);
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t l = 0; l < j; ++l) cov(j, l) = cov(l, j);
    for (double& v : cov.a) v /= static_cast<double>(n);

    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    std::vector<double> w(d);
    const int max_iter = 10000;
    for (int it = 0; it < max_iter; ++it) {
        for (std::size_t j = 0; j < d; ++j) {
            const double* cr = cov.row(j);
            double s = 0.0;
            for (std::size_t l = 0; l < d; ++l) s += cr[l] * v[l];
            w[j] = s;
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw std::runtime_error("pca_first_component: zero covariance matrix");
        double diff = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            w[j] /= norm;
            diff = std::max(diff, std::abs(w[j] - v[j]));
        }
        v.swap(w);
        if (diff <= 1e-10) {
            std::size_t imax = 0;
            for (std::size_t j = 1; j < d; ++j)
                if (std::abs(v[j]) > std::abs(v[imax])) imax = j;
            if (v[imax] < 0.0)
                for (double& x : v) x = -x;
            return v;
        }
    }
    throw std::runtime_error("pca_first_component: no convergence after " + std::to_string(max_iter) + " iterations");
}

// Sorts indices by score (ties by original index), cuts chunk_count
// near-equal contiguous chunks, and holds one out as the test set. Outer
// chunks give extrapolation, inner ones interpolation.
inline DatasetSplit directional_split(const Dataset& ds, std::span<const double> scores, int chunk_count,
                                      int held_chunk, bool label_based) {
    if (chunk_count < 3) throw std::invalid_argument("directional_split: need at least 3 chunks");
    if (held_chunk < 0 || held_chunk >= chunk_count) throw std::invalid_argument("directional_split: bad held chunk");
    if (scores.size() != ds.n()) throw std::invalid_argument("directional_split: score length mismatch");

    std::vector<int> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
    });

    const std::size_t n = ds.n();
    const std::size_t cc = static_cast<std::size_t>(chunk_count);
    DatasetSplit sp;
    const bool outer = held_chunk == 0 || held_chunk == chunk_count - 1;
    sp.kind = label_based ? (outer ? SplitKind::label_extrap : SplitKind::label_interp)
                          : (outer ? SplitKind::pca_extrap : SplitKind::pca_interp);
    sp.fold = held_chunk;

    std::size_t start = 0;
    for (std::size_t c = 0; c < cc; ++c) {
        const std::size_t size = n / cc + (c < n % cc ? 1 : 0);
        for (std::size_t i = start; i < start + size; ++i) {
            if (c == static_cast<std::size_t>(held_chunk))
                sp.test_idx.push_back(order[i]);
            else
                sp.train_idx.push_back(order[i]);
        }
        start += size;
    }
    return sp;
}

// 1-D toy with known heteroskedastic noise: x ~ U(-3,3),
// y = sin(2x) + (0.1 + 0.4|x|/3) * eps. The noise profile is the calibration
// target for the uncertainty estimators.
inline Dataset gen_heteroskedastic_toy(int n, std::uint64_t seed) {
    if (n < 100) throw std::invalid_argument("gen_heteroskedastic_toy: need n >= 100");
    Dataset ds;
    ds.name = "toy";
    ds.X = Matrix(static_cast<std::size_t>(n), 1);
    ds.y.resize(static_cast<std::size_t>(n));
    ds.size_class = SizeClass::small;
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        const double noise = 0.1 + 0.4 * std::abs(x) / 3.0;
        ds.X(i, 0) = x;
        ds.y[i] = std::sin(2.0 * x) + noise * rng.normal();
    }
    return ds;
}

inline double toy_noise_sigma(double x) { return 0.1 + 0.4 * std::abs(x) / 3.0; }

struct ScatterPair {
    double r, sigma;
};

// Hypothetical-ideal residual/uncertainty pairs: sigma ~ U(0,2), r ~ N(0, sigma).
inline std::vector<ScatterPair> gen_ideal_scatter(int n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("gen_ideal_scatter: need n >= 2");
    std::vector<ScatterPair> out(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (auto& p : out) {
        p.sigma = rng.uniform(0.0, 2.0);
        p.r = p.sigma * rng.normal();
    }
    return out;
}

inline nlohmann::json split_to_json(const DatasetSplit& sp) {
    return nlohmann::json{{"kind", split_kind_name(sp.kind)},
                          {"fold", sp.fold},
                          {"train_idx", sp.train_idx},
                          {"test_idx", sp.test_idx}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
    DatasetSplit sp;
    sp.kind = parse_split_kind(j.at("kind").get<std::string>());
    sp.fold = j.at("fold").get<int>();
    sp.train_idx = j.at("train_idx").get<std::vector<int>>();
    sp.test_idx = j.at("test_idx").get<std::vector<int>>();
    return sp;
}

}  // namespace sml
