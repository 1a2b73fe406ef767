#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sml/analysis.hpp"
#include "sml/data.hpp"
#include "sml/estimators.hpp"
#include "sml/metrics.hpp"

namespace sml {

// Bad user input (config file or flags); maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string dataset = "toy";  // "toy" uses the built-in generator
    std::string dataset_path;     // default: data/<name>.csv
    std::string schema_path;
    std::string out_dir = "out";
    std::vector<Method> methods{Method::sml};
    std::vector<SplitKind> splits{SplitKind::iid_test};
    int folds = 0;       // 0 = resolve from dataset size class
    int epochs = 0;      // 0 = resolve
    int batch_size = 0;  // 0 = resolve
    double learning_rate = 0.0;  // 0 = resolve
    double beta = 0.5;
    double keep_prob = 0.9;
    int sample_count = 200;
    int ece_bins = 10;
    int chunk_count = 10;
    int held_interp_chunk = 5;
    int held_extrap_chunk = 9;
    int toy_n = 2000;
    int jobs = 0;  // 0 = hardware concurrency
    std::uint64_t seed = 0;
    bool save_models = true;
};

// Epochs, batch size, fold count and learning rate follow the dataset size
// class unless set explicitly; `california` trains with the reduced rate.
inline void resolve_defaults(ExperimentConfig& cfg, SizeClass size_class) {
    const bool small = size_class == SizeClass::small;
    if (cfg.folds == 0) cfg.folds = small ? 10 : 5;
    if (cfg.epochs == 0) cfg.epochs = small ? 1000 : 150;
    if (cfg.batch_size == 0) cfg.batch_size = size_class == SizeClass::very_large ? 500 : 100;
    if (cfg.learning_rate == 0.0) cfg.learning_rate = cfg.dataset == "california" ? 1e-4 : 1e-3;
}

// --- minimal flat TOML-style config file: key = value, '#' comments ---

namespace detail {
inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string parse_config_string(const std::string& v, int line_no) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"')
        throw ConfigError("config line " + std::to_string(line_no) + ": expected a quoted string, got " + v);
    return v.substr(1, v.size() - 2);
}

inline std::vector<std::string> parse_config_list(const std::string& v, int line_no) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": expected [ ... ], got " + v);
    std::vector<std::string> items;
    std::string inner = v.substr(1, v.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        if (item.front() == '"') item = parse_config_string(item, line_no);
        items.push_back(item);
    }
    return items;
}

inline double parse_config_number(const std::string& v, int line_no) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected a number, got " + v);
    }
}
}  // namespace detail

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));

        if (key == "dataset") cfg.dataset = detail::parse_config_string(val, line_no);
        else if (key == "dataset_path") cfg.dataset_path = detail::parse_config_string(val, line_no);
        else if (key == "schema_path") cfg.schema_path = detail::parse_config_string(val, line_no);
        else if (key == "out") cfg.out_dir = detail::parse_config_string(val, line_no);
        else if (key == "methods") {
            cfg.methods.clear();
            for (const auto& m : detail::parse_config_list(val, line_no)) cfg.methods.push_back(parse_method(m));
        } else if (key == "splits") {
            cfg.splits.clear();
            for (const auto& s : detail::parse_config_list(val, line_no)) cfg.splits.push_back(parse_split_kind(s));
        } else if (key == "folds") cfg.folds = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "epochs") cfg.epochs = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "learning_rate") cfg.learning_rate = detail::parse_config_number(val, line_no);
        else if (key == "beta") cfg.beta = detail::parse_config_number(val, line_no);
        else if (key == "keep_prob") cfg.keep_prob = detail::parse_config_number(val, line_no);
        else if (key == "sample_count") cfg.sample_count = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "bins") cfg.ece_bins = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "chunk_count") cfg.chunk_count = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "held_interp_chunk") cfg.held_interp_chunk = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "held_extrap_chunk") cfg.held_extrap_chunk = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "toy_n") cfg.toy_n = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "jobs") cfg.jobs = static_cast<int>(detail::parse_config_number(val, line_no));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_config_number(val, line_no));
        else if (key == "save_models") cfg.save_models = val == "true";
        else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
}

// --- run planning and execution ---

inline Matrix gather_rows(const Matrix& X, std::span<const int> idx) {
    Matrix out(idx.size(), X.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = X.row(static_cast<std::size_t>(idx[i]));
        std::copy(src, src + X.cols, out.row(i));
    }
    return out;
}

inline std::vector<double> gather(std::span<const double> v, std::span<const int> idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[static_cast<std::size_t>(idx[i])];
    return out;
}

struct RunSpec {
    Method method;
    SplitKind kind;
    int fold;
    const DatasetSplit* split;
    std::uint64_t run_seed;
    std::string label;
};

struct RunOutcome {
    MetricReport report;
    bool failed = false;
    std::string error;
};

inline std::string run_label(const ExperimentConfig& cfg, Method m, SplitKind k, int fold) {
    char beta[32];
    std::snprintf(beta, sizeof beta, "%g", cfg.beta);
    return "method=" + method_name(m) + "|dataset=" + cfg.dataset + "|split=" + split_kind_name(k) +
           "|fold=" + std::to_string(fold) + "|beta=" + beta;
}

inline Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "toy") return gen_heteroskedastic_toy(cfg.toy_n, derive_seed(cfg.seed, "toy-data"));
    const std::string path = cfg.dataset_path.empty() ? "data/" + cfg.dataset + ".csv" : cfg.dataset_path;
    if (!cfg.schema_path.empty()) {
        const CsvSchema schema = load_schema(cfg.schema_path);
        return load_dataset(path, cfg.dataset, &schema);
    }
    return load_dataset(path, cfg.dataset);
}

// The splits for every requested kind. iid-train and iid-test share the same
// k-fold partition; directional kinds hold out the configured chunk. PCA
// scores are projections of globally standardized features onto the first
// principal component (the projection is used only for splitting).
inline std::vector<DatasetSplit> build_splits(const Dataset& ds, const ExperimentConfig& cfg) {
    std::vector<DatasetSplit> out;
    const bool wants_iid = std::find(cfg.splits.begin(), cfg.splits.end(), SplitKind::iid_train) != cfg.splits.end() ||
                           std::find(cfg.splits.begin(), cfg.splits.end(), SplitKind::iid_test) != cfg.splits.end();
    std::vector<DatasetSplit> folds;
    if (wants_iid) folds = kfold(ds, cfg.folds, derive_seed(cfg.seed, "kfold"));

    std::vector<double> pca_scores;
    const bool wants_pca = std::find(cfg.splits.begin(), cfg.splits.end(), SplitKind::pca_interp) != cfg.splits.end() ||
                           std::find(cfg.splits.begin(), cfg.splits.end(), SplitKind::pca_extrap) != cfg.splits.end();
    if (wants_pca) {
        std::vector<int> all(ds.n());
        std::iota(all.begin(), all.end(), 0);
        const Standardizer st = fit_standardizer(ds, all);
        Matrix Z(ds.n(), ds.dim());
        for (std::size_t i = 0; i < ds.n(); ++i) st.apply_x({ds.X.row(i), ds.dim()}, {Z.row(i), Z.cols});
        const std::vector<double> pc = pca_first_component(Z);
        pca_scores.resize(ds.n());
        for (std::size_t i = 0; i < ds.n(); ++i) {
            double s = 0.0;
            const double* zr = Z.row(i);
            for (std::size_t j = 0; j < ds.dim(); ++j) s += zr[j] * pc[j];
            pca_scores[i] = s;
        }
    }

    for (SplitKind k : cfg.splits) {
        switch (k) {
            case SplitKind::iid_train:
            case SplitKind::iid_test:
                for (const auto& f : folds) {
                    DatasetSplit sp = f;
                    sp.kind = k;
                    out.push_back(std::move(sp));
                }
                break;
            case SplitKind::pca_interp:
                out.push_back(directional_split(ds, pca_scores, cfg.chunk_count, cfg.held_interp_chunk, false));
                break;
            case SplitKind::pca_extrap:
                out.push_back(directional_split(ds, pca_scores, cfg.chunk_count, cfg.held_extrap_chunk, false));
                break;
            case SplitKind::label_interp:
                out.push_back(directional_split(ds, ds.y, cfg.chunk_count, cfg.held_interp_chunk, true));
                break;
            case SplitKind::label_extrap:
                out.push_back(directional_split(ds, ds.y, cfg.chunk_count, cfg.held_extrap_chunk, true));
                break;
        }
    }
    return out;
}

// Train one run and evaluate it on its evaluation rows. Metrics are computed
// on the standardized target scale (the scale the paper reports).
inline MetricReport execute_run(const Dataset& ds, const ExperimentConfig& cfg, const RunSpec& run) {
    const std::vector<int>& eval_idx = run.kind == SplitKind::iid_train ? run.split->train_idx : run.split->test_idx;

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.beta = cfg.beta;
    tc.keep_prob = cfg.keep_prob;
    tc.sample_count = cfg.sample_count;
    tc.seed = run.run_seed;

    const Matrix X_train = gather_rows(ds.X, run.split->train_idx);
    const std::vector<double> y_train = gather(ds.y, run.split->train_idx);
    const TrainedModel model = train_estimator(run.method, X_train, y_train, tc);

    Rng predict_rng(derive_seed(run.run_seed, "predict"));
    std::vector<double> mu_s(eval_idx.size()), sigma_s(eval_idx.size()), y_s(eval_idx.size());
    for (std::size_t i = 0; i < eval_idx.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(eval_idx[i]);
        const PredictiveEstimate est = predict(model, {ds.X.row(row), ds.dim()}, cfg.sample_count, predict_rng);
        mu_s[i] = model.norm.apply_y(est.mu);
        sigma_s[i] = std::max(model.norm.apply_sigma(est.sigma_total), 1e-8);
        y_s[i] = model.norm.apply_y(ds.y[row]);
    }

    MetricReport rep;
    rep.method = method_name(run.method);
    rep.dataset = cfg.dataset;
    rep.split = split_kind_name(run.kind);
    rep.fold = run.fold;
    rep.rmse = rmse(mu_s, y_s);
    rep.nll = nll_report(mu_s, sigma_s, y_s);
    const NormalizedResiduals res = normalize_residuals(mu_s, sigma_s, y_s);
    rep.ece = ece(res, cfg.ece_bins);
    rep.ws = wasserstein_to_std_normal(res);
    rep.ks = ks_to_std_normal(res);

    if (cfg.save_models) {
        const std::string dir = cfg.out_dir + "/models";
        std::filesystem::create_directories(dir);
        save_model(model, dir + "/" + method_name(run.method) + "_" + split_kind_name(run.kind) + "_" +
                              std::to_string(run.fold) + ".json");
    }
    return rep;
}

struct ExperimentResult {
    std::vector<RunOutcome> runs;
    int failed_count = 0;
};

inline ExperimentResult run_experiment(ExperimentConfig cfg) {
    if (cfg.methods.empty()) throw ConfigError("no methods requested");
    if (cfg.splits.empty()) throw ConfigError("no split kinds requested");

    const Dataset ds = load_experiment_dataset(cfg);
    resolve_defaults(cfg, ds.size_class);

    const std::vector<DatasetSplit> splits = build_splits(ds, cfg);
    std::vector<RunSpec> plan;
    for (Method m : cfg.methods) {
        for (const DatasetSplit& sp : splits) {
            RunSpec r;
            r.method = m;
            r.kind = sp.kind;
            r.fold = sp.fold;
            r.split = &sp;
            r.label = run_label(cfg, m, sp.kind, sp.fold);
            r.run_seed = derive_seed(cfg.seed, r.label);
            plan.push_back(std::move(r));
        }
    }

    std::filesystem::create_directories(cfg.out_dir);
    {
        nlohmann::json sj = nlohmann::json::array();
        for (const auto& sp : splits) sj.push_back(split_to_json(sp));
        std::ofstream out(cfg.out_dir + "/splits.json");
        out << sj.dump();
    }

    ExperimentResult result;
    result.runs.resize(plan.size());
    std::atomic<std::size_t> next{0};
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers =
        std::min<std::size_t>(plan.size(), cfg.jobs > 0 ? static_cast<std::size_t>(cfg.jobs) : hw);

    auto work = [&]() {
        for (std::size_t i; (i = next.fetch_add(1)) < plan.size();) {
            RunOutcome& out = result.runs[i];
            try {
                out.report = execute_run(ds, cfg, plan[i]);
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
                out.report.method = method_name(plan[i].method);
                out.report.dataset = cfg.dataset;
                out.report.split = split_kind_name(plan[i].kind);
                out.report.fold = plan[i].fold;
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (const auto& r : result.runs)
        if (r.failed) ++result.failed_count;
    return result;
}

// --- artifact writers ---

inline void write_reports_csv(const ExperimentResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << metric_csv_header() << "\n";
    for (const auto& r : result.runs)
        if (!r.failed) out << to_csv_row(r.report) << "\n";
}

inline void write_reports_json(const ExperimentResult& result, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : result.runs)
        if (!r.failed) arr.push_back(to_json(r.report));
    std::ofstream out(path);
    out << arr.dump(2) << "\n";
}

inline void write_failures_json(const ExperimentResult& result, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : result.runs)
        if (r.failed)
            arr.push_back({{"method", r.report.method},
                           {"dataset", r.report.dataset},
                           {"split", r.report.split},
                           {"fold", r.report.fold},
                           {"error", r.error}});
    std::ofstream out(path);
    out << arr.dump(2) << "\n";
}

namespace detail {
inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Per (method, split): mean and median of every metric, mirroring the
// summarizing columns of the paper's figures.
inline void write_summary_csv(std::span<const MetricReport> reports, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> groups;
    for (const auto& r : reports) {
        const auto g = std::make_pair(r.method, r.split);
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "method,split,stat,rmse,nll,ece,ws,ks\n";
    for (const auto& [method, split] : groups) {
        std::vector<double> cols[5];
        for (const auto& r : reports) {
            if (r.method != method || r.split != split) continue;
            cols[0].push_back(r.rmse);
            cols[1].push_back(r.nll);
            cols[2].push_back(r.ece);
            cols[3].push_back(r.ws);
            cols[4].push_back(r.ks);
        }
        const double n = static_cast<double>(cols[0].size());
        out << method << "," << split << ",mean";
        for (auto& c : cols) {
            double s = 0.0;
            for (double x : c) s += x;
            out << "," << format_metric(s / n);
        }
        out << "\n" << method << "," << split << ",median";
        for (auto& c : cols) out << "," << format_metric(detail::median_of(c));
        out << "\n";
    }
}

inline std::vector<MetricReport> collect_reports(const ExperimentResult& result) {
    std::vector<MetricReport> reports;
    for (const auto& r : result.runs)
        if (!r.failed) reports.push_back(r.report);
    return reports;
}

// --- commands ---

inline int cmd_run(const ExperimentConfig& cfg) {
    const ExperimentResult result = run_experiment(cfg);
    write_reports_csv(result, cfg.out_dir + "/reports.csv");
    write_reports_json(result, cfg.out_dir + "/reports.json");
    write_failures_json(result, cfg.out_dir + "/failures.json");
    const std::vector<MetricReport> reports = collect_reports(result);
    write_summary_csv(reports, cfg.out_dir + "/summary.csv");
    for (const auto& r : result.runs)
        if (r.failed)
            std::cerr << "run failed: " << r.report.method << " " << r.report.split << " fold " << r.report.fold
                      << ": " << r.error << "\n";
    return result.failed_count > 0 ? 1 : 0;
}

inline int cmd_sweep_beta(const ExperimentConfig& base, std::span<const double> betas) {
    if (betas.empty()) throw ConfigError("sweep-beta: no beta values given");
    if (std::find(base.methods.begin(), base.methods.end(), Method::sml) == base.methods.end())
        throw ConfigError("sweep-beta: SML must be among the methods");

    std::filesystem::create_directories(base.out_dir);
    std::ofstream combined(base.out_dir + "/sweep.csv");
    combined << "beta," << metric_csv_header() << "\n";

    int status = 0;
    for (double beta : betas) {
        if (beta == 0.0)
            std::cerr << "warning: beta = 0 disables the spread objective; dropout sampling at inference"
                         " yields uncontrolled fluctuations\n";
        char tag[32];
        std::snprintf(tag, sizeof tag, "%g", beta);
        ExperimentConfig cfg = base;
        cfg.beta = beta;
        cfg.out_dir = base.out_dir + "/beta_" + tag;
        std::filesystem::create_directories(cfg.out_dir);
        const int rc = cmd_run(cfg);
        status = std::max(status, rc);
        std::ifstream in(cfg.out_dir + "/reports.csv");
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line))
            if (!line.empty()) combined << tag << "," << line << "\n";
    }
    return status;
}

struct LandscapeSpec {
    double mu_min = 0.0, mu_max = 2.0;
    int mu_steps = 41;
    double sigma_min = 0.0, sigma_max = 2.0;
    int sigma_steps = 41;
    int mc_n = 0;  // 0 = closed form only
    std::uint64_t seed = 0;
};

inline int cmd_landscape(const LandscapeSpec& spec, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    char buf[160];
    {
        std::ofstream out(out_dir + "/landscape.csv");
        out << (spec.mc_n > 0 ? "mu,sigma,loss,mc_estimate,mc_se\n" : "mu,sigma,loss\n");
        for (int si = 0; si < spec.sigma_steps; ++si) {
            const double sigma = spec.sigma_min + (spec.sigma_max - spec.sigma_min) * si /
                                                      std::max(1, spec.sigma_steps - 1);
            for (int mi = 0; mi < spec.mu_steps; ++mi) {
                const double mu = spec.mu_min + (spec.mu_max - spec.mu_min) * mi / std::max(1, spec.mu_steps - 1);
                const double loss = sml_landscape(mu, sigma);
                if (spec.mc_n > 0) {
                    const McEstimate mc = sml_landscape_mc(
                        mu, sigma, spec.mc_n,
                        derive_seed(spec.seed, "mc|" + std::to_string(mi) + "|" + std::to_string(si)));
                    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.3g\n", mu, sigma, loss, mc.estimate,
                                  mc.std_error);
                } else {
                    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", mu, sigma, loss);
                }
                out << buf;
            }
        }
    }
    {
        std::ofstream out(out_dir + "/argmin.csv");
        out << "sigma,argmin_mu\n";
        std::vector<double> grid;
        for (int si = 0; si < spec.sigma_steps; ++si)
            grid.push_back(spec.sigma_min +
                           (spec.sigma_max - spec.sigma_min) * si / std::max(1, spec.sigma_steps - 1));
        const std::vector<double> argmins = landscape_argmin_mu(grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", grid[i], argmins[i]);
            out << buf;
        }
    }
    const double bifurcation = landscape_bifurcation_sigma();
    std::snprintf(buf, sizeof buf, "bifurcation sigma_drop = %.4f (2/pi = %.4f)\n", bifurcation, 2.0 / kPi);
    std::cout << buf;
    return 0;
}

inline std::vector<MetricReport> read_reports_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty reports file " + path);
    std::vector<MetricReport> reports;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::split_csv_line(line);
        if (f.size() != 9)
            throw std::runtime_error(path + " row " + std::to_string(row) + ": expected 9 fields, got " +
                                     std::to_string(f.size()));
        MetricReport r;
        r.method = f[0];
        r.dataset = f[1];
        r.split = f[2];
        r.fold = std::stoi(f[3]);
        r.rmse = std::stod(f[4]);
        r.nll = std::stod(f[5]);
        r.ece = std::stod(f[6]);
        r.ws = std::stod(f[7]);
        r.ks = std::stod(f[8]);
        reports.push_back(std::move(r));
    }
    return reports;
}

inline int cmd_report(std::span<const std::string> run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw ConfigError("report: no run directories given");
    std::vector<MetricReport> merged;
    for (const auto& dir : run_dirs) {
        const std::vector<MetricReport> r = read_reports_csv(dir + "/reports.csv");
        merged.insert(merged.end(), r.begin(), r.end());
    }
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/merged.csv");
        out << metric_csv_header() << "\n";
        for (const auto& r : merged) out << to_csv_row(r) << "\n";
    }
    write_summary_csv(merged, out_dir + "/summary.csv");
    {
        std::ofstream out(out_dir + "/metric_scatter.csv");
        out << "ece,ws,ks\n";
        for (const auto& r : merged)
            out << format_metric(r.ece) << "," << format_metric(r.ws) << "," << format_metric(r.ks) << "\n";
    }
    if (merged.size() >= 3) {
        const MetricCorrelations c = metric_correlations(merged);
        std::ofstream out(out_dir + "/correlations.csv");
        out << "metric,ece,ws,ks\n";
        const char* names[3] = {"ece", "ws", "ks"};
        for (int i = 0; i < 3; ++i) {
            out << names[i];
            for (int j = 0; j < 3; ++j) out << "," << format_metric(c.m[i][j]);
            out << "\n";
        }
    }
    return 0;
}

// Trains the first configured method on one split and exports the loss
// components and the sigma_total decomposition.
inline int cmd_export_components(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    if (cfg.methods.empty()) throw ConfigError("export-components: no method given");
    const Method method = cfg.methods.front();
    if (!uses_dropout(method)) throw ConfigError("export-components: needs a dropout method (MC, MC-LL, SML)");

    const Dataset ds = load_experiment_dataset(cfg);
    resolve_defaults(cfg, ds.size_class);
    ExperimentConfig split_cfg = cfg;
    split_cfg.splits = {cfg.splits.empty() ? SplitKind::iid_test : cfg.splits.front()};
    const std::vector<DatasetSplit> splits = build_splits(ds, split_cfg);
    const DatasetSplit& split = splits.front();

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.beta = cfg.beta;
    tc.keep_prob = cfg.keep_prob;
    tc.sample_count = cfg.sample_count;
    tc.seed = derive_seed(cfg.seed, run_label(cfg, method, split.kind, split.fold));

    const Matrix X_train = gather_rows(ds.X, split.train_idx);
    const std::vector<double> y_train = gather(ds.y, split.train_idx);
    const TrainedModel model = train_estimator(method, X_train, y_train, tc);

    std::filesystem::create_directories(cfg.out_dir);
    const Matrix X_test = gather_rows(ds.X, split.test_idx);
    const std::vector<double> y_test = gather(ds.y, split.test_idx);
    {
        std::ofstream out(cfg.out_dir + "/components.csv");
        Rng rng(derive_seed(tc.seed, "components"));
        loss_component_export(model, X_test, y_test, cfg.sample_count, rng, out);
    }
    {
        Rng rng(derive_seed(tc.seed, "decomposition"));
        std::vector<PredictiveEstimate> estimates(X_test.rows);
        for (std::size_t i = 0; i < X_test.rows; ++i)
            estimates[i] = predict(model, {X_test.row(i), X_test.cols}, cfg.sample_count, rng);
        const SigmaDecomposition dec = decompose_sigma(estimates);
        std::ofstream out(cfg.out_dir + "/decomposition.csv");
        out << "point_id,fraction_dropout_std,fraction_spread\n";
        char buf[96];
        for (std::size_t i = 0; i < dec.per_point_dropout_fraction.size(); ++i) {
            const double fd = dec.per_point_dropout_fraction[i];
            std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", i, fd, 1.0 - fd);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "mean,%.10g,%.10g\n", dec.fraction_dropout_std, dec.fraction_spread);
        out << buf;
    }
    return 0;
}

}  // namespace sml
