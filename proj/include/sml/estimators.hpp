#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sml/data.hpp"
#include "sml/losses.hpp"
#include "sml/net.hpp"
#include "sml/rng.hpp"

namespace sml {

enum class Method { mc, mc_ll, sml, pu, de, pu_de };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::mc: return "MC";
        case Method::mc_ll: return "MC-LL";
        case Method::sml: return "SML";
        case Method::pu: return "PU";
        case Method::de: return "DE";
        case Method::pu_de: return "PU-DE";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::mc, Method::mc_ll, Method::sml, Method::pu, Method::de, Method::pu_de})
        if (method_name(m) == s) return m;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool uses_dropout(Method m) { return m == Method::mc || m == Method::mc_ll || m == Method::sml; }
inline bool is_ensemble(Method m) { return m == Method::de || m == Method::pu_de; }
inline bool is_parametric(Method m) { return m == Method::pu || m == Method::pu_de; }

struct TrainConfig {
    std::vector<int> hidden{50, 50};
    int epochs = 1000;
    int batch_size = 100;
    double learning_rate = 1e-3;
    double beta = 0.5;       // SML weight
    double keep_prob = 0.9;  // dropout keep probability (p = 0.1)
    int ensemble_size = 5;
    int sample_count = 200;  // T sub-network samples at prediction time
    std::uint64_t seed = 0;
};

struct TrainedModel {
    Method kind = Method::sml;
    TrainConfig config;
    std::vector<Mlp> members;
    Standardizer norm;
};

// Per-input estimate. For SML sigma_total = sigma_drop + spread by
// construction; other methods report spread = 0.
struct PredictiveEstimate {
    double mu = 0.0;
    double sigma_total = 0.0;
    double sigma_drop = 0.0;
    double spread = 0.0;
};

namespace detail {

inline MaskScope scope_for(Method m) {
    return m == Method::mc_ll ? MaskScope::last_hidden : MaskScope::all_hidden;
}

// One network trained on standardized data. All methods share the shuffle
// stream layout so degenerate configurations (SML with beta = 0 and
// keep_prob = 1) coincide with plain MSE training step for step.
inline Mlp train_single(Method kind, const Matrix& X, std::span<const double> y, const TrainConfig& cfg,
                        const Rng& member_rng) {
    std::vector<int> arch;
    arch.push_back(static_cast<int>(X.cols));
    for (int h : cfg.hidden) arch.push_back(h);
    arch.push_back(is_parametric(kind) ? 2 : 1);

    Mlp net = mlp_init(arch, is_parametric(kind) ? HeadKind::mean_and_sigma : HeadKind::point,
                       member_rng.derive("init").seed());
    Rng shuffle_rng = member_rng.derive("shuffle");
    Rng mask_rng = member_rng.derive("mask");

    AdamConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    AdamState adam(net);
    Gradients grads = make_gradients(net);

    std::vector<int> order(X.rows);
    std::iota(order.begin(), order.end(), 0);

    ForwardCache cache, sub_cache;
    const MaskScope scope = scope_for(kind);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t batch_end =
                std::min(order.size(), batch_start + static_cast<std::size_t>(cfg.batch_size));
            const double inv_m = 1.0 / static_cast<double>(batch_end - batch_start);
            grads.zero();
            double batch_loss = 0.0;

            for (std::size_t bi = batch_start; bi < batch_end; ++bi) {
                const std::size_t i = static_cast<std::size_t>(order[bi]);
                const std::span<const double> xi(X.row(i), X.cols);
                const double yi = y[i];

                switch (kind) {
                    case Method::mc:
                    case Method::mc_ll: {
                        const DropoutMask mask = sample_mask(net, cfg.keep_prob, scope, mask_rng);
                        const std::vector<double> out = forward(net, xi, &mask, &cache);
                        const double r = out[0] - yi;
                        batch_loss += r * r * inv_m;
                        const double g[1] = {2.0 * r};
                        backward_accum(net, cache, g, &mask, grads, inv_m);
                        break;
                    }
                    case Method::sml: {
                        const std::vector<double> full = forward(net, xi, nullptr, &cache);
                        const DropoutMask mask = sample_mask(net, cfg.keep_prob, scope, mask_rng);
                        const std::vector<double> sub = forward(net, xi, &mask, &sub_cache);
                        const SmlTerms t = sml_terms(full[0], sub[0], yi);
                        batch_loss += (t.l_regr + cfg.beta * t.l_sml) * inv_m;
                        const double gf[1] = {t.grad_full};
                        backward_accum(net, cache, gf, nullptr, grads, inv_m);
                        const double gs[1] = {cfg.beta * t.grad_sub};
                        backward_accum(net, sub_cache, gs, &mask, grads, inv_m);
                        break;
                    }
                    case Method::pu:
                    case Method::pu_de: {
                        const std::vector<double> out = forward(net, xi, nullptr, &cache);
                        const double mu = out[0], sg = out[1];
                        const double r = mu - yi;
                        batch_loss += (std::log(sg) + r * r / (2.0 * sg * sg)) * inv_m;
                        const double g[2] = {r / (sg * sg), 1.0 / sg - r * r / (sg * sg * sg)};
                        backward_accum(net, cache, g, nullptr, grads, inv_m);
                        break;
                    }
                    case Method::de: {
                        const std::vector<double> out = forward(net, xi, nullptr, &cache);
                        const double r = out[0] - yi;
                        batch_loss += r * r * inv_m;
                        const double g[1] = {2.0 * r};
                        backward_accum(net, cache, g, nullptr, grads, inv_m);
                        break;
                    }
                }
            }

            if (!std::isfinite(batch_loss))
                throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch), epoch);
            adam_step(net, adam, grads, adam_cfg);
        }
    }
    return net;
}

inline double population_std(std::span<const double> v, double mean) {
    double acc = 0.0;
    for (double x : v) {
        const double d = x - mean;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace detail

// Trains on raw (unstandardized) rows; the standardizer is fitted here on
// exactly the rows given, so passing the train fold keeps the test fold out
// of the normalization statistics.
inline TrainedModel train_estimator(Method kind, const Matrix& X_raw, std::span<const double> y_raw,
                                    const TrainConfig& cfg) {
    if (X_raw.rows == 0 || X_raw.rows != y_raw.size())
        throw std::invalid_argument("train_estimator: bad training data shape");

    Dataset view;
    view.X = X_raw;
    view.y.assign(y_raw.begin(), y_raw.end());
    std::vector<int> all(X_raw.rows);
    std::iota(all.begin(), all.end(), 0);

    TrainedModel model;
    model.kind = kind;
    model.config = cfg;
    model.norm = fit_standardizer(view, all);

    Matrix Xs(X_raw.rows, X_raw.cols);
    std::vector<double> ys(y_raw.size());
    for (std::size_t i = 0; i < X_raw.rows; ++i) {
        model.norm.apply_x({X_raw.row(i), X_raw.cols}, {Xs.row(i), Xs.cols});
        ys[i] = model.norm.apply_y(y_raw[i]);
    }

    const Rng root(cfg.seed);
    const int members = is_ensemble(kind) ? cfg.ensemble_size : 1;
    for (int k = 0; k < members; ++k) {
        const Method member_kind = kind == Method::pu_de ? Method::pu : (kind == Method::de ? Method::de : kind);
        model.members.push_back(
            detail::train_single(member_kind, Xs, ys, cfg, root.derive("member" + std::to_string(k))));
    }
    return model;
}

// T masked forward passes at x, fresh masks, in original output units.
inline std::vector<double> subnetwork_samples(const TrainedModel& model, std::span<const double> x, int T, Rng& rng) {
    if (!uses_dropout(model.kind))
        throw std::logic_error("subnetwork_samples: " + method_name(model.kind) + " has no dropout sub-networks");
    if (T < 1) throw std::invalid_argument("subnetwork_samples: T must be >= 1");
    const Mlp& net = model.members.front();
    std::vector<double> xs(x.size());
    if (x.size() != static_cast<std::size_t>(net.input_dim()))
        throw std::invalid_argument("subnetwork_samples: input dimension mismatch");
    model.norm.apply_x(x, xs);
    std::vector<double> out(static_cast<std::size_t>(T));
    for (auto& v : out) {
        const DropoutMask mask = sample_mask(net, model.config.keep_prob, detail::scope_for(model.kind), rng);
        v = model.norm.invert_y(forward(net, xs, &mask)[0]);
    }
    return out;
}

inline PredictiveEstimate predict(const TrainedModel& model, std::span<const double> x, int T, Rng& rng) {
    const Mlp& first = model.members.front();
    if (x.size() != static_cast<std::size_t>(first.input_dim()))
        throw std::invalid_argument("predict: input dimension mismatch");
    if (uses_dropout(model.kind) && T < 2) throw std::invalid_argument("predict: sampling methods need T >= 2");

    std::vector<double> xs(x.size());
    model.norm.apply_x(x, xs);

    PredictiveEstimate est;
    switch (model.kind) {
        case Method::mc:
        case Method::mc_ll: {
            std::vector<double> samples(static_cast<std::size_t>(T));
            for (auto& v : samples) {
                const DropoutMask mask = sample_mask(first, model.config.keep_prob, detail::scope_for(model.kind), rng);
                v = forward(first, xs, &mask)[0];
            }
            double mean = 0.0;
            for (double v : samples) mean += v;
            mean /= static_cast<double>(T);
            est.mu = model.norm.invert_y(mean);
            est.sigma_drop = model.norm.invert_sigma(detail::population_std(samples, mean));
            est.spread = 0.0;
            est.sigma_total = est.sigma_drop;
            break;
        }
        case Method::sml: {
            const double full = forward(first, xs)[0];
            std::vector<double> samples(static_cast<std::size_t>(T));
            for (auto& v : samples) {
                const DropoutMask mask = sample_mask(first, model.config.keep_prob, MaskScope::all_hidden, rng);
                v = forward(first, xs, &mask)[0];
            }
            double mean = 0.0;
            for (double v : samples) mean += v;
            mean /= static_cast<double>(T);
            est.mu = model.norm.invert_y(full);
            est.sigma_drop = model.norm.invert_sigma(detail::population_std(samples, mean));
            est.spread = model.norm.invert_sigma(std::abs(full - mean));
            est.sigma_total = est.sigma_drop + est.spread;
            break;
        }
        case Method::pu: {
            const std::vector<double> out = forward(first, xs);
            est.mu = model.norm.invert_y(out[0]);
            est.sigma_drop = model.norm.invert_sigma(out[1]);
            est.spread = 0.0;
            est.sigma_total = est.sigma_drop;
            break;
        }
        case Method::de: {
            std::vector<double> outs;
            outs.reserve(model.members.size());
            for (const Mlp& m : model.members) outs.push_back(forward(m, xs)[0]);
            double mean = 0.0;
            for (double v : outs) mean += v;
            mean /= static_cast<double>(outs.size());
            est.mu = model.norm.invert_y(mean);
            est.sigma_drop = model.norm.invert_sigma(detail::population_std(outs, mean));
            est.spread = 0.0;
            est.sigma_total = est.sigma_drop;
            break;
        }
        case Method::pu_de: {
            std::vector<double> mus, sigmas;
            for (const Mlp& m : model.members) {
                const std::vector<double> out = forward(m, xs);
                mus.push_back(out[0]);
                sigmas.push_back(out[1]);
            }
            bool identical = true;
            for (std::size_t k = 1; k < mus.size(); ++k)
                if (mus[k] != mus[0] || sigmas[k] != sigmas[0]) identical = false;
            double mu_s, sigma_s;
            if (identical) {  // identical members collapse to the member estimate
                mu_s = mus[0];
                sigma_s = sigmas[0];
            } else {
                const double n = static_cast<double>(mus.size());
                mu_s = 0.0;
                for (double v : mus) mu_s += v;
                mu_s /= n;
                double var = 0.0;  // mixture variance: mean(sigma_k^2) + Var(mu_k)
                for (std::size_t k = 0; k < mus.size(); ++k) {
                    const double dm = mus[k] - mu_s;
                    var += sigmas[k] * sigmas[k] + dm * dm;
                }
                var /= n;
                sigma_s = std::sqrt(var);
            }
            est.mu = model.norm.invert_y(mu_s);
            est.sigma_drop = model.norm.invert_sigma(sigma_s);
            est.spread = 0.0;
            est.sigma_total = est.sigma_drop;
            break;
        }
    }
    return est;
}

// --- model (de)serialization: versioned JSON, bit-exact round trip ---

namespace detail {
inline nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["layer_sizes"] = net.layer_sizes;
    j["head"] = net.head == HeadKind::mean_and_sigma ? "mean_and_sigma" : "point";
    nlohmann::json ws = nlohmann::json::array();
    nlohmann::json bs = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        ws.push_back(net.weights[l].a);
        bs.push_back(net.biases[l]);
    }
    j["weights"] = std::move(ws);
    j["biases"] = std::move(bs);
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net;
    net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    net.head = j.at("head").get<std::string>() == "mean_and_sigma" ? HeadKind::mean_and_sigma : HeadKind::point;
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    for (std::size_t l = 1; l < net.layer_sizes.size(); ++l) {
        Matrix w(static_cast<std::size_t>(net.layer_sizes[l]), static_cast<std::size_t>(net.layer_sizes[l - 1]));
        w.a = ws.at(l - 1).get<std::vector<double>>();
        if (w.a.size() != w.rows * w.cols) throw std::runtime_error("model file: weight shape mismatch");
        net.weights.push_back(std::move(w));
        net.biases.push_back(bs.at(l - 1).get<std::vector<double>>());
        if (net.biases.back().size() != static_cast<std::size_t>(net.layer_sizes[l]))
            throw std::runtime_error("model file: bias shape mismatch");
    }
    return net;
}
}  // namespace detail

inline nlohmann::json model_to_json(const TrainedModel& model) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = method_name(model.kind);
    j["config"] = {{"hidden", model.config.hidden},
                   {"epochs", model.config.epochs},
                   {"batch_size", model.config.batch_size},
                   {"learning_rate", model.config.learning_rate},
                   {"beta", model.config.beta},
                   {"keep_prob", model.config.keep_prob},
                   {"ensemble_size", model.config.ensemble_size},
                   {"sample_count", model.config.sample_count},
                   {"seed", model.config.seed}};
    j["normalization"] = {{"x_mean", model.norm.x_mean},
                          {"x_std", model.norm.x_std},
                          {"y_mean", model.norm.y_mean},
                          {"y_std", model.norm.y_std},
                          {"had_zero_variance", model.norm.had_zero_variance}};
    nlohmann::json members = nlohmann::json::array();
    for (const Mlp& m : model.members) members.push_back(detail::mlp_to_json(m));
    j["members"] = std::move(members);
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1) throw std::runtime_error("model file: unsupported format version");
    TrainedModel model;
    model.kind = parse_method(j.at("kind").get<std::string>());
    const auto& c = j.at("config");
    model.config.hidden = c.at("hidden").get<std::vector<int>>();
    model.config.epochs = c.at("epochs").get<int>();
    model.config.batch_size = c.at("batch_size").get<int>();
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.beta = c.at("beta").get<double>();
    model.config.keep_prob = c.at("keep_prob").get<double>();
    model.config.ensemble_size = c.at("ensemble_size").get<int>();
    model.config.sample_count = c.at("sample_count").get<int>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    const auto& n = j.at("normalization");
    model.norm.x_mean = n.at("x_mean").get<std::vector<double>>();
    model.norm.x_std = n.at("x_std").get<std::vector<double>>();
    model.norm.y_mean = n.at("y_mean").get<double>();
    model.norm.y_std = n.at("y_std").get<double>();
    model.norm.had_zero_variance = n.at("had_zero_variance").get<bool>();
    for (const auto& m : j.at("members")) model.members.push_back(detail::mlp_from_json(m));
    if (model.members.empty()) throw std::runtime_error("model file: no members");
    return model;
}

inline void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out << model_to_json(model).dump();
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

}  // namespace sml
