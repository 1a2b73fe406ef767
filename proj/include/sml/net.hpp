#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sml/rng.hpp"

namespace sml {

// Thrown when a loss or gradient turns non-finite during training.
struct TrainingDiverged : std::runtime_error {
    long step;
    explicit TrainingDiverged(const std::string& what, long step_) : std::runtime_error(what), step(step_) {}
};

// Dense row-major matrix, fan_out x fan_in for layer weights.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
    const double* row(std::size_t i) const { return a.data() + i * cols; }
    double* row(std::size_t i) { return a.data() + i * cols; }
};

enum class HeadKind { point, mean_and_sigma };
enum class MaskScope { all_hidden, last_hidden };

// Added to the softplus sigma channel so the NLL never sees sigma = 0.
inline constexpr double kSigmaFloor = 1e-6;

// Feedforward net: ReLU hidden layers, identity output. With the
// mean_and_sigma head the output layer has 2m units and forward() returns
// (mu, softplus(s) + floor) for the trailing m channels.
struct Mlp {
    std::vector<int> layer_sizes;  // input dim, hidden widths..., output dim
    HeadKind head = HeadKind::point;
    std::vector<Matrix> weights;             // one per layer, fan_out x fan_in
    std::vector<std::vector<double>> biases;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t hidden_layer_count() const { return weights.size() - 1; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].a.size() + biases[l].size();
        return n;
    }
};

inline Mlp mlp_init(const std::vector<int>& layer_sizes, HeadKind head, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("mlp_init: need at least input and output sizes");
    for (int s : layer_sizes) {
        if (s <= 0) throw std::invalid_argument("mlp_init: layer sizes must be positive");
    }
    if (head == HeadKind::mean_and_sigma && layer_sizes.back() % 2 != 0)
        throw std::invalid_argument("mlp_init: mean_and_sigma head needs an even output size (2m)");

    Mlp net;
    net.layer_sizes = layer_sizes;
    net.head = head;
    Rng rng(seed);
    for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
        const std::size_t fan_in = static_cast<std::size_t>(layer_sizes[l - 1]);
        const std::size_t fan_out = static_cast<std::size_t>(layer_sizes[l]);
        Matrix w(fan_out, fan_in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : w.a) x = rng.uniform(-scale, scale);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

// Bernoulli keep pattern over hidden units. Layers outside the scope carry no
// flags and pass through unchanged. Kept units are scaled by 1/keep_prob at
// sampling time (inverted dropout), so the unmasked net is the mean model.
struct DropoutMask {
    double keep_prob = 1.0;
    double scale = 1.0;  // 1/keep_prob
    MaskScope scope = MaskScope::all_hidden;
    std::vector<std::vector<std::uint8_t>> keep;  // per hidden layer; empty = not masked

    bool covers(std::size_t hidden_layer) const {
        return hidden_layer < keep.size() && !keep[hidden_layer].empty();
    }
};

inline DropoutMask sample_mask(const Mlp& net, double keep_prob, MaskScope scope, Rng& rng) {
    if (!(keep_prob > 0.0) || keep_prob > 1.0)
        throw std::invalid_argument("sample_mask: keep_prob must be in (0, 1]");
    DropoutMask mask;
    mask.keep_prob = keep_prob;
    mask.scale = 1.0 / keep_prob;
    mask.scope = scope;
    mask.keep.resize(net.hidden_layer_count());
    const std::size_t first = scope == MaskScope::last_hidden ? net.hidden_layer_count() - 1 : 0;
    for (std::size_t l = first; l < net.hidden_layer_count(); ++l) {
        auto& flags = mask.keep[l];
        flags.resize(static_cast<std::size_t>(net.layer_sizes[l + 1]));
        for (auto& f : flags) f = keep_prob >= 1.0 ? 1 : (rng.bernoulli(keep_prob) ? 1 : 0);
    }
    return mask;
}

// Pre-activations and post-activation/post-mask values kept for backward().
struct ForwardCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;  // z per layer
    std::vector<std::vector<double>> act;  // masked ReLU output per hidden layer
};

inline std::vector<double> forward(const Mlp& net, std::span<const double> x, const DropoutMask* mask = nullptr,
                                   ForwardCache* cache = nullptr) {
    if (x.size() != static_cast<std::size_t>(net.input_dim()))
        throw std::invalid_argument("forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(net.input_dim()));
    if (cache) {
        cache->input.assign(x.begin(), x.end());
        cache->pre.resize(net.layer_count());
        cache->act.resize(net.hidden_layer_count());
    }

    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const Matrix& w = net.weights[l];
        const auto& b = net.biases[l];
        next.assign(w.rows, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double* wr = w.row(i);
            double s = b[i];
            for (std::size_t j = 0; j < w.cols; ++j) s += wr[j] * cur[j];
            next[i] = s;
        }
        if (cache) cache->pre[l] = next;

        if (l + 1 < net.layer_count()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
            if (mask && mask->covers(l)) {
                const auto& flags = mask->keep[l];
                for (std::size_t i = 0; i < next.size(); ++i) next[i] = flags[i] ? next[i] * mask->scale : 0.0;
            }
            if (cache) cache->act[l] = next;
        }
        cur.swap(next);
    }

    if (net.head == HeadKind::mean_and_sigma) {
        const std::size_t m = cur.size() / 2;
        for (std::size_t i = m; i < cur.size(); ++i) {
            // softplus, with the exp overflow guard
            const double s = cur[i];
            cur[i] = (s > 30.0 ? s : std::log1p(std::exp(s))) + kSigmaFloor;
        }
    }
    return cur;
}

struct Gradients {
    std::vector<Matrix> w;
    std::vector<std::vector<double>> b;

    void zero() {
        for (auto& m : w) std::fill(m.a.begin(), m.a.end(), 0.0);
        for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
    }
};

inline Gradients make_gradients(const Mlp& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.w.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.b.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

// Reverse-mode pass. out_grad is d(loss)/d(output); for the mean_and_sigma
// head the sigma entries are w.r.t. the post-softplus value. Adds scale *
// gradient into acc so batch terms can be accumulated in place.
inline void backward_accum(const Mlp& net, const ForwardCache& cache, std::span<const double> out_grad,
                           const DropoutMask* mask, Gradients& acc, double scale = 1.0) {
    if (cache.pre.size() != net.layer_count() || cache.input.size() != static_cast<std::size_t>(net.input_dim()))
        throw std::runtime_error("backward: cache does not match the network");
    if (out_grad.size() != static_cast<std::size_t>(net.output_dim()))
        throw std::runtime_error("backward: output gradient has wrong dimension");

    std::vector<double> delta(out_grad.begin(), out_grad.end());
    if (net.head == HeadKind::mean_and_sigma) {
        const auto& z = cache.pre.back();
        const std::size_t m = delta.size() / 2;
        for (std::size_t i = m; i < delta.size(); ++i) {
            const double s = z[i];
            delta[i] *= 1.0 / (1.0 + std::exp(-s));  // softplus'
        }
    }

    std::vector<double> prev_delta;
    for (std::size_t l = net.layer_count(); l-- > 0;) {
        const Matrix& w = net.weights[l];
        const std::vector<double>& in = l == 0 ? cache.input : cache.act[l - 1];

        Matrix& gw = acc.w[l];
        auto& gb = acc.b[l];
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double d = scale * delta[i];
            gb[i] += d;
            double* gr = gw.row(i);
            for (std::size_t j = 0; j < w.cols; ++j) gr[j] += d * in[j];
        }

        if (l == 0) break;

        prev_delta.assign(w.cols, 0.0);
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double d = delta[i];
            if (d == 0.0) continue;
            const double* wr = w.row(i);
            for (std::size_t j = 0; j < w.cols; ++j) prev_delta[j] += wr[j] * d;
        }

        // through the hidden layer l-1: dropout scaling, then ReLU derivative
        const std::size_t h = l - 1;
        const auto& z = cache.pre[h];
        if (mask && mask->covers(h)) {
            const auto& flags = mask->keep[h];
            for (std::size_t j = 0; j < prev_delta.size(); ++j)
                prev_delta[j] = flags[j] ? prev_delta[j] * mask->scale : 0.0;
        }
        for (std::size_t j = 0; j < prev_delta.size(); ++j)
            if (z[j] <= 0.0) prev_delta[j] = 0.0;
        delta.swap(prev_delta);
    }
}

inline Gradients backward(const Mlp& net, const ForwardCache& cache, std::span<const double> out_grad,
                          const DropoutMask* mask = nullptr) {
    Gradients g = make_gradients(net);
    backward_accum(net, cache, out_grad, mask, g);
    return g;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    long step_count = 0;
    Gradients first_moment, second_moment;

    explicit AdamState(const Mlp& net) : first_moment(make_gradients(net)), second_moment(make_gradients(net)) {}
};

namespace detail {
inline void adam_update_span(std::span<double> p, std::span<const double> g, std::span<double> m,
                             std::span<double> v, const AdamConfig& cfg, double bc1, double bc2, long step) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        if (!std::isfinite(gi))
            throw TrainingDiverged("adam_step: non-finite gradient at step " + std::to_string(step), step);
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        if (!std::isfinite(p[i]))
            throw TrainingDiverged("adam_step: non-finite parameter at step " + std::to_string(step), step);
    }
}
}  // namespace detail

inline void adam_step(Mlp& net, AdamState& state, const Gradients& grads, const AdamConfig& cfg = {}) {
    const long step = ++state.step_count;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        detail::adam_update_span(net.weights[l].a, grads.w[l].a, state.first_moment.w[l].a,
                                 state.second_moment.w[l].a, cfg, bc1, bc2, step);
        detail::adam_update_span(net.biases[l], grads.b[l], state.first_moment.b[l], state.second_moment.b[l], cfg,
                                 bc1, bc2, step);
    }
}

}  // namespace sml
