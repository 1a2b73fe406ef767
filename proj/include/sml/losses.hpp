#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace sml {

inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;  // log(sqrt(2*pi))

struct MseResult {
    double loss;
    std::vector<double> grad;  // d(loss)/d(pred)
};

inline MseResult mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.empty() || pred.size() != target.size())
        throw std::invalid_argument("mse_loss: inputs must be non-empty and of equal length");
    const double n = static_cast<double>(pred.size());
    MseResult out;
    out.grad.resize(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        acc += r * r;
        out.grad[i] = 2.0 * r / n;
    }
    out.loss = acc / n;
    return out;
}

// Per-example terms of the combined objective
//   l_regr = (full - y)^2,   l_sml = (|sub - full| - |full - y|)^2.
// grad_full carries only d(l_regr)/d(full): the spread term is stopped from
// pulling the full network toward the sub-network. grad_sub is
// d(l_sml)/d(sub) with sign(0) := 0.
struct SmlTerms {
    double l_regr, l_sml;
    double grad_full, grad_sub;
};

inline SmlTerms sml_terms(double full_pred, double sub_pred, double target) {
    const double a = full_pred - target;
    const double b = sub_pred - full_pred;
    const double gap = std::abs(b) - std::abs(a);
    const double sign_b = b > 0.0 ? 1.0 : (b < 0.0 ? -1.0 : 0.0);
    SmlTerms t;
    t.l_regr = a * a;
    t.l_sml = gap * gap;
    t.grad_full = 2.0 * a;
    t.grad_sub = 2.0 * gap * sign_b;
    return t;
}

struct SmlBatchTerms {
    std::vector<double> a;  // full-network residuals f(x_i) - y_i
    std::vector<double> b;  // sub-network spreads  f~(x_i) - f(x_i)
    double beta = 0.5;
};

inline double sml_batch_loss(const SmlBatchTerms& terms) {
    if (terms.a.empty() || terms.a.size() != terms.b.size())
        throw std::invalid_argument("sml_batch_loss: a and b must be non-empty and of equal length");
    if (!(terms.beta > 0.0)) throw std::invalid_argument("sml_batch_loss: beta must be positive");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.a.size(); ++i) {
        const double gap = std::abs(terms.b[i]) - std::abs(terms.a[i]);
        acc += terms.a[i] * terms.a[i] + terms.beta * gap * gap;
    }
    return acc / static_cast<double>(terms.a.size());
}

// Mean Gaussian NLL: (1/N) sum_i [ log sigma_i + (mu_i - y_i)^2 / (2 sigma_i^2) (+ c) ]
// with c = log sqrt(2 pi) included only on request.
inline double gaussian_nll(std::span<const double> mu, std::span<const double> sigma, std::span<const double> y,
                           bool include_const) {
    if (mu.empty() || mu.size() != sigma.size() || mu.size() != y.size())
        throw std::invalid_argument("gaussian_nll: inputs must be non-empty and of equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw std::invalid_argument("gaussian_nll: sigma must be strictly positive");
        const double r = mu[i] - y[i];
        acc += std::log(sigma[i]) + r * r / (2.0 * sigma[i] * sigma[i]);
    }
    double nll = acc / static_cast<double>(mu.size());
    if (include_const) nll += kLogSqrt2Pi;
    return nll;
}

}  // namespace sml
