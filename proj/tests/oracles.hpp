// Test-only oracles, independent of the library implementation paths they
// check: central finite differences for gradients and a cyclic Jacobi
// eigensolver for PCA cross-checks.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sml/net.hpp"

namespace oracle {

// d(loss)/d(param) by central differences over every weight and bias.
template <typename LossFn>
sml::Gradients finite_difference_gradients(sml::Mlp& net, LossFn loss, double h = 1e-5) {
    sml::Gradients g = sml::make_gradients(net);
    auto probe = [&](double& p) {
        const double orig = p;
        p = orig + h;
        const double fp = loss();
        p = orig - h;
        const double fm = loss();
        p = orig;
        return (fp - fm) / (2.0 * h);
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (std::size_t i = 0; i < net.weights[l].a.size(); ++i) g.w[l].a[i] = probe(net.weights[l].a[i]);
        for (std::size_t i = 0; i < net.biases[l].size(); ++i) g.b[l][i] = probe(net.biases[l][i]);
    }
    return g;
}

inline double max_relative_error(const sml::Gradients& a, const sml::Gradients& b, double floor = 1e-6) {
    double worst = 0.0;
    auto cmp = [&](double x, double y) {
        const double denom = std::max({std::abs(x), std::abs(y), floor});
        worst = std::max(worst, std::abs(x - y) / denom);
    };
    for (std::size_t l = 0; l < a.w.size(); ++l) {
        for (std::size_t i = 0; i < a.w[l].a.size(); ++i) cmp(a.w[l].a[i], b.w[l].a[i]);
        for (std::size_t i = 0; i < a.b[l].size(); ++i) cmp(a.b[l][i], b.b[l][i]);
    }
    return worst;
}

struct EigenPair {
    double value;
    std::vector<double> vector;
};

// Dominant eigenpair of a symmetric matrix by cyclic Jacobi sweeps.
inline EigenPair dominant_eigenpair(const sml::Matrix& sym) {
    const std::size_t n = sym.rows;
    if (n != sym.cols) throw std::invalid_argument("dominant_eigenpair: matrix must be square");
    sml::Matrix a = sym;
    sml::Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::size_t imax = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (a(i, i) > a(imax, imax)) imax = i;
    EigenPair out;
    out.value = a(imax, imax);
    out.vector.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.vector[i] = v(i, imax);
    return out;
}

}  // namespace oracle
