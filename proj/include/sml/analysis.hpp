#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sml/estimators.hpp"
#include "sml/losses.hpp"
#include "sml/metrics.hpp"
#include "sml/rng.hpp"

namespace sml {

inline constexpr double kPi = 3.14159265358979323846;

// Closed-form expected spread loss when residuals are N(0,1) and the
// sub-network outputs are N(mu, sigma):
//   L = -(4/pi) sigma exp(-mu^2 / (2 sigma^2))
//       - sqrt(8/pi) |mu| Erf(|mu| / (sqrt(2) sigma))
//       + sigma^2 + mu^2 + 1,
// with the sigma -> 0 limit 1 + mu^2 - sqrt(8/pi)|mu|. Erf comes from libm
// (correctly rounded, far below the 1e-12 budget). |mu| keeps the evaluation
// exactly symmetric in mu.
inline double sml_landscape(double mu, double sigma) {
    if (sigma < 0.0) throw std::invalid_argument("sml_landscape: sigma must be >= 0");
    const double am = std::abs(mu);
    if (sigma < 1e-12) return 1.0 + am * am - std::sqrt(8.0 / kPi) * am;
    const double z = am / (std::sqrt(2.0) * sigma);
    return -(4.0 / kPi) * sigma * std::exp(-0.5 * (am / sigma) * (am / sigma)) -
           std::sqrt(8.0 / kPi) * am * std::erf(z) + sigma * sigma + am * am + 1.0;
}

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo oracle for the same integral: mean and standard error of
// (|y1| - |y2|)^2 with y1 ~ N(0,1), y2 ~ N(mu, sigma).
inline McEstimate sml_landscape_mc(double mu, double sigma, int n, std::uint64_t seed) {
    if (n < 1000) throw std::invalid_argument("sml_landscape_mc: need n >= 1000");
    Rng rng(seed);
    double mean = 0.0, m2 = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double y1 = rng.normal();
        const double y2 = rng.normal(mu, sigma);
        const double gap = std::abs(y1) - std::abs(y2);
        const double v = gap * gap;
        const double delta = v - mean;
        mean += delta / i;
        m2 += delta * (v - mean);
    }
    McEstimate est;
    est.estimate = mean;
    est.std_error = std::sqrt(m2 / (static_cast<double>(n) - 1.0) / static_cast<double>(n));
    return est;
}

namespace detail {
// Golden-section minimum of f on [lo, hi] to the given interval tolerance.
template <typename F>
inline double golden_section_min(F f, double lo, double hi, double tol) {
    constexpr double inv_phi = 0.6180339887498948482;
    double a = lo, b = hi;
    double c = b - (b - a) * inv_phi;
    double d = a + (b - a) * inv_phi;
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}
}  // namespace detail

// Position of the non-negative minimum of the landscape in mu for each sigma.
// The curve starts at sqrt(2/pi) for sigma = 0 and reaches 0 at the
// bifurcation sigma = 2/pi.
inline std::vector<double> landscape_argmin_mu(std::span<const double> sigma_grid) {
    std::vector<double> out;
    out.reserve(sigma_grid.size());
    for (double sigma : sigma_grid) {
        if (sigma < 0.0) throw std::invalid_argument("landscape_argmin_mu: sigma must be >= 0");
        out.push_back(
            detail::golden_section_min([sigma](double mu) { return sml_landscape(mu, sigma); }, 0.0, 3.0, 1e-6));
    }
    return out;
}

// First sigma (on a fine grid) where the argmin-mu curve has collapsed to 0.
inline double landscape_bifurcation_sigma(double sigma_max = 1.0, double step = 0.002) {
    for (double sigma = 0.0; sigma <= sigma_max; sigma += step) {
        const double argmin =
            detail::golden_section_min([sigma](double mu) { return sml_landscape(mu, sigma); }, 0.0, 3.0, 1e-6);
        if (argmin < 1e-3) return sigma;
    }
    throw std::runtime_error("landscape_bifurcation_sigma: no collapse found below sigma_max");
}

// Relative shares of the two sigma_total components, averaged over the
// estimates. Points with sigma_total = 0 carry no decomposition and are
// excluded (but counted).
struct SigmaDecomposition {
    double fraction_dropout_std = 0.0;
    double fraction_spread = 0.0;
    int used_count = 0;
    int excluded_zero_sigma = 0;
    std::vector<double> per_point_dropout_fraction;
};

inline SigmaDecomposition decompose_sigma(std::span<const PredictiveEstimate> estimates) {
    SigmaDecomposition dec;
    for (const auto& e : estimates) {
        if (e.sigma_total <= 0.0) {
            ++dec.excluded_zero_sigma;
            continue;
        }
        const double f_drop = e.sigma_drop / e.sigma_total;
        dec.per_point_dropout_fraction.push_back(f_drop);
        dec.fraction_dropout_std += f_drop;
        dec.fraction_spread += e.spread / e.sigma_total;
        ++dec.used_count;
    }
    if (dec.used_count == 0) throw std::runtime_error("decompose_sigma: all estimates have sigma_total = 0");
    dec.fraction_dropout_std /= dec.used_count;
    dec.fraction_spread /= dec.used_count;
    return dec;
}

// Per test point: the full-network residual a_i and T sub-network spreads
// b_it, as a flat CSV for histogram/scatter plotting.
inline void loss_component_export(const TrainedModel& model, const Matrix& X_test, std::span<const double> y_test,
                                  int T, Rng& rng, std::ostream& out) {
    if (!uses_dropout(model.kind))
        throw std::logic_error("loss_component_export: " + method_name(model.kind) + " has no sub-networks");
    out << "point_id,a,b_sample_idx,b\n";
    char buf[64];
    std::vector<double> xs(X_test.cols);
    for (std::size_t i = 0; i < X_test.rows; ++i) {
        const std::span<const double> xi(X_test.row(i), X_test.cols);
        model.norm.apply_x(xi, xs);
        // a_i is the residual of the unmasked (full) network
        const double full = model.norm.invert_y(forward(model.members.front(), xs)[0]);
        const double a = full - y_test[i];
        Rng sample_rng = rng.derive("samples" + std::to_string(i));
        const std::vector<double> samples = subnetwork_samples(model, xi, T, sample_rng);
        for (std::size_t t = 0; t < samples.size(); ++t) {
            const double b = samples[t] - full;
            std::snprintf(buf, sizeof buf, "%zu,%.10g,%zu,%.10g\n", i, a, t, b);
            out << buf;
        }
    }
}

// Pairwise Pearson correlations among the pure uncertainty scores of a batch
// of reports, in the order (ece, ws, ks).
struct MetricCorrelations {
    double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
};

inline MetricCorrelations metric_correlations(std::span<const MetricReport> reports) {
    if (reports.size() < 3) throw std::invalid_argument("metric_correlations: need at least 3 reports");
    std::vector<double> cols[3];
    for (const auto& r : reports) {
        cols[0].push_back(r.ece);
        cols[1].push_back(r.ws);
        cols[2].push_back(r.ks);
    }
    static const char* names[3] = {"ece", "ws", "ks"};
    MetricCorrelations c;
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            try {
                c.m[i][j] = c.m[j][i] = pearson(cols[i], cols[j]);
            } catch (const std::domain_error&) {
                throw std::domain_error(std::string("metric_correlations: zero variance in ") + names[i] + " or " +
                                        names[j]);
            }
        }
    }
    return c;
}

}  // namespace sml
