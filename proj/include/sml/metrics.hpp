#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sml/losses.hpp"

namespace sml {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

// Inverse standard-normal CDF: Acklam's rational approximation refined by one
// Halley step on erfc, giving full double precision over (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) {
        if (p == 0.0) return -INFINITY;
        if (p == 1.0) return INFINITY;
        throw std::invalid_argument("normal_quantile: p must lie in [0, 1]");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

struct NormalizedResiduals {
    std::vector<double> r;
    int sigma_clamp_count = 0;
};

inline double rmse(std::span<const double> mu, std::span<const double> y) {
    if (mu.empty() || mu.size() != y.size())
        throw std::invalid_argument("rmse: inputs must be non-empty and of equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double r = mu[i] - y[i];
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(mu.size()));
}

inline NormalizedResiduals normalize_residuals(std::span<const double> mu, std::span<const double> sigma,
                                               std::span<const double> y, double sigma_min = 1e-8) {
    if (mu.empty() || mu.size() != sigma.size() || mu.size() != y.size())
        throw std::invalid_argument("normalize_residuals: inputs must be non-empty and of equal length");
    if (!(sigma_min > 0.0)) throw std::invalid_argument("normalize_residuals: sigma_min must be positive");
    NormalizedResiduals out;
    out.r.resize(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        double s = sigma[i];
        if (s < sigma_min) {
            s = sigma_min;
            ++out.sigma_clamp_count;
        }
        out.r[i] = (mu[i] - y[i]) / s;
    }
    return out;
}

// ECE over B equal-probability standard-normal bins: sum_j |p_j - 1/B| where
// p_j is the empirical share of residuals between the quantiles
// Phi^-1(j/B) and Phi^-1((j+1)/B).
inline double ece(const NormalizedResiduals& res, int bins = 10) {
    if (bins < 2) throw std::invalid_argument("ece: need at least 2 bins");
    if (res.r.empty()) throw std::invalid_argument("ece: empty residuals");
    std::vector<double> edges(static_cast<std::size_t>(bins) - 1);
    for (int j = 1; j < bins; ++j)
        edges[static_cast<std::size_t>(j) - 1] = normal_quantile(static_cast<double>(j) / bins);

    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double r : res.r) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), r);
        ++counts[static_cast<std::size_t>(it - edges.begin())];
    }
    const double n = static_cast<double>(res.r.size());
    const double ideal = 1.0 / bins;
    double acc = 0.0;
    for (std::size_t j = 0; j < counts.size(); ++j) acc += std::abs(static_cast<double>(counts[j]) / n - ideal);
    return acc;
}

// Order-1 Wasserstein distance to N(0,1) by quantile matching:
// (1/N) sum |r_(i) - Phi^-1((i - 0.5)/N)|.
inline double wasserstein_to_std_normal(const NormalizedResiduals& res) {
    if (res.r.empty()) throw std::invalid_argument("wasserstein_to_std_normal: empty residuals");
    std::vector<double> sorted(res.r);
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double q = normal_quantile((static_cast<double>(i) + 0.5) / n);
        acc += std::abs(sorted[i] - q);
    }
    return acc / n;
}

// One-sample Kolmogorov-Smirnov distance to N(0,1).
inline double ks_to_std_normal(const NormalizedResiduals& res) {
    if (res.r.empty()) throw std::invalid_argument("ks_to_std_normal: empty residuals");
    std::vector<double> sorted(res.r);
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cdf = normal_cdf(sorted[i]);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - cdf);
        d = std::max(d, cdf - static_cast<double>(i) / n);
    }
    return d;
}

// Reporting NLL drops the constant log sqrt(2 pi).
inline double nll_report(std::span<const double> mu, std::span<const double> sigma, std::span<const double> y) {
    return gaussian_nll(mu, sigma, y, false);
}

inline double pearson(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size() || u.size() < 2)
        throw std::invalid_argument("pearson: need two equal-length samples of size >= 2");
    const double n = static_cast<double>(u.size());
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= n;
    mv /= n;
    double suv = 0.0, suu = 0.0, svv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double du = u[i] - mu, dv = v[i] - mv;
        suv += du * dv;
        suu += du * du;
        svv += dv * dv;
    }
    if (suu == 0.0 || svv == 0.0)
        throw std::domain_error("pearson: correlation undefined for zero-variance input");
    return suv / std::sqrt(suu * svv);
}

// One evaluated (method, dataset, split, fold) cell.
struct MetricReport {
    std::string method, dataset, split;
    int fold = 0;
    double rmse = 0, nll = 0, ece = 0, ws = 0, ks = 0;
};

inline std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string metric_csv_header() { return "method,dataset,split,fold,rmse,nll,ece,ws,ks"; }

inline std::string to_csv_row(const MetricReport& r) {
    return r.method + "," + r.dataset + "," + r.split + "," + std::to_string(r.fold) + "," + format_metric(r.rmse) +
           "," + format_metric(r.nll) + "," + format_metric(r.ece) + "," + format_metric(r.ws) + "," +
           format_metric(r.ks);
}

inline nlohmann::json to_json(const MetricReport& r) {
    return nlohmann::json{{"method", r.method}, {"dataset", r.dataset}, {"split", r.split}, {"fold", r.fold},
                          {"rmse", r.rmse},     {"nll", r.nll},         {"ece", r.ece},     {"ws", r.ws},
                          {"ks", r.ks}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.method = j.at("method").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.fold = j.at("fold").get<int>();
    r.rmse = j.at("rmse").get<double>();
    r.nll = j.at("nll").get<double>();
    r.ece = j.at("ece").get<double>();
    r.ws = j.at("ws").get<double>();
    r.ks = j.at("ks").get<double>();
    return r;
}

}  // namespace sml
