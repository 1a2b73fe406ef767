#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sml/metrics.hpp"
#include "sml/rng.hpp"

using namespace sml;

namespace {
NormalizedResiduals residuals_of(std::vector<double> r) {
    NormalizedResiduals out;
    out.r = std::move(r);
    return out;
}

// the sample whose order statistics sit exactly on the N(0,1) quantiles
std::vector<double> ideal_quantile_sample(std::size_t n) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return r;
}
}  // namespace

TEST_CASE("normal_quantile inverts the normal cdf", "[metrics]") {
    REQUIRE(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(normal_quantile(0.975) == Catch::Approx(1.9599639845400545).margin(1e-9));
    for (double p : {1e-8, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999, 1.0 - 1e-8}) {
        REQUIRE(normal_cdf(normal_quantile(p)) == Catch::Approx(p).margin(1e-12));
    }
    REQUIRE(std::isinf(normal_quantile(0.0)));
    REQUIRE(std::isinf(normal_quantile(1.0)));
    REQUIRE_THROWS_AS(normal_quantile(-0.1), std::invalid_argument);
}

TEST_CASE("rmse values and homogeneity", "[metrics]") {
    const std::vector<double> y{1.0, 2.0};
    REQUIRE(rmse(y, y) == 0.0);
    REQUIRE(rmse(std::vector<double>{3.0, 4.0}, std::vector<double>{0.0, 0.0}) ==
            Catch::Approx(std::sqrt(12.5)));
    const double base = rmse(std::vector<double>{1.0, -2.0, 0.5}, std::vector<double>{0.0, 0.0, 0.0});
    const double scaled = rmse(std::vector<double>{3.0, -6.0, 1.5}, std::vector<double>{0.0, 0.0, 0.0});
    REQUIRE(scaled == Catch::Approx(3.0 * base));
    REQUIRE_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("normalize_residuals clamps zero sigma", "[metrics]") {
    const std::vector<double> mu{1.0, 3.0}, y{1.0, 1.0};
    const NormalizedResiduals a = normalize_residuals(mu, std::vector<double>{1.0, 0.5}, y);
    REQUIRE(a.r[0] == 0.0);
    REQUIRE(a.r[1] == Catch::Approx(4.0));
    REQUIRE(a.sigma_clamp_count == 0);

    const NormalizedResiduals b = normalize_residuals(std::vector<double>{2.0}, std::vector<double>{0.0},
                                                      std::vector<double>{0.0});
    REQUIRE(b.sigma_clamp_count == 1);
    REQUIRE(std::isfinite(b.r[0]));
}

TEST_CASE("ece is zero for one point per bin", "[metrics]") {
    std::vector<double> r;
    for (int j = 0; j < 10; ++j) r.push_back(normal_quantile((j + 0.5) / 10.0));
    REQUIRE(ece(residuals_of(r), 10) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("ece of a single-bin pile is 1.8 at ten bins", "[metrics]") {
    const NormalizedResiduals r = residuals_of(std::vector<double>(37, 10.0));
    REQUIRE(ece(r, 10) == Catch::Approx(1.8).margin(1e-12));
}

TEST_CASE("ece of a large standard normal sample is small", "[metrics]") {
    Rng rng(13);
    std::vector<double> r(100000);
    for (double& v : r) v = rng.normal();
    REQUIRE(ece(residuals_of(r), 10) <= 0.02);
}

TEST_CASE("ece ignores ordering and respects its bound", "[metrics]") {
    Rng rng(14);
    std::vector<double> r(500);
    for (double& v : r) v = rng.normal(0.3, 2.0);
    const double before = ece(residuals_of(r), 10);
    Rng shuffler(15);
    std::vector<double> shuffled(r);
    shuffler.shuffle(shuffled);
    REQUIRE(ece(residuals_of(shuffled), 10) == before);
    REQUIRE(before >= 0.0);
    REQUIRE(before <= 2.0 * 9.0 / 10.0);
    REQUIRE_THROWS_AS(ece(residuals_of({}), 10), std::invalid_argument);
    REQUIRE_THROWS_AS(ece(residuals_of({1.0}), 1), std::invalid_argument);
}

TEST_CASE("wasserstein of the ideal quantile sample is zero", "[metrics]") {
    REQUIRE(wasserstein_to_std_normal(residuals_of(ideal_quantile_sample(10000))) ==
            Catch::Approx(0.0).margin(1e-3));
}

TEST_CASE("wasserstein picks up a mean shift as the shift", "[metrics]") {
    Rng rng(16);
    std::vector<double> r(100000);
    for (double& v : r) v = rng.normal(2.0, 1.0);
    REQUIRE(wasserstein_to_std_normal(residuals_of(r)) == Catch::Approx(2.0).margin(0.05));
}

TEST_CASE("wasserstein translation bound and tightness", "[metrics]") {
    Rng rng(17);
    std::vector<double> r(2000);
    for (double& v : r) v = rng.normal(0.2, 1.3);
    const double base = wasserstein_to_std_normal(residuals_of(r));
    const double c = 0.8;
    std::vector<double> shifted(r);
    for (double& v : shifted) v += c;
    const double moved = wasserstein_to_std_normal(residuals_of(shifted));
    REQUIRE(std::abs(moved - base) <= c + 1e-12);

    std::vector<double> ideal = ideal_quantile_sample(5000);
    for (double& v : ideal) v += c;
    REQUIRE(wasserstein_to_std_normal(residuals_of(ideal)) == Catch::Approx(c).margin(1e-6));
}

TEST_CASE("ks distance of the all-zero sample is one half", "[metrics]") {
    REQUIRE(ks_to_std_normal(residuals_of(std::vector<double>(100, 0.0))) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("ks distance near zero for the ideal sample and bounded always", "[metrics]") {
    REQUIRE(ks_to_std_normal(residuals_of(ideal_quantile_sample(10000))) <= 0.01);
    Rng rng(18);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> r(50);
        for (double& v : r) v = rng.normal(rng.uniform(-30.0, 30.0), 5.0);
        const double d = ks_to_std_normal(residuals_of(r));
        REQUIRE(d >= 0.0);
        REQUIRE(d <= 1.0);
    }
}

TEST_CASE("ks saturates where wasserstein still resolves", "[metrics]") {
    // a tight sample placed far out: both shifts are maximally ill-calibrated
    std::vector<double> base = ideal_quantile_sample(5000);
    for (double& v : base) v *= 0.1;
    std::vector<double> far(base), farther(base);
    for (double& v : far) v += 5.0;
    for (double& v : farther) v += 50.0;
    const double ks_far = ks_to_std_normal(residuals_of(far));
    const double ks_farther = ks_to_std_normal(residuals_of(farther));
    REQUIRE(std::abs(ks_far - ks_farther) <= 0.01);
    const double ws_far = wasserstein_to_std_normal(residuals_of(far));
    const double ws_farther = wasserstein_to_std_normal(residuals_of(farther));
    REQUIRE(ws_farther - ws_far == Catch::Approx(45.0).margin(0.1));
}

TEST_CASE("nll_report values and constant offset", "[metrics]") {
    const std::vector<double> y{1.0, -2.0};
    REQUIRE(nll_report(y, std::vector<double>{1.0, 1.0}, y) == 0.0);
    const double e = std::exp(1.0);
    REQUIRE(nll_report(y, std::vector<double>{e, e}, y) == Catch::Approx(1.0));
    REQUIRE(nll_report(std::vector<double>{1.0}, std::vector<double>{1.0}, std::vector<double>{0.0}) ==
            Catch::Approx(0.5));

    const std::vector<double> mu{0.3, 0.9}, sig{0.5, 2.0};
    REQUIRE(nll_report(mu, sig, y) + kLogSqrt2Pi ==
            Catch::Approx(gaussian_nll(mu, sig, y, true)).margin(1e-14));
}

TEST_CASE("pearson on exact linear relations", "[metrics]") {
    const std::vector<double> u{1.0, 2.0, 3.0, 4.0};
    std::vector<double> v;
    for (double x : u) v.push_back(2.0 * x + 1.0);
    REQUIRE(pearson(u, v) == Catch::Approx(1.0));
    for (auto& x : v) x = -x;
    REQUIRE(pearson(u, v) == Catch::Approx(-1.0));
    REQUIRE_THROWS_AS(pearson(u, std::vector<double>{1.0, 1.0, 1.0, 1.0}), std::domain_error);
    REQUIRE_THROWS_AS(pearson(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("metric report CSV keeps the fixed field order", "[metrics]") {
    REQUIRE(metric_csv_header() == "method,dataset,split,fold,rmse,nll,ece,ws,ks");
    MetricReport r;
    r.method = "SML";
    r.dataset = "toy";
    r.split = "iid-test";
    r.fold = 3;
    r.rmse = 0.5;
    r.nll = -1.25;
    r.ece = 0.375;
    r.ws = 0.125;
    r.ks = 0.0625;
    REQUIRE(to_csv_row(r) == "SML,toy,iid-test,3,0.5,-1.25,0.375,0.125,0.0625");
    const MetricReport back = metric_report_from_json(to_json(r));
    REQUIRE(back.method == r.method);
    REQUIRE(back.fold == r.fold);
    REQUIRE(back.ws == r.ws);
}
