#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "sml/estimators.hpp"

using namespace sml;

namespace {

// y = x + N(0, noise) on x ~ U(-2, 2)
void linear_noisy_data(int n, double noise, std::uint64_t seed, Matrix& X, std::vector<double>& y) {
    Rng rng(seed);
    X = Matrix(static_cast<std::size_t>(n), 1);
    y.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        X(i, 0) = rng.uniform(-2.0, 2.0);
        y[i] = X(i, 0) + rng.normal(0.0, noise);
    }
}

TrainConfig small_config(int epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.hidden = {16, 16};
    cfg.epochs = epochs;
    cfg.batch_size = 100;
    cfg.seed = seed;
    return cfg;
}

// wraps a hand-built net as a model with identity normalization
TrainedModel wrap_model(Method kind, std::vector<Mlp> members, double keep_prob = 0.9) {
    TrainedModel m;
    m.kind = kind;
    m.members = std::move(members);
    m.config.keep_prob = keep_prob;
    m.norm.x_mean.assign(static_cast<std::size_t>(m.members.front().input_dim()), 0.0);
    m.norm.x_std.assign(static_cast<std::size_t>(m.members.front().input_dim()), 1.0);
    return m;
}

}  // namespace

TEST_CASE("method names round trip", "[estimators]") {
    for (Method m : {Method::mc, Method::mc_ll, Method::sml, Method::pu, Method::de, Method::pu_de})
        REQUIRE(parse_method(method_name(m)) == m);
    REQUIRE_THROWS_AS(parse_method("nope"), std::invalid_argument);
}

TEST_CASE("sml with zero beta and full keep matches plain mse training", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(80, 0.3, 5, X, y);

    TrainConfig cfg = small_config(15, 42);
    cfg.beta = 0.0;
    cfg.keep_prob = 1.0;
    cfg.ensemble_size = 2;
    const TrainedModel as_sml = train_estimator(Method::sml, X, y, cfg);
    const TrainedModel as_de = train_estimator(Method::de, X, y, cfg);

    // same member label, same shuffle stream, same gradient arithmetic
    const Mlp& a = as_sml.members.front();
    const Mlp& b = as_de.members.front();
    for (std::size_t l = 0; l < a.layer_count(); ++l) {
        REQUIRE(a.weights[l].a == b.weights[l].a);
        REQUIRE(a.biases[l] == b.biases[l]);
    }
}

TEST_CASE("training is deterministic per seed", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(60, 0.3, 6, X, y);
    const TrainConfig cfg = small_config(10, 7);
    const TrainedModel m1 = train_estimator(Method::sml, X, y, cfg);
    const TrainedModel m2 = train_estimator(Method::sml, X, y, cfg);
    for (std::size_t l = 0; l < m1.members[0].layer_count(); ++l)
        REQUIRE(m1.members[0].weights[l].a == m2.members[0].weights[l].a);

    std::vector<double> x0{0.5};
    Rng ra(9), rb(9);
    const PredictiveEstimate e1 = predict(m1, x0, 50, ra);
    const PredictiveEstimate e2 = predict(m2, x0, 50, rb);
    REQUIRE(e1.mu == e2.mu);
    REQUIRE(e1.sigma_total == e2.sigma_total);
}

TEST_CASE("degenerate ensemble of identical members has zero spread", "[estimators]") {
    const Mlp net = mlp_init({1, 8, 1}, HeadKind::point, 3);
    const TrainedModel model = wrap_model(Method::de, {net, net, net, net, net});
    Rng rng(0);
    const PredictiveEstimate est = predict(model, std::vector<double>{0.7}, 2, rng);
    REQUIRE(est.sigma_drop == 0.0);
    REQUIRE(est.sigma_total == 0.0);
    REQUIRE(est.mu == forward(net, std::vector<double>{0.7})[0]);
}

TEST_CASE("sml prediction with keep_prob 1 collapses to the point estimate", "[estimators]") {
    const Mlp net = mlp_init({1, 8, 1}, HeadKind::point, 4);
    const TrainedModel model = wrap_model(Method::sml, {net}, 1.0);
    Rng rng(1);
    const PredictiveEstimate est = predict(model, std::vector<double>{0.3}, 50, rng);
    REQUIRE(est.sigma_drop == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(est.spread == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(est.sigma_total == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(est.mu == forward(net, std::vector<double>{0.3})[0]);
}

TEST_CASE("sigma_total is exactly the sum of its parts", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(60, 0.4, 8, X, y);
    const TrainedModel model = train_estimator(Method::sml, X, y, small_config(10, 11));
    Rng rng(2);
    for (double xv : {-1.5, -0.2, 0.0, 0.9, 1.7}) {
        const PredictiveEstimate est = predict(model, std::vector<double>{xv}, 64, rng);
        REQUIRE(est.sigma_total == est.sigma_drop + est.spread);
        REQUIRE(est.sigma_total >= 0.0);
    }
}

TEST_CASE("pu-de aggregates by gaussian mixture moments", "[estimators]") {
    // two parametric members with constant outputs (0, s) and (2, s)
    auto make_member = [](double mu_out) {
        Mlp net = mlp_init({1, 2, 2}, HeadKind::mean_and_sigma, 1);
        for (auto& w : net.weights) std::fill(w.a.begin(), w.a.end(), 0.0);
        net.biases[1][0] = mu_out;
        net.biases[1][1] = 0.5413248546129181;  // softplus = 1 - 1e-6, sigma = 1
        return net;
    };
    const TrainedModel model = wrap_model(Method::pu_de, {make_member(0.0), make_member(2.0)});
    Rng rng(0);
    const PredictiveEstimate est = predict(model, std::vector<double>{0.0}, 2, rng);
    REQUIRE(est.mu == Catch::Approx(1.0));
    REQUIRE(est.sigma_total == Catch::Approx(std::sqrt(2.0)).margin(1e-6));

    // identical members return the member estimate exactly
    const Mlp one = make_member(0.7);
    const TrainedModel same = wrap_model(Method::pu_de, {one, one, one, one, one});
    Rng rng2(0);
    const PredictiveEstimate est_same = predict(same, std::vector<double>{0.0}, 2, rng2);
    const std::vector<double> out = forward(one, std::vector<double>{0.0});
    REQUIRE(est_same.mu == out[0]);
    REQUIRE(est_same.sigma_total == out[1]);
}

TEST_CASE("mc prediction with deterministic sub-networks has zero sigma", "[estimators]") {
    const Mlp net = mlp_init({1, 4, 1}, HeadKind::point, 5);
    const TrainedModel model = wrap_model(Method::mc, {net}, 1.0);
    Rng rng(3);
    const PredictiveEstimate est = predict(model, std::vector<double>{0.1}, 32, rng);
    REQUIRE(est.sigma_drop == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(est.spread == 0.0);
}

TEST_CASE("subnetwork_samples consistency with predict", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(60, 0.4, 12, X, y);
    TrainConfig cfg = small_config(8, 13);
    const TrainedModel model = train_estimator(Method::mc, X, y, cfg);

    const std::vector<double> x0{0.4};
    Rng r1(21), r2(21);
    const std::vector<double> samples = subnetwork_samples(model, x0, 100, r1);
    const PredictiveEstimate est = predict(model, x0, 100, r2);
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= 100.0;
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    REQUIRE(std::sqrt(var / 100.0) == Catch::Approx(est.sigma_drop).margin(1e-12));
    REQUIRE(mean == Catch::Approx(est.mu).margin(1e-12));

    const TrainedModel pu_model = wrap_model(Method::pu, {mlp_init({1, 2, 2}, HeadKind::mean_and_sigma, 1)});
    Rng r3(0);
    REQUIRE_THROWS_AS(subnetwork_samples(pu_model, x0, 10, r3), std::logic_error);
}

TEST_CASE("subnetwork_samples with keep_prob 1 are all identical", "[estimators]") {
    const Mlp net = mlp_init({1, 6, 1}, HeadKind::point, 6);
    const TrainedModel model = wrap_model(Method::sml, {net}, 1.0);
    Rng rng(4);
    const std::vector<double> samples = subnetwork_samples(model, std::vector<double>{0.2}, 32, rng);
    for (double v : samples) REQUIRE(v == samples.front());
}

TEST_CASE("mask variance of a linear-regime net matches the closed form", "[estimators]") {
    // positive weights and large hidden biases keep ReLU in its linear branch,
    // so the masked output is b2 + sum_i w2_i a_i Bern(p)/p with known variance
    Mlp net = mlp_init({2, 8, 1}, HeadKind::point, 44);
    for (auto& v : net.weights[0].a) v = std::abs(v);
    for (auto& v : net.biases[0]) v = 4.0;

    const std::vector<double> x{0.8, 0.6};
    ForwardCache cache;
    forward(net, x, nullptr, &cache);
    const double p = 0.9;
    double analytic_var = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        const double c = net.weights[1](0, i) * cache.act[0][i];
        analytic_var += c * c * (1.0 - p) / p;
    }

    const TrainedModel model = wrap_model(Method::mc, {net}, p);
    Rng rng(5);
    const int T = 100000;
    const std::vector<double> samples = subnetwork_samples(model, x, T, rng);
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= T;
    double m2 = 0.0, m4 = 0.0;
    for (double v : samples) {
        const double d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= T;
    m4 /= T;
    const double se_var = std::sqrt((m4 - m2 * m2) / T);
    REQUIRE(std::abs(m2 - analytic_var) <= 3.0 * se_var);
}

TEST_CASE("sml learns the aleatoric scale of a linear target", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(500, 0.5, 31, X, y);

    TrainConfig cfg;
    cfg.hidden = {50, 50};
    cfg.epochs = 250;
    cfg.batch_size = 100;
    cfg.seed = 17;
    const TrainedModel model = train_estimator(Method::sml, X, y, cfg);

    Matrix Xh;
    std::vector<double> yh;
    linear_noisy_data(200, 0.5, 99, Xh, yh);
    Rng rng(7);
    double mean_sigma = 0.0, resid_sq = 0.0;
    for (std::size_t i = 0; i < Xh.rows; ++i) {
        const PredictiveEstimate est = predict(model, {Xh.row(i), 1}, 200, rng);
        mean_sigma += est.sigma_total;
        resid_sq += (est.mu - yh[i]) * (est.mu - yh[i]);
    }
    mean_sigma /= static_cast<double>(Xh.rows);
    const double resid_std = std::sqrt(resid_sq / static_cast<double>(Xh.rows));
    REQUIRE(mean_sigma > 0.25);
    REQUIRE(mean_sigma < 0.75);
    REQUIRE(resid_std == Catch::Approx(0.5).margin(0.15));  // held-out residual scale
}

TEST_CASE("mc underestimates where sml tracks the noise", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(400, 0.5, 51, X, y);
    TrainConfig cfg;
    cfg.hidden = {50, 50};
    cfg.epochs = 150;
    cfg.batch_size = 100;
    cfg.seed = 23;
    const TrainedModel mc = train_estimator(Method::mc, X, y, cfg);
    const TrainedModel ours = train_estimator(Method::sml, X, y, cfg);

    Rng rng(8);
    double mc_sigma = 0.0, sml_sigma = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::vector<double> x0{-2.0 + 4.0 * i / 49.0};
        mc_sigma += predict(mc, x0, 100, rng).sigma_total;
        sml_sigma += predict(ours, x0, 100, rng).sigma_total;
    }
    REQUIRE(mc_sigma < sml_sigma);
}

TEST_CASE("pu training fits mean and variance heads", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(500, 0.4, 61, X, y);
    TrainConfig cfg;
    cfg.hidden = {32, 32};
    cfg.epochs = 200;
    cfg.batch_size = 100;
    cfg.seed = 29;
    const TrainedModel model = train_estimator(Method::pu, X, y, cfg);
    Rng rng(9);
    double mean_sigma = 0.0;
    double worst_mu = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double xv = -1.8 + 3.6 * i / 19.0;
        const PredictiveEstimate est = predict(model, std::vector<double>{xv}, 2, rng);
        mean_sigma += est.sigma_total;
        worst_mu = std::max(worst_mu, std::abs(est.mu - xv));
    }
    mean_sigma /= 20.0;
    REQUIRE(worst_mu < 0.25);
    REQUIRE(mean_sigma == Catch::Approx(0.4).margin(0.2));
}

TEST_CASE("training divergence is reported with the epoch", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(50, 0.1, 71, X, y);
    TrainConfig cfg = small_config(5, 3);
    cfg.learning_rate = 1e200;  // first update overflows the next forward pass
    try {
        train_estimator(Method::pu, X, y, cfg);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        REQUIRE(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("model serialization round trips bit-exactly", "[estimators]") {
    Matrix X;
    std::vector<double> y;
    linear_noisy_data(60, 0.3, 81, X, y);
    TrainConfig cfg = small_config(8, 91);
    const TrainedModel model = train_estimator(Method::sml, X, y, cfg);

    const std::string path =
        (std::filesystem::temp_directory_path() / "sml_model_roundtrip.json").string();
    save_model(model, path);
    const TrainedModel back = load_model(path);

    REQUIRE(back.kind == model.kind);
    REQUIRE(back.config.beta == model.config.beta);
    REQUIRE(back.norm.x_mean == model.norm.x_mean);
    REQUIRE(back.norm.y_std == model.norm.y_std);
    REQUIRE(back.members.size() == model.members.size());
    for (std::size_t l = 0; l < model.members[0].layer_count(); ++l) {
        REQUIRE(back.members[0].weights[l].a == model.members[0].weights[l].a);
        REQUIRE(back.members[0].biases[l] == model.members[0].biases[l]);
    }

    Rng r1(5), r2(5);
    const PredictiveEstimate e1 = predict(model, std::vector<double>{0.25}, 64, r1);
    const PredictiveEstimate e2 = predict(back, std::vector<double>{0.25}, 64, r2);
    REQUIRE(e1.mu == e2.mu);
    REQUIRE(e1.sigma_total == e2.sigma_total);
    REQUIRE(e1.sigma_drop == e2.sigma_drop);
    REQUIRE(e1.spread == e2.spread);
}

TEST_CASE("predict input validation", "[estimators]") {
    const Mlp net = mlp_init({2, 4, 1}, HeadKind::point, 10);
    const TrainedModel model = wrap_model(Method::mc, {net});
    Rng rng(0);
    REQUIRE_THROWS_AS(predict(model, std::vector<double>{1.0}, 10, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(predict(model, std::vector<double>{1.0, 2.0}, 1, rng), std::invalid_argument);
}
