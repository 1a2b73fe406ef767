#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sml/rng.hpp"

using sml::Rng;

TEST_CASE("same seed gives identical streams", "[rng]") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    bool all_equal = true;
    for (int i = 0; i < 10; ++i) all_equal = all_equal && c.next_u64() == d.next_u64();
    REQUIRE_FALSE(all_equal);
}

TEST_CASE("derived streams are stable and distinct per label", "[rng]") {
    Rng root(7);
    Rng x1 = root.derive("alpha");
    Rng x2 = root.derive("alpha");
    Rng y = root.derive("beta");
    REQUIRE(x1.next_u64() == x2.next_u64());
    REQUIRE(x1.seed() != y.seed());
    REQUIRE(sml::derive_seed(7, "alpha") != sml::derive_seed(8, "alpha"));
}

TEST_CASE("uniform stays in range and is roughly flat", "[rng]") {
    Rng rng(1);
    double mean = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        mean += u;
    }
    mean /= n;
    // SE of the mean is ~0.00091
    REQUIRE(std::abs(mean - 0.5) < 0.003);

    const double v = rng.uniform(-3.0, 3.0);
    REQUIRE(v >= -3.0);
    REQUIRE(v < 3.0);
}

TEST_CASE("normal has the right first two moments", "[rng]") {
    Rng rng(2);
    const int n = 100000;
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        mean += z;
        sq += z * z;
    }
    mean /= n;
    sq /= n;
    REQUIRE(std::abs(mean) < 0.01);                // 3 SE ~ 0.0095
    REQUIRE(std::abs(sq - 1.0) < 0.02);            // var of z^2 is 2
    REQUIRE(std::abs(rng.normal(10.0, 0.0) - 10.0) < 1e-12);
}

TEST_CASE("bernoulli hits its rate", "[rng]") {
    Rng rng(3);
    int kept = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        if (rng.bernoulli(0.9)) ++kept;
    REQUIRE(std::abs(kept / static_cast<double>(n) - 0.9) < 0.01);
}

TEST_CASE("shuffle is a deterministic permutation", "[rng]") {
    std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> v2 = v1;
    Rng a(11), b(11);
    a.shuffle(v1);
    b.shuffle(v2);
    REQUIRE(v1 == v2);
    std::vector<int> sorted = v1;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}
