#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lssm/rng.hpp"

using namespace lssm;

TEST_CASE("same (seed, index) reproduces the identical sequence", "[rng]") {
    RngStream a(123, 4);
    RngStream b(123, 4);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next_gaussian() == b.next_gaussian());
    }
}

TEST_CASE("distinct stream indices give uncorrelated gaussians", "[rng]") {
    const int n = 20000;
    RngStream a(99, 0);
    RngStream b(99, 1);
    double sum_ab = 0.0, sum_a = 0.0, sum_b = 0.0, sum_a2 = 0.0, sum_b2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = a.next_gaussian();
        const double y = b.next_gaussian();
        sum_ab += x * y;
        sum_a += x;
        sum_b += y;
        sum_a2 += x * x;
        sum_b2 += y * y;
    }
    const double corr = (sum_ab / n - (sum_a / n) * (sum_b / n)) /
                        std::sqrt((sum_a2 / n) * (sum_b2 / n));
    CHECK(std::abs(corr) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("gaussian moments are sane", "[rng]") {
    const int n = 200000;
    RngStream r(7, 0);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.next_gaussian();
        s1 += x;
        s2 += x * x;
    }
    CHECK(std::abs(s1 / n) <= 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(s2 / n - 1.0) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("serialize/deserialize round-trips the stream state", "[rng]") {
    RngStream r(555, 2);
    for (int i = 0; i < 7; ++i) r.next_gaussian(); // odd count leaves a cached value
    const auto blob = r.serialize();
    RngStream restored = RngStream::deserialize(blob.data(), blob.size());
    REQUIRE(restored == r);
    for (int i = 0; i < 50; ++i) {
        REQUIRE(restored.next_gaussian() == r.next_gaussian());
    }
}
