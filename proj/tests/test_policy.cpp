#include "rxpolicy/policy.hpp"

#include <doctest.h>

#include <cmath>

using namespace rxp;

TEST_SUITE("policy") {

TEST_CASE("policy_probs") {
    SUBCASE("xi = 0 is uniform") {
        Vec y(4);
        y << 1.0, 100.0, -3.0, 7.0;
        const auto dist = policy_probs(y, 0.0);
        for (int m = 0; m < 4; ++m) CHECK(dist.probs[m] == doctest::Approx(0.25).epsilon(1e-14));
    }
    SUBCASE("equal predictions are uniform for any xi") {
        const Vec y = Vec::Constant(3, 151.0);
        const auto dist = policy_probs(y, 2.5);
        for (int m = 0; m < 3; ++m)
            CHECK(dist.probs[m] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    SUBCASE("xi = 1, y = (0, ln 2) gives (2/3, 1/3)") {
        Vec y(2);
        y << 0.0, std::log(2.0);
        const auto dist = policy_probs(y, 1.0);
        CHECK(dist.probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
        CHECK(dist.probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    SUBCASE("probabilities sum to one") {
        Rng rng(1);
        for (int t = 0; t < 100; ++t) {
            Vec y(5);
            for (int m = 0; m < 5; ++m) y[m] = rng.uniform(-200, 200);
            const auto dist = policy_probs(y, rng.uniform(0, 3));
            CHECK(std::abs(dist.probs.sum() - 1.0) <= 1e-12);
        }
    }
    SUBCASE("shift invariance up to 1e6") {
        Rng rng(2);
        Vec y(3);
        y << 3.0, 1.0, 2.0;
        const auto base = policy_probs(y, 1.3);
        for (double c : {-1e6, -150.0, 1e-3, 42.0, 1e6}) {
            const auto shifted = policy_probs(y.array() + c, 1.3);
            for (int m = 0; m < 3; ++m)
                CHECK(shifted.probs[m] == doctest::Approx(base.probs[m]).epsilon(1e-12));
        }
    }
    SUBCASE("lower prediction means higher probability") {
        Rng rng(3);
        for (int t = 0; t < 100; ++t) {
            Vec y(4);
            for (int m = 0; m < 4; ++m) y[m] = rng.uniform(0, 10);
            const auto dist = policy_probs(y, 0.5 + rng.uniform());
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    if (y[a] < y[b]) CHECK(dist.probs[a] > dist.probs[b]);
        }
    }
    SUBCASE("argmin mass is non-decreasing in xi") {
        Vec y(3);
        y << 1.0, 2.0, 4.0;
        double prev = 0.0;
        for (double xi : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
            const double p = policy_probs(y, xi).probs[0];
            CHECK(p >= prev - 1e-15);
            prev = p;
        }
    }
}

TEST_CASE("sample_treatment") {
    SUBCASE("one-hot always returns its index") {
        PolicyDistribution dist;
        dist.probs = Vec::Zero(4);
        dist.probs[2] = 1.0;
        Rng rng(9);
        for (int t = 0; t < 100; ++t) CHECK(sample_treatment(dist, rng) == 2);
    }
    SUBCASE("uniform over two arms stays within 3 sigma of half") {
        PolicyDistribution dist;
        dist.probs = Vec::Constant(2, 0.5);
        Rng rng(10);
        const int draws = 100000;
        int ones = 0;
        for (int t = 0; t < draws; ++t) ones += sample_treatment(dist, rng);
        const double freq = static_cast<double>(ones) / draws;
        const double sigma = std::sqrt(0.25 / draws);
        CHECK(std::abs(freq - 0.5) <= 3.0 * sigma);
    }
    SUBCASE("same seed, same draw") {
        PolicyDistribution dist;
        dist.probs = Vec::Constant(5, 0.2);
        Rng a(123), b(123);
        for (int t = 0; t < 50; ++t) CHECK(sample_treatment(dist, a) == sample_treatment(dist, b));
    }
}

TEST_CASE("deterministic_choice") {
    Vec y(3);
    y << 3.0, 1.0, 2.0;
    CHECK(deterministic_choice(y) == 1);

    Vec tie(2);
    tie << 1.0, 1.0;
    CHECK(deterministic_choice(tie) == 0);

    SUBCASE("agrees with the large-xi softmax argmax") {
        Rng rng(11);
        for (int t = 0; t < 1000; ++t) {
            const int m = 2 + static_cast<int>(rng.uniform_int(5));
            Vec yh(m);
            for (int j = 0; j < m; ++j) yh[j] = rng.uniform(0, 10);
            const auto dist = policy_probs(yh, 1e6);
            int argmax = 0;
            for (int j = 1; j < m; ++j)
                if (dist.probs[j] > dist.probs[argmax]) argmax = j;
            CHECK(deterministic_choice(yh) == argmax);
        }
    }
}

TEST_CASE("regret_bound_sides") {
    SUBCASE("single arm: rhs dominates lhs") {
        Vec yh(1), yt(1);
        yh << 2.0;
        yt << 3.0;
        const auto [lhs, rhs] = regret_bound_sides(yh, yt, 0.7, 0);
        CHECK(lhs == doctest::Approx(3.0));
        CHECK(rhs == doctest::Approx(3.0 + 0.0 + 0.7 * (4.0 + 9.0) + 0.0));
        CHECK(lhs <= rhs);
    }
    SUBCASE("all-zero outcomes leave only the entropy term") {
        const Vec zero2 = Vec::Zero(2);
        for (double xi : {0.25, 1.0, 4.0}) {
            const auto [lhs, rhs] = regret_bound_sides(zero2, zero2, xi, 1);
            CHECK(lhs == doctest::Approx(0.0));
            CHECK(rhs == doctest::Approx(std::log(2.0) / xi).epsilon(1e-14));
        }
    }
    SUBCASE("1000 random instances never violate the bound for any arm") {
        Rng rng(12);
        int checked = 0;
        for (int t = 0; t < 1000; ++t) {
            const int m = 1 + static_cast<int>(rng.uniform_int(10));
            Vec yh(m), yt(m);
            for (int j = 0; j < m; ++j) {
                yh[j] = rng.uniform(0, 10);
                yt[j] = rng.uniform(0, 10);
            }
            const double xi = rng.uniform(1e-6, 2.0);
            for (int k = 0; k < m; ++k) {
                const auto [lhs, rhs] = regret_bound_sides(yh, yt, xi, k);
                CHECK(lhs <= rhs + 1e-9);
                ++checked;
            }
        }
        CHECK(checked > 1000);
    }
    SUBCASE("negative inputs are rejected") {
        Vec yh(2), yt(2);
        yh << 1.0, -0.1;
        yt << 1.0, 1.0;
        CHECK_THROWS_AS(regret_bound_sides(yh, yt, 1.0, 0), UsageError);
    }
}

TEST_CASE("expected_predicted_outcome") {
    Vec y(2);
    y << 1.0, 3.0;
    PolicyDistribution uniform;
    uniform.probs = Vec::Constant(2, 0.5);
    CHECK(expected_predicted_outcome(uniform, y) == doctest::Approx(2.0));

    PolicyDistribution onehot;
    onehot.probs = Vec::Zero(2);
    onehot.probs[1] = 1.0;
    CHECK(expected_predicted_outcome(onehot, y) == doctest::Approx(3.0));

    SUBCASE("large xi concentrates on the minimum") {
        Rng rng(14);
        for (int t = 0; t < 50; ++t) {
            Vec yh(4);
            for (int j = 0; j < 4; ++j) yh[j] = rng.uniform(0, 5);
            const auto dist = policy_probs(yh, 1e6);
            CHECK(expected_predicted_outcome(dist, yh) ==
                  doctest::Approx(yh.minCoeff()).epsilon(1e-6));
        }
    }
}

} // TEST_SUITE
