#include "rxpolicy/knn.hpp"

#include "rxpolicy/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace rxp;

namespace {

TreatmentGroup make_group(const Mat& X, const Vec& y) {
    TreatmentGroup g;
    g.treatment = 0;
    g.X = X;
    g.y = y;
    for (int i = 0; i < X.rows(); ++i) g.source_rows.push_back(i);
    return g;
}

} // namespace

TEST_SUITE("knn") {

TEST_CASE("weighted_distance") {
    Vec x(2), xi(2), w(2);
    x << 1.0, 2.0;
    xi << 0.0, 0.0;

    SUBCASE("identity") {
        w << 1.0, 1.0;
        CHECK(weighted_distance(x, x, w) == doctest::Approx(0.0));
    }
    SUBCASE("all-ones weights give squared Euclidean distance") {
        w << 1.0, 1.0;
        CHECK(weighted_distance(x, xi, w) == doctest::Approx(5.0));
    }
    SUBCASE("squared-coefficient metric, beta = (1, 3)") {
        w << 1.0, 9.0;
        CHECK(weighted_distance(x, xi, w) == doctest::Approx(37.0));
    }
    SUBCASE("symmetry and shape checks") {
        w << 2.0, 0.5;
        CHECK(weighted_distance(x, xi, w) == doctest::Approx(weighted_distance(xi, x, w)));
        CHECK_THROWS_AS(weighted_distance(x, Vec::Zero(3), w), UsageError);
    }
}

TEST_CASE("predict_knn") {
    Mat X(5, 1);
    X << 0.0, 1.0, 2.0, 3.0, 4.0;
    Vec y(5);
    y << 10.0, 20.0, 30.0, 40.0, 50.0;

    KnnPredictor pred;
    pred.weights = Vec::Ones(1);
    pred.X = X;
    pred.y = y;

    SUBCASE("k = 1 returns the nearest outcome") {
        pred.k = 1;
        Vec q(1);
        q << 2.2;
        CHECK(predict_knn(q, pred) == doctest::Approx(30.0));
    }
    SUBCASE("k = N returns the group mean") {
        pred.k = 5;
        Vec q(1);
        q << -100.0;
        CHECK(predict_knn(q, pred) == doctest::Approx(30.0));
    }
    SUBCASE("k = 2 matches a full-sort brute force on a crafted group") {
        Mat X2(5, 2);
        X2 << 0, 0, 1, 0, 0, 1, 2, 2, 0.5, 0.5;
        Vec y2(5);
        y2 << 1, 2, 3, 4, 5;
        Vec w(2);
        w << 1.0, 4.0;
        KnnPredictor p2{w, X2, y2, 2};
        Vec q(2);
        q << 0.1, 0.1;

        std::vector<std::pair<double, int>> dist;
        for (int i = 0; i < 5; ++i)
            dist.emplace_back(weighted_distance(q, X2.row(i).transpose(), w), i);
        std::sort(dist.begin(), dist.end());
        const double expected = 0.5 * (y2[dist[0].second] + y2[dist[1].second]);
        CHECK(predict_knn(q, p2) == doctest::Approx(expected));
    }
    SUBCASE("prediction stays within the outcome range") {
        Rng rng(3);
        pred.k = 3;
        for (int t = 0; t < 50; ++t) {
            Vec q(1);
            q << rng.uniform(-10, 10);
            const double v = predict_knn(q, pred);
            CHECK(v >= 10.0);
            CHECK(v <= 50.0);
        }
    }
    SUBCASE("zero weights fall back to the k lowest indices") {
        pred.weights = Vec::Zero(1);
        pred.k = 2;
        Vec q(1);
        q << 3.7;
        CHECK(predict_knn(q, pred) == doctest::Approx(15.0)); // rows 0 and 1
    }
}

TEST_CASE("neighbor ranking is invariant to monotone distance transforms and metric scaling") {
    Rng rng(5);
    Mat X(20, 3);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 3; ++j) X(i, j) = rng.normal();
    Vec y(20);
    for (int i = 0; i < 20; ++i) y[i] = rng.normal();
    Vec beta(3);
    beta << 0.5, -1.5, 2.0;
    const Vec w = beta.cwiseProduct(beta);

    for (int t = 0; t < 20; ++t) {
        Vec q(3);
        q << rng.normal(), rng.normal(), rng.normal();

        const std::vector<int> base = knn_neighbor_rows(q, X, w, 5);

        // sqrt is monotone: ordering by sqrt(d) equals ordering by d
        std::vector<std::pair<double, int>> by_sqrt;
        for (int i = 0; i < 20; ++i)
            by_sqrt.emplace_back(std::sqrt(weighted_distance(q, X.row(i).transpose(), w)), i);
        std::sort(by_sqrt.begin(), by_sqrt.end());
        for (int i = 0; i < 5; ++i) CHECK(by_sqrt[i].second == base[i]);

        // scaling beta by c scales every distance by c^2, same neighbors
        const Vec w_scaled = (3.0 * beta).cwiseProduct(3.0 * beta);
        CHECK(knn_neighbor_rows(q, X, w_scaled, 5) == base);

        KnnPredictor a{w, X, y, 5}, b{w_scaled, X, y, 5};
        CHECK(predict_knn(q, a) == doctest::Approx(predict_knn(q, b)));
    }
}

TEST_CASE("fit_k_rule") {
    SUBCASE("two exact points give K = sqrt(N)") {
        const KRule rule = fit_k_rule({{100, 10}, {400, 20}});
        CHECK(rule.a == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(rule.b == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(apply_k_rule(rule, 900) == 30);
        CHECK(apply_k_rule(rule, 2) == 1);  // round then clamp to [1, N]
        CHECK(apply_k_rule(rule, 1) == 1);
    }
    SUBCASE("repeated group size is degenerate") {
        CHECK_THROWS_AS(fit_k_rule({{100, 10}, {100, 12}, {100, 9}}), DataError);
        CHECK_THROWS_AS(fit_k_rule({{100, 10}}), UsageError);
    }
    SUBCASE("5 noisy pairs match the normal-equations oracle") {
        const std::vector<std::pair<int, int>> pairs{{100, 12}, {225, 14}, {400, 22},
                                                     {625, 24}, {900, 31}};
        const KRule rule = fit_k_rule(pairs);
        // direct 2x2 least squares
        double s1 = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
        for (auto [n, k] : pairs) {
            const double xv = std::sqrt(static_cast<double>(n));
            s1 += 1;
            sx += xv;
            sxx += xv * xv;
            sy += k;
            sxy += xv * k;
        }
        const double det = s1 * sxx - sx * sx;
        CHECK(rule.a == doctest::Approx((sy * sxx - sx * sxy) / det).epsilon(1e-8));
        CHECK(rule.b == doctest::Approx((s1 * sxy - sx * sy) / det).epsilon(1e-8));
    }
}

TEST_CASE("tune_k") {
    Rng rng(7);

    SUBCASE("singleton grid") {
        Mat X(12, 1);
        Vec y(12);
        for (int i = 0; i < 12; ++i) {
            X(i, 0) = rng.normal();
            y[i] = rng.normal();
        }
        const TreatmentGroup g = make_group(X, y);
        CHECK(tune_k(g, Vec::Ones(1), {3}, 3, 1) == 3);
    }
    SUBCASE("deterministic given the seed") {
        Mat X(30, 2);
        Vec y(30);
        for (int i = 0; i < 30; ++i) {
            X(i, 0) = rng.normal();
            X(i, 1) = rng.normal();
            y[i] = X(i, 0) + 0.5 * rng.normal();
        }
        const TreatmentGroup g = make_group(X, y);
        const int k1 = tune_k(g, Vec::Ones(2), {1, 3, 5, 9}, 5, 99);
        const int k2 = tune_k(g, Vec::Ones(2), {1, 3, 5, 9}, 5, 99);
        CHECK(k1 == k2);
    }
    SUBCASE("pure noise prefers heavy averaging on most seeds") {
        int larger_wins = 0;
        const int trials = 50;
        for (int t = 0; t < trials; ++t) {
            Rng noise(1000 + t);
            const int n = 24;
            Mat X(n, 1);
            Vec y(n);
            for (int i = 0; i < n; ++i) {
                X(i, 0) = noise.normal();
                y[i] = noise.normal();
            }
            const TreatmentGroup g = make_group(X, y);
            // 3 folds on 24 rows leave 16 training members per fold
            const int k = tune_k(g, Vec::Ones(1), {1, n - 10}, 3, 5);
            if (k == n - 10) ++larger_wins;
        }
        CHECK(larger_wins > trials / 2);
    }
}

} // TEST_SUITE
