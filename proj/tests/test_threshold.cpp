#include "rxpolicy/threshold.hpp"

#include <doctest.h>

#include <cmath>

using namespace rxp;

namespace {

TreatmentGroup linear_group(int n, const Vec& beta_star, std::uint64_t seed, double noise = 0.0) {
    Rng rng(seed);
    TreatmentGroup g;
    g.treatment = 0;
    g.X = Mat(n, beta_star.size());
    g.y = Vec(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < beta_star.size(); ++j) g.X(i, j) = rng.normal();
        g.y[i] = g.X.row(i).dot(beta_star) + noise * rng.normal();
        g.source_rows.push_back(i);
    }
    return g;
}

} // namespace

TEST_SUITE("threshold") {

TEST_CASE("estimate_mu_c on a noiseless linear group is degenerate") {
    Vec beta_star(2);
    beta_star << 1.25, -0.5;
    const TreatmentGroup g = linear_group(40, beta_star, 7);
    Vec x(2);
    x << 0.7, -1.1;

    SolverOptions opts;
    opts.tolerance = 1e-10;
    const auto [mu, c] = estimate_mu_c(x, g, 28, 6, 1e-9, 3, opts);
    CHECK(c <= 1e-8);
    CHECK(mu == doctest::Approx(x.dot(beta_star)).epsilon(1e-6));
}

TEST_CASE("estimate_mu_c matches a scripted replay of its steps") {
    Vec beta_star(1);
    beta_star << 2.0;
    const TreatmentGroup g = linear_group(12, beta_star, 21, 0.5);
    Vec x(1);
    x << 0.4;
    const int a = 8, d = 2;
    const double r = 1e-3;
    const std::uint64_t seed = 99;

    const auto [mu, c] = estimate_mu_c(x, g, a, d, r, seed);

    // replay: same subsample draws, direct solver calls, hand-rolled moments
    Rng rng(seed);
    Vec preds(d);
    for (int i = 0; i < d; ++i) {
        const std::vector<int> rows = rng.sample_without_replacement(g.size(), a);
        Mat Xs(a, 1);
        Vec ys(a);
        for (int j = 0; j < a; ++j) {
            Xs(j, 0) = g.X(rows[j], 0);
            ys[j] = g.y[rows[j]];
        }
        preds[i] = x.dot(fit_rlad(Xs, ys, r).beta);
    }
    const double mu_replay = 0.5 * (preds[0] + preds[1]);
    const double c_replay = std::sqrt((preds[0] - mu_replay) * (preds[0] - mu_replay) +
                                      (preds[1] - mu_replay) * (preds[1] - mu_replay));
    CHECK(mu == doctest::Approx(mu_replay).epsilon(1e-12));
    CHECK(c == doctest::Approx(c_replay).epsilon(1e-12));

    // deterministic given the seed
    const auto again = estimate_mu_c(x, g, a, d, r, seed);
    CHECK(mu == again.first);
    CHECK(c == again.second);

    CHECK_THROWS_AS(estimate_mu_c(x, g, g.size(), d, r, seed), UsageError);
    CHECK_THROWS_AS(estimate_mu_c(x, g, a, 1, r, seed), UsageError);
}

TEST_CASE("threshold closed forms") {
    SUBCASE("zero slack gives zero threshold") {
        const Vec mu = Vec::Constant(3, 9.0);
        const Vec c = Vec::Zero(3);
        CHECK(threshold_randomized(9.0, mu, c, 0.05) == doctest::Approx(0.0));
    }
    SUBCASE("frozen numeric instance, M = 2") {
        Vec mu(2), c(2);
        mu << 7.0, 7.2;
        c << 0.5, 0.5;
        // sqrt(-2 * 0.25 * log(0.025)) and sqrt(-2 * 0.25 * log(0.05)),
        // evaluated independently at high precision
        CHECK(threshold_randomized(9.0, mu, c, 0.05) ==
              doctest::Approx(0.44189848425938050).epsilon(1e-15));
        CHECK(threshold_deterministic(9.0, mu, c, 0.05) ==
              doctest::Approx(0.57612658465959173).epsilon(1e-15));
    }
    SUBCASE("any arm at or above x_co clamps to zero") {
        Vec mu(2), c(2);
        mu << 4.0, 12.0;
        c << 0.3, 0.3;
        CHECK(threshold_randomized(10.0, mu, c, 0.05) == doctest::Approx(0.0));
    }
    SUBCASE("M = 1 randomized equals deterministic") {
        Vec mu(1), c(1);
        mu << 5.0;
        c << 0.7;
        CHECK(threshold_randomized(9.0, mu, c, 0.05) ==
              doctest::Approx(threshold_deterministic(9.0, mu, c, 0.05)));
    }
    SUBCASE("deterministic dominates randomized when both are positive") {
        Rng rng(31);
        for (int t = 0; t < 200; ++t) {
            const int m = 2 + static_cast<int>(rng.uniform_int(4));
            Vec mu(m), c(m);
            for (int j = 0; j < m; ++j) {
                mu[j] = rng.uniform(3, 6);
                c[j] = rng.uniform(0.05, 0.6);
            }
            const double x_co = 10.0;
            const double tr = threshold_randomized(x_co, mu, c, 0.05);
            const double td = threshold_deterministic(x_co, mu, c, 0.05);
            if (tr > 0.0 && td > 0.0) CHECK(td >= tr);
        }
    }
    SUBCASE("deterministic threshold: eps_bar near one removes the slack term") {
        Vec mu(2), c(2);
        mu << 5.0, 6.5;
        c << 0.4, 0.8;
        const double td = threshold_deterministic(9.0, mu, c, 1.0 - 1e-12);
        CHECK(td == doctest::Approx(9.0 - 6.5).epsilon(1e-6));
        // the randomized variant keeps its union-bound slack at finite M
        CHECK(threshold_randomized(9.0, mu, c, 1.0 - 1e-12) < td);
    }
    SUBCASE("monotone in mu, c, and x_co") {
        Rng rng(33);
        for (int t = 0; t < 100; ++t) {
            Vec mu(3), c(3);
            for (int j = 0; j < 3; ++j) {
                mu[j] = rng.uniform(4, 8);
                c[j] = rng.uniform(0.05, 0.8);
            }
            const double x_co = rng.uniform(8, 12);
            const double base = threshold_randomized(x_co, mu, c, 0.05);
            for (int j = 0; j < 3; ++j) {
                Vec mu_up = mu, c_up = c;
                mu_up[j] += 0.3;
                c_up[j] += 0.3;
                CHECK(threshold_randomized(x_co, mu_up, c, 0.05) <= base + 1e-12);
                CHECK(threshold_randomized(x_co, mu, c_up, 0.05) <= base + 1e-12);
            }
            CHECK(threshold_randomized(x_co + 0.5, mu, c, 0.05) >= base - 1e-12);
        }
    }
    SUBCASE("argument validation") {
        Vec mu(1), c(1);
        mu << 1.0;
        c << -0.1;
        CHECK_THROWS_AS(threshold_randomized(1.0, mu, c, 0.05), UsageError);
        c << 0.1;
        CHECK_THROWS_AS(threshold_randomized(1.0, mu, c, 0.0), UsageError);
        CHECK_THROWS_AS(threshold_randomized(1.0, mu, c, 1.0), UsageError);
    }
}

TEST_CASE("prescribe freeze semantics") {
    MuCEstimate est;
    est.mu = Vec::Constant(2, 10.0);
    est.c = Vec::Zero(2);
    est.a = 1;
    est.d = 2;

    SUBCASE("boundary: equality does not freeze") {
        // T = 0 (mu_m = x_co, c = 0) and both predictions equal x_co, so the
        // expected predicted outcome equals x_co - T exactly.
        const Vec y_hat = Vec::Constant(2, 10.0);
        PolicyConfig cfg;
        cfg.mode = PolicyMode::Randomized;
        cfg.xi = 1.0;
        Rng rng(1);
        const FreezeDecision d = prescribe_from_predictions(y_hat, 10.0, 0, cfg, est, 0.05, rng);
        CHECK(d.threshold == doctest::Approx(0.0));
        CHECK_FALSE(d.frozen);
    }
    SUBCASE("predictions far above x_co freeze onto the current arm") {
        Vec y_hat(2);
        y_hat << 25.0, 30.0;
        MuCEstimate low;
        low.mu = Vec::Constant(2, 5.0);
        low.c = Vec::Constant(2, 0.1);
        low.a = 1;
        low.d = 2;
        for (const PolicyMode mode : {PolicyMode::Randomized, PolicyMode::Deterministic}) {
            PolicyConfig cfg;
            cfg.mode = mode;
            cfg.xi = 0.8;
            Rng rng(2);
            const FreezeDecision d =
                prescribe_from_predictions(y_hat, 10.0, 1, cfg, low, 0.05, rng);
            CHECK(d.frozen);
            CHECK(d.treatment == 1);
            CHECK(d.threshold > 0.0);
        }
    }
    SUBCASE("unfrozen deterministic mode takes the argmin") {
        Vec y_hat(3);
        y_hat << 9.0, 4.0, 6.0;
        MuCEstimate low;
        low.mu = Vec::Constant(3, 5.0);
        low.c = Vec::Constant(3, 0.2);
        low.a = 1;
        low.d = 2;
        PolicyConfig cfg;
        cfg.mode = PolicyMode::Deterministic;
        Rng rng(3);
        const FreezeDecision d = prescribe_from_predictions(y_hat, 10.0, 0, cfg, low, 0.05, rng);
        CHECK_FALSE(d.frozen);
        CHECK(d.treatment == 1);
        CHECK(d.probs[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("coverage of the randomized and deterministic freeze guarantees") {
    // Simulate predictions as independent Gaussians matching (mu, C); the
    // sub-Gaussian constant of a Gaussian is its standard deviation, so the
    // tail bound applies exactly. Configurations are drawn in the regime the
    // guarantee covers (positive threshold).
    Rng rng(77);
    const int trials = 20000;
    const double eps_bar = 0.05;
    for (int config = 0; config < 10; ++config) {
        const int m = 2 + static_cast<int>(rng.uniform_int(4));
        Vec mu(m), c(m);
        for (int j = 0; j < m; ++j) {
            mu[j] = rng.uniform(5, 8);
            c[j] = rng.uniform(0.2, 1.0);
        }
        const double xi = rng.uniform(0.1, 2.0);
        // place x_co so that T > 0
        double worst = -1e300;
        for (int j = 0; j < m; ++j)
            worst = std::max(worst, mu[j] + std::sqrt(-2.0 * c[j] * c[j] * std::log(eps_bar / m)));
        const double x_co = worst + rng.uniform(0.1, 2.0);

        const double t_rand = threshold_randomized(x_co, mu, c, eps_bar);
        const double t_det = threshold_deterministic(x_co, mu, c, eps_bar);
        REQUIRE(t_rand > 0.0);

        int viol_rand = 0, viol_det = 0;
        for (int trial = 0; trial < trials; ++trial) {
            Vec y_hat(m);
            for (int j = 0; j < m; ++j) y_hat[j] = mu[j] + c[j] * rng.normal();
            const auto dist = policy_probs(y_hat, xi);
            if (expected_predicted_outcome(dist, y_hat) > x_co - t_rand) ++viol_rand;
            if (y_hat.minCoeff() > x_co - t_det) ++viol_det;
        }
        const double sigma = std::sqrt(eps_bar * (1.0 - eps_bar) / trials);
        CHECK(static_cast<double>(viol_rand) / trials <= eps_bar + 3.0 * sigma);
        CHECK(static_cast<double>(viol_det) / trials <= eps_bar + 3.0 * sigma);
    }
}

} // TEST_SUITE
