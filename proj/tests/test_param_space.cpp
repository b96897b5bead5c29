#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "quadmix/param_space.hpp"
#include "test_util.hpp"

using namespace quadmix;

TEST_CASE("single-criterion weights normalize to exactly one") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [draw, params] = draw_params(1, 4, rng);
        for (const auto& row : params.alpha) {
            REQUIRE(row.size() == 1);
            CHECK(row[0] == 1.0);
        }
    }
}

TEST_CASE("lambda rescaling hits the range endpoints") {
    // raw 0 -> 10^0 = 1, raw 1 -> 10^3 = 1000
    CHECK(std::pow(10.0, 3.0 * 0.0) == 1.0);
    CHECK(std::pow(10.0, 3.0 * 1.0) == 1000.0);
    Rng rng(2);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto [draw, params] = draw_params(2, 3, rng);
        for (std::size_t m = 0; m < params.beta.size(); ++m) {
            const double expected = std::pow(10.0, 3.0 * draw.beta_raw[m][0]);
            CHECK(params.beta[m].lambda == expected);
            CHECK(params.beta[m].omega == 0.1 * draw.beta_raw[m][1]);
            CHECK(params.beta[m].eta == draw.beta_raw[m][2]);
            CHECK(params.beta[m].epsilon == draw.beta_raw[m][3] / 1000.0);
        }
    }
}

TEST_CASE("every draw satisfies the parameter invariants") {
    Rng rng(3);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto [draw, params] = draw_params(3, 5, rng);
        CHECK_NOTHROW(params.validate());
        CHECK(params.flat_size() == (3 + 4) * 5);
    }
}

TEST_CASE("mean domain weight follows the global weight across domains") {
    // Rank correlation between the drawn global weights and the average
    // per-domain weight of each criterion, across many draws.
    Rng rng(4);
    const int n_criteria = 3;
    const int n_domains = 8;
    std::vector<double> global_flat, mean_alpha_flat;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto [draw, params] = draw_params(n_criteria, n_domains, rng);
        double a_sum = 0.0;
        for (double a : draw.global_weights) a_sum += a;
        for (int n = 0; n < n_criteria; ++n) {
            double mean = 0.0;
            for (int m = 0; m < n_domains; ++m) {
                mean += params.alpha[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
            }
            mean /= n_domains;
            global_flat.push_back(draw.global_weights[static_cast<std::size_t>(n)] / a_sum);
            mean_alpha_flat.push_back(mean);
        }
    }
    CHECK(testutil::spearman(global_flat, mean_alpha_flat) > 0.9);
}

TEST_CASE("omega and log-lambda marginals are uniform") {
    Rng rng(5);
    std::vector<double> omegas, log_lambdas;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto [draw, params] = draw_params(3, 4, rng);
        omegas.push_back(params.beta[0].omega / 0.1);
        log_lambdas.push_back(std::log10(params.beta[0].lambda) / 3.0);
    }
    const double crit = testutil::ks_critical_01(omegas.size());
    CHECK(testutil::ks_uniform(omegas) < crit);
    CHECK(testutil::ks_uniform(log_lambdas) < crit);
}

TEST_CASE("flattening produces the documented layout and length") {
    Rng rng(6);
    const auto [draw, params] = draw_params(3, 26, rng);
    const auto flat = flatten(params);
    CHECK(flat.size() == 182);  // (3 + 4) * 26
    for (double c : flat) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
    // spot-check the first domain block
    CHECK(flat[0] == params.alpha[0][0]);
    CHECK(flat[3] == doctest::Approx(std::log10(params.beta[0].lambda) / 3.0));
    CHECK(flat[4] == doctest::Approx(params.beta[0].omega / 0.1));
    CHECK(flat[5] == params.beta[0].eta);
    CHECK(flat[6] == doctest::Approx(params.beta[0].epsilon * 1000.0));
}

TEST_CASE("flatten at the range minimum gives zero beta coordinates") {
    QuaDMixParams p;
    p.alpha = {{0.25, 0.25, 0.5}};
    p.beta = {BetaParams{1.0, 0.0, 0.0, 0.0}};
    const auto flat = flatten(p);
    CHECK(flat[3] == 0.0);
    CHECK(flat[4] == 0.0);
    CHECK(flat[5] == 0.0);
    CHECK(flat[6] == 0.0);
}

TEST_CASE("unflatten inverts flatten to high precision") {
    Rng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        const auto [draw, params] = draw_params(3, 6, rng);
        const auto flat = flatten(params);
        const QuaDMixParams back = unflatten(flat, 3, 6);
        for (int m = 0; m < 6; ++m) {
            for (int n = 0; n < 3; ++n) {
                CHECK(back.alpha[m][n] == doctest::Approx(params.alpha[m][n]).epsilon(1e-12));
            }
            CHECK(back.beta[m].lambda == doctest::Approx(params.beta[m].lambda).epsilon(1e-12));
            CHECK(back.beta[m].omega == doctest::Approx(params.beta[m].omega).epsilon(1e-12));
            CHECK(back.beta[m].eta == params.beta[m].eta);
            CHECK(back.beta[m].epsilon == doctest::Approx(params.beta[m].epsilon).epsilon(1e-12));
        }
    }
}

TEST_CASE("unflatten accepts an exact simplex row unchanged") {
    const std::vector<double> flat{0.2, 0.3, 0.5, 0.5, 0.5, 0.5, 0.5};
    const QuaDMixParams p = unflatten(flat, 3, 1);
    CHECK(p.alpha[0][0] == 0.2);
    CHECK(p.alpha[0][1] == 0.3);
    CHECK(p.alpha[0][2] == 0.5);
}

TEST_CASE("unflatten rejects out-of-range and corrupted vectors") {
    std::vector<double> flat{0.2, 0.3, 0.5, 0.5, 1.5, 0.5, 0.5};
    CHECK_THROWS_WITH_AS(unflatten(flat, 3, 1), doctest::Contains("outside"), DataError);
    // weight block far from the simplex signals corruption
    std::vector<double> drifted{0.2, 0.3, 0.4, 0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_WITH_AS(unflatten(drifted, 3, 1), doctest::Contains("corrupted"), DataError);
    std::vector<double> wrong_len{0.2, 0.3};
    CHECK_THROWS_WITH_AS(unflatten(wrong_len, 3, 1), doctest::Contains("length"), DataError);
}

TEST_CASE("params serialize and reload exactly") {
    testutil::ScratchDir dir("params_io");
    Rng rng(8);
    const auto [draw, params] = draw_params(3, 4, rng);
    params.save(dir.file("theta.json"));
    const QuaDMixParams back = QuaDMixParams::load(dir.file("theta.json"));
    CHECK(back.alpha == params.alpha);
    for (std::size_t m = 0; m < params.beta.size(); ++m) {
        CHECK(back.beta[m].lambda == params.beta[m].lambda);
        CHECK(back.beta[m].omega == params.beta[m].omega);
        CHECK(back.beta[m].eta == params.beta[m].eta);
        CHECK(back.beta[m].epsilon == params.beta[m].epsilon);
    }
}
