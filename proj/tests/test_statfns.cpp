#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cma/statfns.hpp"

using namespace cma;

TEST_CASE("erfc reference values") {
    CHECK(stats::erfc(0.0) == 1.0);
    // frozen from an independent series/continued-fraction evaluation
    CHECK(stats::erfc(1.0) == Catch::Approx(0.15729920705028513).epsilon(0).margin(1e-12));
    CHECK(stats::erfc(0.5) == Catch::Approx(0.4795001221869535).epsilon(0).margin(1e-12));
    CHECK(stats::erfc(2.0) == Catch::Approx(0.004677734981047266).epsilon(0).margin(1e-12));
    CHECK(stats::erfc(-1.0) == Catch::Approx(2.0 - 0.15729920705028513).margin(1e-12));
}

TEST_CASE("erfc strictly decreasing on a grid") {
    // below about -5.7 the value saturates at 2.0 in double precision, so
    // start where the complement is still representable
    double prev = stats::erfc(-5.0);
    for (double x = -4.9; x <= 6.0; x += 0.1) {
        double cur = stats::erfc(x);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("inverfc round trip") {
    CHECK(stats::inverfc(1.0) == 0.0);
    CHECK(stats::inverfc(0.5) == Catch::Approx(0.4769362762044699).margin(1e-10));
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-4.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        double x = unif(rng);
        CHECK(stats::inverfc(stats::erfc(x)) == Catch::Approx(x).epsilon(0).margin(1e-9));
    }
    CHECK_THROWS_AS(stats::inverfc(0.0), invalid_input);
    CHECK_THROWS_AS(stats::inverfc(2.0), invalid_input);
}

TEST_CASE("normal quantile") {
    CHECK(stats::normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-15));
    CHECK(stats::normal_quantile(0.975) ==
          Catch::Approx(1.959963984540054).epsilon(0).margin(1e-9));
    CHECK(stats::normal_quantile(0.9) ==
          Catch::Approx(1.2815515655446004).epsilon(0).margin(1e-9));
    // identity with the chi-square quantile at one degree of freedom
    CHECK(std::sqrt(stats::chi2_quantile(0.95, 1)) ==
          Catch::Approx(stats::normal_quantile(0.975)).epsilon(0).margin(1e-8));
    CHECK_THROWS_AS(stats::normal_quantile(0.0), invalid_input);
    CHECK_THROWS_AS(stats::normal_quantile(1.0), invalid_input);
}

TEST_CASE("chi-square quantile reference values") {
    CHECK(stats::chi2_quantile(0.95, 1) ==
          Catch::Approx(3.841458820694124).epsilon(1e-10));
    CHECK(stats::chi2_quantile(0.95, 10) ==
          Catch::Approx(18.307038053275146).epsilon(1e-10));
    CHECK(stats::chi2_quantile(0.99, 5) ==
          Catch::Approx(15.08627246938899).epsilon(1e-10));
    CHECK(stats::chi2_quantile(0.10, 3) ==
          Catch::Approx(0.5843743741551835).epsilon(1e-10));
    CHECK_THROWS_AS(stats::chi2_quantile(0.0, 3), invalid_input);
    CHECK_THROWS_AS(stats::chi2_quantile(1.0, 3), invalid_input);
    CHECK_THROWS_AS(stats::chi2_quantile(0.5, 0), invalid_input);
}

TEST_CASE("chi-square quantile round trip and monotonicity") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> up(0.001, 0.999);
    std::uniform_int_distribution<int> ud(1, 200);
    for (int i = 0; i < 100; ++i) {
        double p = up(rng);
        int dof = ud(rng);
        double x = stats::chi2_quantile(p, dof);
        CHECK(stats::chi2_cdf(x, dof) == Catch::Approx(p).epsilon(1e-10));
    }
    for (int dof : {1, 4, 17}) {
        double prev = stats::chi2_quantile(0.01, dof);
        for (double p = 0.05; p < 1.0; p += 0.05) {
            double cur = stats::chi2_quantile(p, dof);
            CHECK(cur > prev);
            prev = cur;
        }
    }
}

TEST_CASE("t quantile reference values and limits") {
    CHECK(stats::t_quantile(0.5, 7) == 0.0);
    CHECK(stats::t_quantile(0.975, 10) ==
          Catch::Approx(2.2281388519649385).epsilon(1e-10));
    CHECK(stats::t_quantile(0.9, 4) == Catch::Approx(1.5332062740589432).epsilon(1e-10));
    CHECK(stats::t_quantile(0.6, 25) == Catch::Approx(0.25605968482715136).epsilon(1e-10));
    // normal limit at one million degrees of freedom
    CHECK(stats::t_quantile(0.975, 1000000) ==
          Catch::Approx(1.959964).epsilon(0).margin(1e-4));
    CHECK(stats::t_quantile(0.25, 10) == -stats::t_quantile(0.75, 10));
}

TEST_CASE("t quantile round trip") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> up(0.001, 0.999);
    std::uniform_int_distribution<int> ud(1, 500);
    for (int i = 0; i < 100; ++i) {
        double p = up(rng);
        int dof = ud(rng);
        double x = stats::t_quantile(p, dof);
        CHECK(stats::t_cdf(x, dof) == Catch::Approx(p).epsilon(0).margin(1e-10));
    }
}
