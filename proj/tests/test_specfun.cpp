#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fvb/error.hpp"
#include "fvb/specfun.hpp"
#include "oracle_quadrature.hpp"

using namespace fvb::specfun;

namespace {
constexpr double euler = 0.5772156649015328606;
}

TEST_CASE("ln_gamma known values") {
    CHECK(std::fabs(ln_gamma(1.0)) < 1e-13);
    CHECK(ln_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-13));
    CHECK(ln_gamma(0.5) == doctest::Approx(0.5 * std::log(M_PI)).epsilon(1e-13));
    CHECK(ln_gamma(2.0) == doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("ln_gamma against libm across the working range") {
    for (double x = 0.05; x < 50.0; x += 0.173) {
        double ref = static_cast<double>(lgammal(static_cast<long double>(x)));
        CHECK(std::fabs(ln_gamma(x) - ref) <= 1e-12 * std::max(1.0, std::fabs(ref)));
    }
    for (double x : {1e-3, 1e2, 1e4, 1e6}) {
        double ref = static_cast<double>(lgammal(static_cast<long double>(x)));
        CHECK(std::fabs(ln_gamma(x) - ref) <= 1e-12 * std::max(1.0, std::fabs(ref)));
    }
}

TEST_CASE("digamma identities") {
    CHECK(digamma(1.0) == doctest::Approx(-euler).epsilon(1e-12));
    CHECK(digamma(2.0) == doctest::Approx(1.0 - euler).epsilon(1e-12));
    // psi(n + 1/2) = -euler - 2 ln 2 + 2 sum_{k=1}^{n} 1/(2k-1)
    double odd = 0.0;
    for (int k = 1; k <= 10; ++k) odd += 1.0 / (2 * k - 1);
    double closed = -euler - 2.0 * std::log(2.0) + 2.0 * odd;
    CHECK(digamma(10.5) == doctest::Approx(closed).epsilon(1e-12));
}

TEST_CASE("digamma against independent series summation") {
    for (double x : {0.1, 0.5, 1.3, 2.7, 6.0, 10.5, 33.3, 120.0}) {
        double ref = static_cast<double>(oracle::digamma_series(static_cast<long double>(x)));
        CHECK(std::fabs(digamma(x) - ref) <= 1e-10);
    }
}

TEST_CASE("ln_multigamma reduces and recurses") {
    CHECK(ln_multigamma(1, 3.2) == doctest::Approx(ln_gamma(3.2)).epsilon(1e-13));
    // Gamma_2(a) = sqrt(pi) Gamma(a) Gamma(a - 1/2)
    double a = 4.7;
    double expected = 0.5 * std::log(M_PI) + ln_gamma(a) + ln_gamma(a - 0.5);
    CHECK(ln_multigamma(2, a) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("beta quantile uniform and symmetric cases") {
    CHECK(beta_quantile(0.025, 1.0, 1.0) == doctest::Approx(0.025).epsilon(1e-12));
    CHECK(beta_quantile(0.975, 1.0, 1.0) == doctest::Approx(0.975).epsilon(1e-12));
    for (double a : {0.5, 1.0, 2.0, 17.0, 400.0}) {
        CHECK(beta_quantile(0.5, a, a) == doctest::Approx(0.5).epsilon(1e-10));
    }
}

TEST_CASE("beta quantile against quadrature oracle") {
    double q = beta_quantile(0.975, 10.0, 5.0);
    double ref = static_cast<double>(oracle::beta_quantile(0.975L, 10.0L, 5.0L));
    CHECK(std::fabs(q - ref) <= 1e-10);
    for (double p : {0.01, 0.2, 0.5, 0.8, 0.99}) {
        for (auto [a, b] : {std::pair{2.0, 3.0}, {30.0, 70.0}, {0.7, 1.4}, {500.0, 500.0}}) {
            double qq = beta_quantile(p, a, b);
            long double cdf = oracle::beta_cdf(static_cast<long double>(qq), a, b);
            CHECK(std::fabs(static_cast<double>(cdf) - p) <= 1e-9);
        }
    }
}

TEST_CASE("student t quantile symmetry and normal limit") {
    for (double df : {1.0, 3.0, 10.0, 250.0}) {
        CHECK(student_t_quantile(0.5, df) == 0.0);
    }
    CHECK(student_t_quantile(0.975, 1e7) == doctest::Approx(1.959964).epsilon(1e-6));
}

TEST_CASE("student t quantile against quadrature oracle") {
    double q = student_t_quantile(0.975, 5.0);
    double ref = static_cast<double>(oracle::student_t_quantile(0.975L, 5.0L));
    CHECK(std::fabs(q - ref) <= 1e-9);
    for (double p : {0.025, 0.1, 0.6, 0.95, 0.995}) {
        for (double df : {1.0, 2.5, 8.0, 100.0}) {
            double qq = student_t_quantile(p, df);
            long double cdf = oracle::student_t_cdf(static_cast<long double>(qq), df);
            CHECK(std::fabs(static_cast<double>(cdf) - p) <= 1e-9);
        }
    }
}

TEST_CASE("normal quantile anchors") {
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK(normal_cdf(normal_quantile(0.975)) == doctest::Approx(0.975).epsilon(1e-14));
    CHECK(normal_quantile(0.8413447460685429) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
}

TEST_CASE("normal quantile against quadrature oracle") {
    for (double p : {0.001, 0.025, 0.3, 0.5, 0.77, 0.975, 0.999}) {
        double q = normal_quantile(p);
        long double cdf = oracle::normal_cdf(static_cast<long double>(q));
        CHECK(std::fabs(static_cast<double>(cdf) - p) <= 1e-12);
    }
}

TEST_CASE("gamma quantile against quadrature oracle") {
    for (double p : {0.01, 0.25, 0.5, 0.9, 0.99}) {
        for (double shape : {0.5, 1.0, 4.0, 50.0}) {
            double q = gamma_quantile(p, shape, 1.0);
            long double cdf = oracle::gamma_cdf(static_cast<long double>(q), shape);
            CHECK(std::fabs(static_cast<double>(cdf) - p) <= 1e-9);
        }
    }
    // rate scales inversely
    CHECK(gamma_quantile(0.7, 3.0, 2.0) ==
          doctest::Approx(0.5 * gamma_quantile(0.7, 3.0, 1.0)).epsilon(1e-12));
}

TEST_CASE("cdf/quantile round trips") {
    for (double p = 0.02; p < 1.0; p += 0.07) {
        CHECK(beta_cdf(beta_quantile(p, 7.0, 3.0), 7.0, 3.0) == doctest::Approx(p).epsilon(1e-10));
        CHECK(student_t_cdf(student_t_quantile(p, 6.0), 6.0) == doctest::Approx(p).epsilon(1e-10));
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
        CHECK(gamma_cdf_shape(gamma_quantile(p, 2.5, 1.0), 2.5) ==
              doctest::Approx(p).epsilon(1e-10));
    }
}

TEST_CASE("quantile request dispatch") {
    QuantileRequest r;
    r.dist = QuantileRequest::Dist::Beta;
    r.probability = 0.3;
    r.a = 4.0;
    r.b = 2.0;
    CHECK(quantile(r) == beta_quantile(0.3, 4.0, 2.0));
    r.dist = QuantileRequest::Dist::StudentT;
    r.a = 9.0;
    CHECK(quantile(r) == student_t_quantile(0.3, 9.0));
    r.dist = QuantileRequest::Dist::StandardNormal;
    CHECK(quantile(r) == normal_quantile(0.3));
    r.dist = QuantileRequest::Dist::Gamma;
    r.a = 2.0;
    r.b = 3.0;
    CHECK(quantile(r) == gamma_quantile(0.3, 2.0, 3.0));
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(beta_quantile(0.0, 1.0, 1.0), fvb::NumericError);
    CHECK_THROWS_AS(beta_quantile(0.5, -1.0, 1.0), fvb::NumericError);
    CHECK_THROWS_AS(student_t_quantile(1.0, 5.0), fvb::NumericError);
    CHECK_THROWS_AS(normal_quantile(-0.1), fvb::NumericError);
    CHECK_THROWS_AS(gamma_quantile(0.5, 0.0, 1.0), fvb::NumericError);
}
