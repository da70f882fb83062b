#pragma once

// Self-contained special functions and quantile routines. Everything here is a
// pure function of its arguments; no hidden state, safe to call concurrently.

#include <cstdint>

namespace fvb::specfun {

// log Gamma(x), x > 0. Relative error <= 1e-12 on [1e-3, 1e6].
double ln_gamma(double x);

// digamma psi(x), x > 0. Absolute error <= 1e-10 on [1e-3, 1e6].
double digamma(double x);

// log of the multivariate gamma function Gamma_p(a), a > (p-1)/2.
double ln_multigamma(int p, double a);

// Regularized incomplete beta I_x(a, b).
double beta_cdf(double x, double a, double b);

// Inverse of I_x(a, b): |I_x(a,b) - p| <= 1e-10.
double beta_quantile(double p, double a, double b);

// Student t with df degrees of freedom.
double student_t_cdf(double t, double df);
double student_t_quantile(double p, double df);

// Standard normal.
double normal_cdf(double x);
double normal_quantile(double p);  // |Phi(result) - p| <= 1e-12

// Regularized lower incomplete gamma P(a, x).
double gamma_cdf_shape(double x, double a);

// Quantile of Gamma(shape, rate).
double gamma_quantile(double p, double shape, double rate);

// Request form used by callers that dispatch on a distribution tag.
struct QuantileRequest {
    enum class Dist { Beta, StudentT, StandardNormal, Gamma };
    Dist dist;
    double probability;  // in (0, 1)
    double a = 0.0;      // Beta a, StudentT df, Gamma shape
    double b = 0.0;      // Beta b, Gamma rate
};

double quantile(const QuantileRequest& req);

}  // namespace fvb::specfun
