#include "mcycle/gamma.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mcycle {

namespace {

// Lower incomplete gamma by series: P(a,x) = x^a e^-x / Gamma(a+1) * sum.
// Converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-17) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw std::runtime_error("regularized_gamma_p: series did not converge");
}

// Upper incomplete gamma by modified Lentz continued fraction.
// Used for x >= a + 1.
double gamma_q_contfrac(double a, double x) {
  const double eps = 1e-16;
  const double fpmin = std::numeric_limits<double>::min() / eps;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= eps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw std::runtime_error("regularized_gamma_q: continued fraction did not converge");
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a) || !std::isfinite(x)) {
    throw std::domain_error("regularized_gamma_p: require a > 0, x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(a) || !std::isfinite(x)) {
    throw std::domain_error("regularized_gamma_q: require a > 0, x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_contfrac(a, x);
}

double gamma_pdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw std::domain_error("gamma_pdf: require shape > 0, rate > 0");
  }
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error("gamma_pdf: require x > 0");
  }
  double logp = shape * std::log(rate) - std::lgamma(shape) +
                (shape - 1.0) * std::log(x) - rate * x;
  return std::exp(logp);
}

double gamma_cdf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw std::domain_error("gamma_cdf: require shape > 0, rate > 0");
  }
  if (x < 0.0 || std::isnan(x)) {
    throw std::domain_error("gamma_cdf: require x >= 0");
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return regularized_gamma_p(shape, rate * x);
}

double gamma_sf(double x, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw std::domain_error("gamma_sf: require shape > 0, rate > 0");
  }
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return regularized_gamma_q(shape, rate * x);
}

}  // namespace mcycle
