#pragma once

// Independent quadrature oracles for the gamma special functions. The cdf
// oracle never touches the incomplete-gamma series/continued-fraction code it
// is used to check: for shape <= 1 it integrates exp(-t^(1/s)) after the
// substitution t = (rate*x)^shape (which removes the x^(shape-1) endpoint
// singularity), otherwise it integrates the density directly.

#include <functional>

namespace mcycle::oracle {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-12, int max_depth = 48);

double gamma_cdf_quadrature(double x, double shape, double rate, double tol = 1e-12);

}  // namespace mcycle::oracle
