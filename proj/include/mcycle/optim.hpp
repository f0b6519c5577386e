#pragma once

// Derivative-free local optimization (Nelder-Mead with restart-on-stall),
// central-difference Hessians, and the small dense linear algebra needed for
// confidence intervals. The filter likelihood is piecewise-smooth in the grid
// approximation, which makes finite-difference gradients noisy near bin
// boundaries; a simplex search sidesteps that.

#include <functional>
#include <vector>

namespace mcycle {

using Objective = std::function<double(const std::vector<double>&)>;

struct NelderMeadOptions {
  int max_evals = 2000;
  double tol = 1e-5;          // stop when the simplex f-spread falls below this
  double init_step = 0.15;    // initial simplex edge per coordinate
  int max_restarts = 3;       // rebuild a shrunken simplex around the best point
  double restart_shrink = 0.3;
};

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0.0;
  int n_evals = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0,
                             const NelderMeadOptions& opt = NelderMeadOptions{});

// Central-difference Hessian with relative steps; steps double automatically
// (up to a few times) when the objective difference is below the noise floor.
std::vector<std::vector<double>> central_hessian(const Objective& f, const std::vector<double>& x,
                                                 double rel_step = 1e-4);

// In-place Cholesky H = L L^T; returns false when H is not positive definite.
bool cholesky_factor(std::vector<std::vector<double>>& h);

// Inverse from a Cholesky factor (lower triangular L as produced above).
std::vector<std::vector<double>> cholesky_inverse(const std::vector<std::vector<double>>& l);

}  // namespace mcycle
