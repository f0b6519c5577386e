#pragma once

// Maximum-likelihood estimation of the model parameters over pooled cycles.
// Optimization runs in a transformed space (log for alpha, beta, sigma;
// identity for mu and trig coefficients) so positivity never needs explicit
// constraints. Confidence intervals come from a central-difference Hessian in
// that space, with interval endpoints mapped back through the transform (so
// alpha/beta/sigma intervals are asymmetric). A singular or non-positive-
// definite Hessian is a reported state, not a failure.

#include <string>
#include <vector>

#include "mcycle/filter.hpp"
#include "mcycle/model.hpp"
#include "mcycle/optim.hpp"

namespace mcycle {

enum class Pooling { Global, PerGroup, PerSubject };

struct FitSpec {
  ModelVariant variant = ModelVariant::FullyExplicit;
  Pooling pooling = Pooling::Global;
  int n_bins = 512;
  int max_evals = 2000;
  double tol = 1e-5;          // convergence tolerance on the log-likelihood
  double hessian_step = 1e-4; // relative step per transformed coordinate
  Exec exec = Exec::Parallel; // parallelism over series
};

struct FitResult {
  ModelParams params;
  double loglik = 0.0;
  int n_evals = 0;
  bool converged = false;  // false = budget exhausted (best-so-far returned)
  std::vector<std::string> param_names;
  // Hessian of the negative log-likelihood in transformed space; empty until
  // confidence_intervals() runs.
  std::vector<std::vector<double>> hessian;
  bool hessian_singular = false;
  // Per-parameter 95% intervals in natural space; empty when the Hessian is
  // singular or not yet computed.
  std::vector<std::pair<double, double>> ci95;
};

// Transformed parameter vector <-> ModelParams, per variant.
std::vector<double> pack_params(const ModelParams& params);
ModelParams unpack_params(const std::vector<double>& x, ModelVariant variant);
std::vector<std::string> fit_param_names(ModelVariant variant);
// True for coordinates carried in log space.
std::vector<bool> log_coordinates(ModelVariant variant);

struct NegLoglikDiag {
  int n_zero_likelihood = 0;  // series whose filter hit a zero-likelihood day
  int first_day = 0;
  std::string first_series;
};

// Negative summed filter log-likelihood over the series. A zero-likelihood
// series makes the objective +infinity (diagnostics record where).
double neg_loglik(const ModelParams& params, const std::vector<CycleSeries>& data,
                  const FitSpec& spec = FitSpec{}, NegLoglikDiag* diag = nullptr);

// Heuristic start values (mid-range of the shipped presets; the trig
// intercept starts at the sample mean of the observed y).
ModelParams default_init(ModelVariant variant, const std::vector<CycleSeries>& data);

FitResult fit(const std::vector<CycleSeries>& data, const FitSpec& spec, const ModelParams& init);

// Adds the numerical Hessian and, when it is positive definite, the natural-
// space confidence intervals to a completed fit.
void confidence_intervals(FitResult& result, const std::vector<CycleSeries>& data,
                          const FitSpec& spec);

}  // namespace mcycle
