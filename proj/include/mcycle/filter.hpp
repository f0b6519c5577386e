#pragma once

// Non-Gaussian filtering and fixed-interval smoothing of the phase on the
// discretized grid, plus the per-day log-likelihood increments.
//
// The one-step transition pushes each source bin's mass forward by the
// stage-dependent gamma increment; mass passing an integer boundary wraps
// into [0,1) with a "crossed" flag (any number of crossings is one onset).
// The onset indicator then selects the crossed or uncrossed component and the
// BBT likelihood reweights the destination bins.

#include <array>
#include <optional>
#include <vector>

#include "mcycle/grid.hpp"
#include "mcycle/model.hpp"
#include "mcycle/parallel.hpp"

namespace mcycle {

struct FilterConfig {
  int n_bins = 512;
  // Unwrapped transition kernel truncated where the gamma tail mass drops
  // below this.
  double kernel_tail = 1e-12;
  // Source bins holding less than this fraction of the total mass are skipped
  // in the transition push. 0 disables the cutoff.
  double source_mass_cutoff = 1e-14;
  Exec exec = Exec::Serial;
};

// Per-stage transition masses over destination-bin offsets, precomputed from
// gamma cdf differences.
//   within[s][q]: mass of advancing exactly q bins (no fold applied);
//                 a landing at source_bin + q >= n_bins is a crossing.
//   folded[s][q]: mass of landing q bins ahead modulo full cycles, summed
//                 over one or more additional whole cycles.
struct TransitionKernel {
  PhaseGrid grid;
  std::array<std::vector<double>, 2> within;
  std::array<std::vector<double>, 2> folded;
  // Offsets at or beyond this hold no within-cycle mass (tail truncated).
  std::array<int, 2> within_support = {1, 1};

  TransitionKernel(const ModelParams& params, PhaseGrid grid, double tail = 1e-12);
};

// Joint predictive structure for (theta_t, theta_{t-1}): per destination bin,
// the split between mass that did not cross an integer and mass that crossed
// at least one. Entries are masses (they sum to the pushed input mass).
struct PredictiveJoint {
  PhaseGrid grid;
  std::vector<double> uncrossed;
  std::vector<double> crossed;
  long cycle_count = 0;

  double total_mass() const;
  double crossed_mass() const;
  PhaseDensity marginal() const;  // normalized marginal of theta_t
};

PredictiveJoint predict_step(const PhaseDensity& filtering, const TransitionKernel& kernel,
                             const FilterConfig& config = FilterConfig{});
PredictiveJoint predict_step(const PhaseDensity& filtering, const ModelParams& params,
                             const FilterConfig& config = FilterConfig{});

struct UpdateResult {
  PhaseDensity posterior;
  double log_increment = 0.0;
};

// Multiplies each destination bin by the BBT likelihood (skipped when y is
// missing), selects the component consistent with z, and renormalizes.
// log_increment is the log of the pre-normalization total mass.
// Throws ZeroLikelihoodError (day = -1 here; filter_series rethrows with the
// day index) when the total mass underflows to zero.
UpdateResult update_step(const PredictiveJoint& predictive, std::optional<double> y, int z,
                         const ModelParams& params);

// Initial condition for a series. Two modes:
//   StatePrior: density is the day-1 state prior p(theta_1); day 1 applies
//               the y-update only (z_1 is absorbed by the prior convention).
//   PreSeriesFlow: density is p(theta_0); day 1 runs predict+update like any
//               other day.
// The default for a series starting on an onset day (z_1 = 1) is a StatePrior
// point mass in the first bin; otherwise a PreSeriesFlow uniform on [0,1).
struct InitialCondition {
  enum class Mode { StatePrior, PreSeriesFlow };
  Mode mode = Mode::PreSeriesFlow;
  PhaseDensity density;

  static InitialCondition state_prior(PhaseDensity d);
  static InitialCondition flow(PhaseDensity d);
  static InitialCondition for_series(const CycleSeries& series, PhaseGrid grid);
};

struct FilterOutput {
  CycleSeries series;  // retained so smoothing can replay the observations
  InitialCondition init;
  FilterConfig config;
  std::vector<PhaseDensity> filtering;   // per day
  std::vector<PhaseDensity> predictive;  // per day, marginal of theta_t
  std::vector<double> log_increments;    // per day
  double total_loglik = 0.0;
};

// Runs predict/update over t = 1..T. Throws ZeroLikelihoodError with the
// 1-based day index when the data contradict the model.
FilterOutput filter_series(const CycleSeries& series, const ModelParams& params,
                           const InitialCondition& init,
                           const FilterConfig& config = FilterConfig{});

// Likelihood-only filtering with a caller-held kernel; avoids the per-day
// density storage of filter_series. Used by the estimator's hot loop.
double series_loglik(const CycleSeries& series, const ModelParams& params,
                     const TransitionKernel& kernel, const InitialCondition& init,
                     const FilterConfig& config = FilterConfig{});

// Backward fixed-interval smoothing on the same grid, using the day-selected
// crossed/uncrossed kernels so the onset coupling is respected. Returns one
// normalized density per day.
std::vector<PhaseDensity> smooth_series(const FilterOutput& out, const ModelParams& params);

namespace reference {

// Plain dense implementations computing every source/destination transition
// mass directly from gamma cdf differences (including the wrap sum). Kept as
// the readable ground truth the optimized kernels are tested against.
PredictiveJoint predict_step(const PhaseDensity& filtering, const ModelParams& params,
                             const FilterConfig& config = FilterConfig{});
FilterOutput filter_series(const CycleSeries& series, const ModelParams& params,
                           const InitialCondition& init,
                           const FilterConfig& config = FilterConfig{});

}  // namespace reference

}  // namespace mcycle
