#pragma once

// Follicular/luteal stage identification from conditional phase densities:
// per-day stage probabilities and calls (>= 0.5 rule), per-cycle stage
// lengths, monophasic flags, population summaries, and the closed-form
// stage-length distribution implied by the increment parameters.

#include <vector>

#include "mcycle/grid.hpp"
#include "mcycle/model.hpp"

namespace mcycle {

enum class DensityBasis { Predictive, Filtering, Smoothed };

struct StageCall {
  int day = 0;             // 1-based
  double prob_stage1 = 0;  // Pr(theta in stage 1 | data)
  int call = 1;            // 1 iff prob_stage1 >= 0.5, else 2
  DensityBasis basis = DensityBasis::Smoothed;
};

// Integral of the density over fractional phase [0, 0.5).
double prob_stage1(const PhaseDensity& density);

std::vector<StageCall> stage_calls(const std::vector<PhaseDensity>& densities,
                                   DensityBasis basis);

struct CycleStageSummary {
  int first_stage_length = 0;
  int second_stage_length = 0;
  bool monophasic = false;    // second stage shorter than 3 days
  bool non_monotone = false;  // a stage-1 call after a stage-2 call (diagnostic)
};

// Lengths are counts of per-day calls over one cycle (onset day through the
// day before the next onset); no change-point structure is imposed.
CycleStageSummary stage_lengths(const std::vector<PhaseDensity>& cycle_densities);

// Closed-form pmf of the number of days spent in stage m: the day count on
// which the accumulated stage-m increments first reach half a cycle.
//   pmf[0] = 1 - G(0.5; alpha_m, beta_m)
//   pmf[k-1] = G(0.5; (k-1) alpha_m, beta_m) - G(0.5; k alpha_m, beta_m)
std::vector<double> stage_length_pmf(int stage, const ModelParams& params, int k_max);

struct StageMoments {
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
};

struct StageStats {
  int n_cycles = 0;
  int n_monophasic = 0;
  double monophasic_pct = 0.0;
  StageMoments first_all, second_all;        // all cycles
  StageMoments first_nomono, second_nomono;  // excluding monophasic cycles
  double correlation = 0.0;                  // Pearson(first, second), all cycles
};

// Descriptive statistics over per-cycle summaries. Error on empty input.
StageStats population_stage_stats(const std::vector<CycleStageSummary>& summaries);

// Mean and s.d. of a (possibly unnormalized) day-count pmf, counting the
// residual tail mass at k_max + 1. Shared by tests and the acceptance suite.
StageMoments pmf_moments(const std::vector<double>& pmf);

}  // namespace mcycle
