#pragma once

// Prediction-accuracy benchmark: fits each requested model variant on the
// training cycles, then for every test cycle and horizon runs the filter up
// to the prediction day and records the squared error of the point
// prediction. The calendar baseline predicts previous onset + fixed offset,
// with the offset chosen on the training split to minimize RMSE.
//
// Horizons: the onset day of the previous menstruation, then 21, 14, 7, 6, 5,
// 4, 3, 2, 1 day(s) before the next onset. Cycles shorter than a horizon are
// excluded from that cell only.

#include <map>
#include <string>
#include <vector>

#include "mcycle/estimator.hpp"
#include "mcycle/model.hpp"

namespace mcycle {

struct BenchConfig {
  std::vector<std::string> models = {"FE", "RE", "I1", "I2", "I3", "C"};
  int n_bins = 512;
  int k_max = 90;
  int max_evals = 2000;
  double tol = 1e-5;
  Exec exec = Exec::Parallel;
  // Fraction of next-day point predictions above which a model is flagged as
  // degenerate (the always-predict-tomorrow pathology of tiny increments).
  double degenerate_threshold = 0.9;
};

struct BenchReport {
  std::vector<std::string> models;
  // Horizon encoding: -1 = the previous-onset day, d >= 1 = d days before the
  // next onset.
  std::vector<int> horizons;
  // rmse[model][horizon]; NaN when no cycle qualified.
  std::vector<std::vector<double>> rmse;
  std::vector<std::vector<int>> n_used;
  std::vector<double> fit_loglik;        // per state-space model; NaN for calendar
  std::vector<int> calendar_offset;     // fitted offset; -1 for state-space models
  std::vector<bool> degenerate;         // next-day-prediction pathology
  std::vector<double> next_day_fraction;
  std::map<std::string, int> exclusions;  // reason -> count
  std::string metadata;

  int model_index(const std::string& code) const;
  int horizon_index(int horizon) const;
};

// Train/test are complete cycles (day 1 = onset; the next onset falls the day
// after the series ends). Per-cycle filter failures are excluded with counts.
BenchReport run_benchmark(const std::vector<CycleSeries>& train,
                          const std::vector<CycleSeries>& test, const BenchConfig& config);

// Best integer calendar offset on a set of cycle lengths (smallest on ties).
int fit_calendar_offset(const std::vector<int>& lengths);

}  // namespace mcycle
