#pragma once

// Synthetic data from the full generative model: day-by-day gamma increments
// with the stage switch at fractional phase 0.5, onset when the phase crosses
// an integer, Gaussian BBT at the stage (or trigonometric) mean, i.i.d.
// missingness on y only. Each cycle is generated as an independent series
// beginning on its onset day, with the ground-truth phase trajectory kept so
// the output can serve as an oracle.

#include <cstdint>
#include <vector>

#include "mcycle/model.hpp"
#include "mcycle/parallel.hpp"

namespace mcycle {

struct SimConfig {
  ModelParams params;
  int n_cycles = 100;
  double missing_rate = 0.15;  // applied to y only; z is never missing
  uint64_t seed = 1;
  int max_days_per_cycle = 400;
  Exec exec = Exec::Serial;
};

struct SimulatedCycle {
  CycleSeries series;         // day 1 is the onset day (z = 1); length = L
  std::vector<double> theta;  // true phase per day; theta[0] = 0
  int cycle_length = 0;       // L; the next onset falls on day L + 1
  int stage2_start_day = 0;   // first day with fractional phase >= 0.5; L+1 if none
};

// Reproducible under a fixed seed for any thread count (per-cycle RNG
// streams). Throws SafetyCapError when a cycle exceeds max_days_per_cycle.
std::vector<SimulatedCycle> simulate(const SimConfig& config);

}  // namespace mcycle
