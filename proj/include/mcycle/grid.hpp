#pragma once

// Uniform discretization of the fractional phase on [0,1).
// The unbounded phase is factored into (fractional part on the grid) x
// (integer cycle count); the observation models depend only on the fractional
// part and the onset indicator only on integer crossings, so the factorization
// is lossless and keeps the grid bounded.

#include <vector>

#include "mcycle/errors.hpp"

namespace mcycle {

struct PhaseGrid {
  int n_bins = 512;

  PhaseGrid() = default;
  explicit PhaseGrid(int n);

  double delta() const { return 1.0 / n_bins; }
  double center(int i) const { return (i + 0.5) / n_bins; }
  // Bins [0, stage_split) cover [0, 0.5) exactly (n_bins is even).
  int stage_split() const { return n_bins / 2; }

  bool operator==(const PhaseGrid& o) const { return n_bins == o.n_bins; }
};

// Discretized density of the fractional phase. weights are density values:
// sum(weights) * delta == 1 after normalization. cycle_count tracks the
// number of onsets absorbed so far (the integer part of the phase).
struct PhaseDensity {
  PhaseGrid grid;
  std::vector<double> weights;
  long cycle_count = 0;

  PhaseDensity() = default;
  explicit PhaseDensity(PhaseGrid g) : grid(g), weights(static_cast<size_t>(g.n_bins), 0.0) {}

  static PhaseDensity uniform(PhaseGrid g);
  static PhaseDensity point_mass(PhaseGrid g, int bin);

  double mass(int i) const { return weights[static_cast<size_t>(i)] * grid.delta(); }
  double total_mass() const;
  double mean_frac() const;  // mean of the fractional phase
  void normalize();          // throws InvariantError when total mass is zero
};

}  // namespace mcycle
