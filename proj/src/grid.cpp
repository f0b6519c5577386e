#include "mcycle/grid.hpp"

#include <stdexcept>

namespace mcycle {

PhaseGrid::PhaseGrid(int n) : n_bins(n) {
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("PhaseGrid: n_bins must be even and >= 2");
  }
}

PhaseDensity PhaseDensity::uniform(PhaseGrid g) {
  PhaseDensity d(g);
  for (auto& w : d.weights) w = 1.0;
  return d;
}

PhaseDensity PhaseDensity::point_mass(PhaseGrid g, int bin) {
  if (bin < 0 || bin >= g.n_bins) {
    throw std::invalid_argument("PhaseDensity::point_mass: bin out of range");
  }
  PhaseDensity d(g);
  d.weights[static_cast<size_t>(bin)] = static_cast<double>(g.n_bins);
  return d;
}

double PhaseDensity::total_mass() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s * grid.delta();
}

double PhaseDensity::mean_frac() const {
  double s = 0.0;
  for (int i = 0; i < grid.n_bins; ++i) s += grid.center(i) * mass(i);
  return s;
}

void PhaseDensity::normalize() {
  double total = total_mass();
  if (!(total > 0.0)) {
    throw InvariantError("PhaseDensity::normalize: zero total mass");
  }
  for (auto& w : weights) w /= total;
}

}  // namespace mcycle
