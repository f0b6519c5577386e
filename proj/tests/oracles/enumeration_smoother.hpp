#pragma once

// Brute-force forward-backward smoother on an *absolute* (unwrapped) phase
// grid: no fold, no offset kernels. States are absolute bins over several
// cycles, transitions are dense gamma cdf windows between every bin pair, the
// onset indicator compares integer parts of the pair directly, and the
// backward pass is the textbook beta recursion. Projected to fractional
// marginals for comparison with the production smoother.

#include <vector>

#include "mcycle/filter.hpp"
#include "mcycle/model.hpp"

namespace mcycle::oracle {

struct EnumerationResult {
  double loglik = 0.0;
  std::vector<std::vector<double>> filtered;  // per-day fractional masses
  std::vector<std::vector<double>> smoothed;  // per-day fractional masses
};

// n_cycles bounds the absolute grid (cycles of n_bins bins each); it must be
// large enough that the truncated tail is negligible for the test at hand.
EnumerationResult enumeration_forward_backward(const CycleSeries& series,
                                               const ModelParams& params,
                                               const InitialCondition& init, int n_bins,
                                               int n_cycles);

}  // namespace mcycle::oracle
