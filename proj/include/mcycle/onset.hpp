#pragma once

// Sequential prediction of the next menstruation onset.
//
// f(k | theta) is the probability that the next onset falls exactly k days
// ahead given the current phase theta. For a phase in stage 2 (and for every
// single-increment-regime variant) it reduces to gamma cdf differences via
// the additivity of same-rate gamma increments. For a fully-explicit phase in
// stage 1 it decomposes over the day j on which stage 1 ends:
//
//   f(k | theta) = sum_{j=1..k} phi(j, k | theta)
//
// where each phi is a product of gamma cdf factors and integrals of truncated
// increment densities convolved with further gamma increments. The engine
// evaluates these on a uniform increment lattice. Two routes are provided:
//
//  - a literal route building the truncated densities pi*_u, pi*_v, pi*_w and
//    evaluating every factor with FFT linear convolutions (the reference);
//  - a production route using the same formulas with the final tail/window
//    integrals exchanged into survival-weighted sums, so the k-dependence
//    collapses into precomputed cdf-difference tables. The two agree to grid
//    accuracy; the production route additionally memoizes the per-(theta, j)
//    first-stage exit densities.
//
// h(k | data) then averages f(k | theta) over a filtering density, and the
// point prediction is the argmax of h.

#include <memory>
#include <vector>

#include "mcycle/filter.hpp"
#include "mcycle/grid.hpp"
#include "mcycle/model.hpp"
#include "mcycle/parallel.hpp"

namespace mcycle {

struct OnsetEngineConfig {
  int grid_points = 4096;  // increment lattice resolution M
  double support = 4.0;    // lattice spans [0, support] cycle-fractions
  int k_max = 90;          // largest horizon the tables cover
  Exec exec = Exec::Serial;

  // Lattice step aligned to the filter grid (half a phase bin), so that every
  // bin-center truncation window lands exactly on lattice points.
  static OnsetEngineConfig aligned_to(PhaseGrid grid, double support = 4.0, int k_max = 90);
};

// Probabilities h(k), k = 1..k_max, that the next onset occurs k days ahead,
// plus the mass beyond the horizon.
struct OnsetDistribution {
  std::vector<double> h;
  double tail = 0.0;

  int k_max() const { return static_cast<int>(h.size()); }
};

// argmax_k h(k); ties break toward the smallest k.
int point_predict(const OnsetDistribution& dist);

class OnsetEngine {
 public:
  explicit OnsetEngine(const ModelParams& params, OnsetEngineConfig config = OnsetEngineConfig{});
  ~OnsetEngine();
  OnsetEngine(const OnsetEngine&) = delete;
  OnsetEngine& operator=(const OnsetEngine&) = delete;

  const ModelParams& params() const { return params_; }
  const OnsetEngineConfig& config() const { return config_; }
  double lattice_step() const { return delta_; }

  // f(k | theta) with the stage dispatch appropriate to the variant.
  double f(int k, Phase theta) const;
  // Closed-form stage-2 case; domain error unless stage_of(theta) == 2.
  double f_stage2(int k, Phase theta) const;
  // Stage-1 case, sum of phi over j; domain error unless stage_of(theta) == 1.
  double f_stage1(int k, Phase theta) const;
  // Probability that stage 1 lasts through day t+j-1 and onset is on day t+k.
  double phi(int j, int k, Phase theta) const;

  // f(1..k_max | theta) in one sweep (shares the per-j work across k).
  std::vector<double> f_vector(Phase theta, int k_max) const;

  OnsetDistribution onset_distribution(const PhaseDensity& filtering, int k_max) const;

  // Literal convolution route (FFT, truncate, renormalize per factor).
  double phi_reference(int j, int k, Phase theta);
  double f_stage1_reference(int k, Phase theta);

  // Lattice masses of Gamma(shape, rate): entry n integrates the density over
  // [max(0, (n-1/2)dx), (n+1/2)dx).
  std::vector<double> gamma_masses(double shape, double rate) const;
  // Zero-padded FFT linear convolution of two lattice mass vectors, output
  // truncated to the engine support.
  std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b);

 private:
  struct FftCache;

  void build_tables();
  std::vector<double> f_vector_aligned(double frac, int k_max) const;
  std::vector<double> f_vector_general(double frac, int k_max) const;
  // Unnormalized first-stage occupation mass at lattice points in (0, d1) for
  // a given j (the distribution of u_j restricted to the window).
  std::vector<double> stage1_occupation(int j, double d1) const;

  ModelParams params_;
  OnsetEngineConfig config_;
  double delta_ = 0.0;
  int half_window_ = 0;  // lattice points in half a cycle (0.5 / delta)
  bool single_regime_ = false;

  // kappa_[m][l] = P(exactly m+1 second-stage steps bridge distance l*delta)
  //             = G(l dx; m a2, b2) - G(l dx; (m+1) a2, b2)
  std::vector<std::vector<double>> kappa_;
  // Same bridge probability at half-lattice distances (u+1/2)*delta, the
  // midpoints of the edge-aligned exit-window cells.
  std::vector<std::vector<double>> kappa_half_;
  // lam_[m][i]: one first-stage step from distance-to-onset (i+W)*delta lands
  // in the second stage and exactly m+1 further steps bridge the rest.
  std::vector<std::vector<double>> lam_;
  // gbar1_[c] = survival of one first-stage increment beyond c*delta.
  std::vector<double> gbar1_;
  // e1_[c] = cdf of one first-stage increment at c*delta (window-cell edges).
  std::vector<double> e1_;
  // u_mass_[j]: lattice masses of Gamma((j-1) a1, b1) up to half a cycle.
  std::vector<std::vector<double>> u_mass_;
  // g1_mass_: lattice masses of one first-stage increment up to a full cycle.
  std::vector<double> g1_mass_;

  std::unique_ptr<FftCache> fft_;
};

// Spec-shaped convenience: params must match the engine's.
OnsetDistribution onset_distribution(const PhaseDensity& filtering, const ModelParams& params,
                                     const OnsetEngine& engine, int k_max);

}  // namespace mcycle
