#pragma once

// Core model types and the three conditional densities of the biphasic
// menstrual-cycle state-space model:
//   phase transition  p(theta_t | theta_{t-1})  gamma increment, stage-switched
//   BBT observation   p(y_t | theta_t)          Gaussian, stage-switched or
//                                               trigonometric mean
//   onset indicator   p(z_t | theta_t, theta_{t-1})  integer-crossing event
//
// The fractional phase lives on [0,1): stage 1 is [0, 0.5), stage 2 is
// [0.5, 1). The 0.5 boundary belongs to stage 2 and integer boundaries to
// stage 1; every module must go through stage_of() so the convention cannot
// drift.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcycle/gamma.hpp"

namespace mcycle {

enum class ModelVariant {
  FullyExplicit,      // FE: (alpha, beta, mu, sigma) switch between stages
  RestrictedExplicit, // RE: single (alpha, beta), stage-switched (mu, sigma)
  Implicit1,          // I1..I3: single (alpha, beta, sigma), trigonometric mean
  Implicit2,
  Implicit3,
};

const char* variant_code(ModelVariant v);                 // "FE", "RE", "I1", ...
std::optional<ModelVariant> variant_from_code(const std::string& code);
int implicit_order(ModelVariant v);  // 1..3 for implicit variants, 0 otherwise

// Parameters of one stage: gamma increment (shape alpha, rate beta) and the
// Gaussian BBT observation (mean mu, s.d. sigma). Positivity enforced here.
struct StageParams {
  double alpha = 1.0;
  double beta = 1.0;
  double mu = 0.0;
  double sigma = 1.0;

  StageParams() = default;
  StageParams(double alpha_, double beta_, double mu_, double sigma_);
};

// Trigonometric BBT mean for the implicit variants:
//   mu(theta) = intercept + sum_m b_m cos(2 m pi theta) + c_m sin(2 m pi theta)
struct TrigSeries {
  double intercept = 0.0;
  std::vector<std::pair<double, double>> harmonics;  // (b_m, c_m), m = 1..order

  double mean(double theta) const;
};

struct ModelParams {
  StageParams stage1;
  StageParams stage2;
  ModelVariant variant = ModelVariant::FullyExplicit;
  std::optional<TrigSeries> trig;  // required for implicit variants

  // Enforces the variant invariants: RE shares (alpha, beta) across stages;
  // implicit variants carry a trig series of the variant's order and a single
  // (alpha, beta, sigma). Throws std::invalid_argument on violation.
  void validate() const;

  // True when the increment distribution does not switch (RE, I1..I3).
  bool single_increment_regime() const;

  const StageParams& increment_params(int stage) const {
    return (stage == 1 || single_increment_regime()) ? stage1 : stage2;
  }

  // Observation mean/s.d. at fractional phase frac (in [0,1)).
  double obs_mean(double frac) const;
  double obs_sigma(double frac) const;
};

// Latent phase. One unit = one full cycle; menstruation onset when the value
// crosses an integer.
struct Phase {
  double theta = 0.0;

  Phase() = default;
  explicit Phase(double t);
};

inline double frac_part(double theta) { return theta - std::floor(theta); }

// Stage membership of the fractional part: 1 on [0, 0.5), 2 on [0.5, 1).
inline int stage_of(double theta) { return frac_part(theta) < 0.5 ? 1 : 2; }
inline int stage_of(Phase p) { return stage_of(p.theta); }

// One subject-cycle of daily records. y uses NaN for missing BBT; z holds the
// onset indicator and is never missing.
struct CycleSeries {
  std::string subject_id;
  std::vector<double> y;     // standardized BBT, NaN = missing
  std::vector<uint8_t> z;    // 1 = menstruation onset
  std::string age_group;     // optional label, empty if unknown

  int length() const { return static_cast<int>(z.size()); }
  bool has_y(int t) const { return std::isfinite(y[static_cast<size_t>(t)]); }

  // Ingestion-time checks: equal lengths, z in {0,1}, at least one finite y.
  // Throws NotApplicableError / std::invalid_argument.
  void validate_for_ingestion() const;
};

// --- Conditional model densities -------------------------------------------

// p(theta_next | theta_prev): gamma density of the increment with the stage
// of theta_prev selecting (alpha, beta). Zero (not an error) for nonpositive
// increments so grid code can evaluate it blindly.
double transition_density(Phase theta_next, Phase theta_prev, const ModelParams& params);

// p(y | theta): Gaussian at the variant's mean function.
double bbt_likelihood(double y, Phase theta, const ModelParams& params);

// p(z | theta_next, theta_prev): indicator that z matches the integer-crossing
// event. Any number of crossings counts as a single onset.
double menstruation_likelihood(int z, Phase theta_next, Phase theta_prev);

// --- Reference parameter presets -------------------------------------------

// Eight age-band presets (15-19 ... 50-54) with fully-explicit parameters.
const std::vector<std::string>& preset_names();
ModelParams preset(const std::string& age_band);

}  // namespace mcycle
