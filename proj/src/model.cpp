#include "mcycle/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "mcycle/errors.hpp"

namespace mcycle {

const char* variant_code(ModelVariant v) {
  switch (v) {
    case ModelVariant::FullyExplicit: return "FE";
    case ModelVariant::RestrictedExplicit: return "RE";
    case ModelVariant::Implicit1: return "I1";
    case ModelVariant::Implicit2: return "I2";
    case ModelVariant::Implicit3: return "I3";
  }
  return "?";
}

std::optional<ModelVariant> variant_from_code(const std::string& code) {
  if (code == "FE") return ModelVariant::FullyExplicit;
  if (code == "RE") return ModelVariant::RestrictedExplicit;
  if (code == "I1") return ModelVariant::Implicit1;
  if (code == "I2") return ModelVariant::Implicit2;
  if (code == "I3") return ModelVariant::Implicit3;
  return std::nullopt;
}

int implicit_order(ModelVariant v) {
  switch (v) {
    case ModelVariant::Implicit1: return 1;
    case ModelVariant::Implicit2: return 2;
    case ModelVariant::Implicit3: return 3;
    default: return 0;
  }
}

StageParams::StageParams(double alpha_, double beta_, double mu_, double sigma_)
    : alpha(alpha_), beta(beta_), mu(mu_), sigma(sigma_) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(sigma > 0.0) ||
      !std::isfinite(alpha) || !std::isfinite(beta) ||
      !std::isfinite(mu) || !std::isfinite(sigma)) {
    throw std::invalid_argument("StageParams: require alpha > 0, beta > 0, sigma > 0, all finite");
  }
}

double TrigSeries::mean(double theta) const {
  double m = intercept;
  double w = 2.0 * M_PI * theta;
  for (size_t i = 0; i < harmonics.size(); ++i) {
    double arg = w * static_cast<double>(i + 1);
    m += harmonics[i].first * std::cos(arg) + harmonics[i].second * std::sin(arg);
  }
  return m;
}

void ModelParams::validate() const {
  StageParams check1(stage1.alpha, stage1.beta, stage1.mu, stage1.sigma);
  StageParams check2(stage2.alpha, stage2.beta, stage2.mu, stage2.sigma);
  (void)check1;
  (void)check2;
  int order = implicit_order(variant);
  if (variant == ModelVariant::RestrictedExplicit) {
    if (stage1.alpha != stage2.alpha || stage1.beta != stage2.beta) {
      throw std::invalid_argument("ModelParams: RE variant requires a single shared (alpha, beta)");
    }
  }
  if (order > 0) {
    if (!trig.has_value()) {
      throw std::invalid_argument("ModelParams: implicit variant requires trig coefficients");
    }
    if (static_cast<int>(trig->harmonics.size()) != order) {
      throw std::invalid_argument("ModelParams: implicit variant order does not match harmonic count");
    }
    if (stage1.alpha != stage2.alpha || stage1.beta != stage2.beta ||
        stage1.sigma != stage2.sigma) {
      throw std::invalid_argument("ModelParams: implicit variant uses a single (alpha, beta, sigma)");
    }
  } else if (trig.has_value()) {
    throw std::invalid_argument("ModelParams: explicit variant must not carry trig coefficients");
  }
}

bool ModelParams::single_increment_regime() const {
  return variant != ModelVariant::FullyExplicit;
}

double ModelParams::obs_mean(double frac) const {
  if (implicit_order(variant) > 0) return trig->mean(frac);
  return frac < 0.5 ? stage1.mu : stage2.mu;
}

double ModelParams::obs_sigma(double frac) const {
  if (implicit_order(variant) > 0) return stage1.sigma;
  return frac < 0.5 ? stage1.sigma : stage2.sigma;
}

Phase::Phase(double t) : theta(t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw std::domain_error("Phase: require finite theta >= 0");
  }
}

void CycleSeries::validate_for_ingestion() const {
  if (y.size() != z.size() || z.empty()) {
    throw std::invalid_argument("CycleSeries: y and z must be nonempty and equal length");
  }
  bool any_y = false;
  for (size_t t = 0; t < z.size(); ++t) {
    if (z[t] != 0 && z[t] != 1) {
      throw std::invalid_argument("CycleSeries: z must be 0 or 1");
    }
    if (std::isfinite(y[t])) any_y = true;
  }
  if (!any_y) {
    throw NotApplicableError("CycleSeries '" + subject_id + "': no BBT observation in the series");
  }
}

double transition_density(Phase theta_next, Phase theta_prev, const ModelParams& params) {
  double inc = theta_next.theta - theta_prev.theta;
  if (inc <= 0.0) return 0.0;
  const StageParams& sp = params.increment_params(stage_of(theta_prev));
  return gamma_pdf(inc, sp.alpha, sp.beta);
}

double bbt_likelihood(double y, Phase theta, const ModelParams& params) {
  if (!std::isfinite(y)) {
    throw std::domain_error("bbt_likelihood: require finite y");
  }
  double f = frac_part(theta.theta);
  return normal_pdf(y, params.obs_mean(f), params.obs_sigma(f));
}

double menstruation_likelihood(int z, Phase theta_next, Phase theta_prev) {
  if (z != 0 && z != 1) {
    throw std::domain_error("menstruation_likelihood: z must be 0 or 1");
  }
  if (theta_next.theta < theta_prev.theta) {
    throw std::domain_error("menstruation_likelihood: require theta_next >= theta_prev");
  }
  bool crossed = std::floor(theta_next.theta) > std::floor(theta_prev.theta);
  return (z == 1) == crossed ? 1.0 : 0.0;
}

namespace {

ModelParams make_preset(double a1, double b1, double a2, double b2,
                        double mu1, double s1, double mu2, double s2) {
  ModelParams p;
  p.stage1 = StageParams(a1, b1, mu1, s1);
  p.stage2 = StageParams(a2, b2, mu2, s2);
  p.variant = ModelVariant::FullyExplicit;
  return p;
}

const std::vector<std::pair<std::string, ModelParams>>& preset_table() {
  static const std::vector<std::pair<std::string, ModelParams>> table = {
      {"15-19", make_preset(0.632, 34.923, 0.216, 1.837, -0.040, 0.231, 0.371, 0.247)},
      {"20-24", make_preset(0.942, 52.320, 0.271, 2.865, -0.040, 0.239, 0.374, 0.224)},
      {"25-29", make_preset(0.871, 43.145, 0.350, 5.141, -0.029, 0.228, 0.369, 0.220)},
      {"30-34", make_preset(1.316, 64.430, 0.364, 5.218, -0.012, 0.217, 0.377, 0.223)},
      {"35-39", make_preset(0.952, 40.455, 0.533, 8.669, -0.023, 0.252, 0.363, 0.205)},
      {"40-44", make_preset(1.000, 42.920, 0.398, 5.783, -0.024, 0.207, 0.333, 0.199)},
      {"45-49", make_preset(0.644, 26.902, 0.334, 4.472, -0.018, 0.203, 0.325, 0.196)},
      {"50-54", make_preset(0.054, 1.853, 0.177, 2.170, -0.054, 0.226, 0.345, 0.216)},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& kv : preset_table()) out.push_back(kv.first);
    return out;
  }();
  return names;
}

ModelParams preset(const std::string& age_band) {
  for (const auto& kv : preset_table()) {
    if (kv.first == age_band) return kv.second;
  }
  throw std::invalid_argument("unknown parameter preset: " + age_band);
}

}  // namespace mcycle
