#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mcycle/errors.hpp"
#include "mcycle/gamma.hpp"
#include "mcycle/model.hpp"
#include "oracles/quadrature.hpp"

using namespace mcycle;

TEST_CASE("gamma_pdf: exponential special case and domain errors") {
  CHECK(gamma_pdf(0.5, 1.0, 2.0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK_THROWS_AS(gamma_pdf(-1.0, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(gamma_pdf(0.0, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(gamma_pdf(1.0, 0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(gamma_pdf(1.0, 1.0, -2.0), std::domain_error);
}

TEST_CASE("gamma_pdf: small-shape value against long-double direct evaluation") {
  // 35-39 second-stage parameters.
  double shape = 0.533, rate = 8.669, x = 0.1;
  long double lx = 0.1L;
  long double ref = powl(8.669L, 0.533L) / expl(lgammal(0.533L)) * powl(lx, 0.533L - 1.0L) *
                    expl(-8.669L * lx);
  CHECK(gamma_pdf(x, shape, rate) ==
        doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));
}

TEST_CASE("gamma_pdf: integrates to 1") {
  for (auto [s, r] : {std::pair{0.533, 8.669}, std::pair{0.054, 1.853}, std::pair{2.5, 3.0}}) {
    // Integrate far into the tail; the quadrature oracle handles the
    // singularity at 0 for shapes below 1.
    double upper = 200.0 / r;
    double integral = oracle::gamma_cdf_quadrature(upper, s, r, 1e-12);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("gamma_cdf: exponential case, boundaries, quadrature oracle") {
  CHECK(gamma_cdf(0.5, 1.0, 2.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(gamma_cdf(0.0, 0.7, 3.0) == 0.0);
  CHECK_THROWS_AS(gamma_cdf(-0.1, 1.0, 1.0), std::domain_error);

  double q = oracle::gamma_cdf_quadrature(0.5, 0.533, 8.669);
  CHECK(gamma_cdf(0.5, 0.533, 8.669) == doctest::Approx(q).epsilon(1e-10));
}

TEST_CASE("gamma_cdf is the antiderivative of gamma_pdf on a dense grid") {
  for (auto [s, r] : {std::pair{0.533, 8.669}, std::pair{0.054, 1.853}, std::pair{0.952, 40.455},
                      std::pair{5.0, 2.0}}) {
    for (int i = 1; i <= 40; ++i) {
      double x = 0.05 * i * (3.0 / r * std::max(1.0, s));
      double want = oracle::gamma_cdf_quadrature(x, s, r, 1e-13);
      CHECK(std::fabs(gamma_cdf(x, s, r) - want) < 1e-9);
    }
  }
}

TEST_CASE("gamma special functions: relative accuracy across the shape range") {
  // Spot values from the complement identity and extreme shapes.
  for (double s : {0.01, 0.054, 0.5, 1.0, 7.0, 90.0, 500.0}) {
    for (double x : {0.25 * s, s, 4.0 * s}) {
      if (x <= 0.0) continue;
      double p = regularized_gamma_p(s, x);
      double q = regularized_gamma_q(s, x);
      CHECK(p + q == doctest::Approx(1.0).epsilon(1e-13));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  }
}

TEST_CASE("stage membership: boundaries and periodicity") {
  CHECK(stage_of(0.0) == 1);
  CHECK(stage_of(0.49999) == 1);
  CHECK(stage_of(0.5) == 2);
  CHECK(stage_of(0.99999) == 2);
  for (int n = 0; n < 5; ++n) {
    CHECK(stage_of(0.3 + n) == 1);
    CHECK(stage_of(0.5 + n) == 2);
    CHECK(stage_of(0.0 + n) == 1);
  }
}

TEST_CASE("transition_density: stage switch, zero increment, normalization") {
  ModelParams p = preset("35-39");

  double direct = gamma_pdf(0.02, 0.952, 40.455);
  CHECK(transition_density(Phase(0.32), Phase(0.3), p) == doctest::Approx(direct).epsilon(1e-14));

  // Stage of the *previous* phase picks the parameters, wherever the next lands.
  double from_stage2 = transition_density(Phase(1.3), Phase(0.6), p);
  CHECK(from_stage2 == doctest::Approx(gamma_pdf(0.7, 0.533, 8.669)).epsilon(1e-14));

  CHECK(transition_density(Phase(0.3), Phase(0.3), p) == 0.0);
  CHECK(transition_density(Phase(0.2), Phase(0.3), p) == 0.0);

  for (double prev : {0.1, 0.7}) {
    double total = oracle::adaptive_simpson(
        [&](double inc) {
          return inc <= 0.0 ? 0.0 : transition_density(Phase(prev + inc), Phase(prev), p);
        },
        0.0, 3.0, 1e-10);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("bbt_likelihood: at-mean density, stage boundary, trig variant") {
  ModelParams p = preset("35-39");
  double at_mean = bbt_likelihood(p.stage2.mu, Phase(0.7), p);
  CHECK(at_mean == doctest::Approx(1.0 / (p.stage2.sigma * std::sqrt(2.0 * M_PI))).epsilon(1e-14));

  double just_before = bbt_likelihood(0.1, Phase(0.49), p);
  double at_boundary = bbt_likelihood(0.1, Phase(0.50), p);
  CHECK(just_before == doctest::Approx(normal_pdf(0.1, p.stage1.mu, p.stage1.sigma)));
  CHECK(at_boundary == doctest::Approx(normal_pdf(0.1, p.stage2.mu, p.stage2.sigma)));

  ModelParams imp;
  imp.variant = ModelVariant::Implicit1;
  imp.stage1 = StageParams(0.5, 10.0, 0.0, 1.0);
  imp.stage2 = imp.stage1;
  imp.trig = TrigSeries{0.0, {{1.0, 0.0}}};
  imp.validate();
  CHECK(bbt_likelihood(1.0, Phase(0.0), imp) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("menstruation_likelihood: crossing truth table and complement") {
  CHECK(menstruation_likelihood(1, Phase(1.2), Phase(0.8)) == 1.0);
  CHECK(menstruation_likelihood(0, Phase(1.2), Phase(0.8)) == 0.0);
  CHECK(menstruation_likelihood(1, Phase(2.1), Phase(0.9)) == 1.0);  // multi-crossing: one onset
  CHECK(menstruation_likelihood(0, Phase(0.9), Phase(0.8)) == 1.0);
  for (auto [next, prev] : {std::pair{1.2, 0.8}, std::pair{0.9, 0.8}, std::pair{2.1, 0.9},
                            std::pair{3.0, 3.0}}) {
    double sum = menstruation_likelihood(0, Phase(next), Phase(prev)) +
                 menstruation_likelihood(1, Phase(next), Phase(prev));
    CHECK(sum == 1.0);
  }
}

TEST_CASE("parameter invariants are enforced") {
  CHECK_THROWS_AS(StageParams(0.0, 1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(StageParams(1.0, -1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(StageParams(1.0, 1.0, 0.0, 0.0), std::invalid_argument);

  ModelParams re;
  re.variant = ModelVariant::RestrictedExplicit;
  re.stage1 = StageParams(0.5, 10.0, 0.0, 0.2);
  re.stage2 = StageParams(0.6, 10.0, 0.3, 0.2);
  CHECK_THROWS_AS(re.validate(), std::invalid_argument);
  re.stage2.alpha = 0.5;
  CHECK_NOTHROW(re.validate());

  ModelParams i2;
  i2.variant = ModelVariant::Implicit2;
  i2.stage1 = StageParams(0.5, 10.0, 0.0, 0.2);
  i2.stage2 = i2.stage1;
  i2.trig = TrigSeries{0.1, {{0.1, 0.2}}};  // one harmonic: wrong order for I2
  CHECK_THROWS_AS(i2.validate(), std::invalid_argument);
  i2.trig->harmonics.push_back({0.0, 0.0});
  CHECK_NOTHROW(i2.validate());

  CHECK_THROWS_AS(Phase(-0.5), std::domain_error);
}

TEST_CASE("cycle series ingestion checks") {
  CycleSeries s;
  s.subject_id = "s";
  s.y = {std::nan(""), std::nan("")};
  s.z = {1, 0};
  CHECK_THROWS_AS(s.validate_for_ingestion(), NotApplicableError);
  s.y[1] = 0.2;
  CHECK_NOTHROW(s.validate_for_ingestion());
  s.z[1] = 7;
  CHECK_THROWS_AS(s.validate_for_ingestion(), std::invalid_argument);
}

TEST_CASE("presets: all eight age bands load and validate") {
  CHECK(preset_names().size() == 8);
  for (const std::string& name : preset_names()) {
    ModelParams p = preset(name);
    CHECK_NOTHROW(p.validate());
  }
  ModelParams g = preset("25-29");
  CHECK(g.stage2.mu - g.stage1.mu == doctest::Approx(0.398).epsilon(1e-12));
  CHECK_THROWS_AS(preset("not-a-band"), std::invalid_argument);
}
