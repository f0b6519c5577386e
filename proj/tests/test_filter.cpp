#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "mcycle/filter.hpp"
#include "mcycle/model.hpp"
#include "mcycle/simulator.hpp"
#include "oracles/enumeration_smoother.hpp"
#include "oracles/particle_filter.hpp"
#include "oracles/quadrature.hpp"

using namespace mcycle;

namespace {

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return 0.5 * s;
}

std::vector<double> masses(const PhaseDensity& d) {
  std::vector<double> m(d.weights.size());
  for (int i = 0; i < d.grid.n_bins; ++i) m[static_cast<size_t>(i)] = d.mass(i);
  return m;
}

CycleSeries synthetic_series(const ModelParams& params, int seed, double missing = 0.15) {
  SimConfig cfg;
  cfg.params = params;
  cfg.n_cycles = 1;
  cfg.missing_rate = missing;
  cfg.seed = static_cast<uint64_t>(seed);
  return simulate(cfg)[0].series;
}

}  // namespace

TEST_CASE("predict_step: point mass near the boundary mostly crosses") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  PhaseDensity d = PhaseDensity::point_mass(grid, 511);  // center 0.99902
  PredictiveJoint j = predict_step(d, p);
  // Mean stage-2 increment is 0.0615, distance to the boundary under 0.001.
  CHECK(j.crossed_mass() / j.total_mass() > 0.9);
}

TEST_CASE("predict_step: point mass at 0.25 with the 35-39 first stage") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  int bin = 127;  // center (127 + 0.5) / 512 = 0.2490; nudge to exactly 0.25 not possible
  PredictiveJoint j = predict_step(PhaseDensity::point_mass(grid, bin), p);

  CHECK(j.crossed_mass() < 1e-12);
  double mean = 0.0;
  for (int b = 0; b < grid.n_bins; ++b) mean += grid.center(b) * j.uncrossed[static_cast<size_t>(b)];
  // Predictive mean = source center + alpha/beta.
  CHECK(mean == doctest::Approx(grid.center(bin) + 0.952 / 40.455).epsilon(2e-4));
}

TEST_CASE("predict_step conserves mass") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const char* band : {"35-39", "50-54", "15-19"}) {
    ModelParams p = preset(band);
    PhaseGrid grid(256);
    PhaseDensity d(grid);
    for (auto& w : d.weights) w = unif(rng);
    d.normalize();
    FilterConfig cfg;
    cfg.n_bins = 256;
    cfg.source_mass_cutoff = 0.0;
    PredictiveJoint j = predict_step(d, p, cfg);
    CHECK(std::fabs(j.total_mass() - 1.0) < 1e-10);
  }
}

TEST_CASE("uniform density propagates to total mass 1 split across parts") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  PredictiveJoint j = predict_step(PhaseDensity::uniform(grid), p);
  CHECK(j.total_mass() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(j.crossed_mass() > 0.0);
  CHECK(j.crossed_mass() < 1.0);
}

TEST_CASE("update_step: z-only update keeps the uncrossed part") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  PredictiveJoint j = predict_step(PhaseDensity::uniform(grid), p);
  UpdateResult r = update_step(j, std::nullopt, 0, p);
  double unc = j.total_mass() - j.crossed_mass();
  CHECK(r.log_increment == doctest::Approx(std::log(unc)).epsilon(1e-12));
  for (int b = 0; b < grid.n_bins; ++b) {
    CHECK(r.posterior.mass(b) ==
          doctest::Approx(j.uncrossed[static_cast<size_t>(b)] / unc).epsilon(1e-10));
  }
}

TEST_CASE("update_step: constant-likelihood factorization with z = 1") {
  // With all y-likelihoods equal to L, the increment factorizes as log(c * L).
  ModelParams p = preset("35-39");
  p.stage1.mu = 0.1;
  p.stage2.mu = 0.1;
  p.stage1.sigma = 0.2;
  p.stage2.sigma = 0.2;
  PhaseGrid grid(512);
  PredictiveJoint j = predict_step(PhaseDensity::uniform(grid), p);
  double c = j.crossed_mass();
  double L = normal_pdf(0.3, 0.1, 0.2);
  UpdateResult r = update_step(j, 0.3, 1, p);
  CHECK(r.log_increment == doctest::Approx(std::log(c * L)).epsilon(1e-12));
  CHECK(r.posterior.cycle_count == 1);
}

TEST_CASE("update_step: zero likelihood raises") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  PredictiveJoint j = predict_step(PhaseDensity::uniform(grid), p);
  // A BBT value so extreme every normal density underflows to zero.
  CHECK_THROWS_AS(update_step(j, 1e8, 0, p), ZeroLikelihoodError);
}

TEST_CASE("filter_series: day-1 flow increment equals the uncrossed fraction") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  CycleSeries s;
  s.subject_id = "one-day";
  s.y = {std::nan("")};
  s.z = {0};
  FilterOutput out = filter_series(s, p, InitialCondition::for_series(s, grid));
  // Uncrossed fraction of the one-step flow from the uniform theta_0 prior:
  // each source bin keeps G(1 - center) of its mass this side of the boundary.
  double want = 0.0;
  for (int b = 0; b < grid.n_bins; ++b) {
    const StageParams& sp = p.increment_params(b < grid.stage_split() ? 1 : 2);
    want += gamma_cdf(1.0 - grid.center(b), sp.alpha, sp.beta) / grid.n_bins;
  }
  CHECK(out.total_loglik == doctest::Approx(std::log(want)).epsilon(1e-9));
  CHECK(out.log_increments.size() == 1);
}

TEST_CASE("filter_series: two consecutive onsets are a zero-likelihood day") {
  ModelParams p = preset("35-39");  // increments make a full cycle per day impossible
  PhaseGrid grid(512);
  CycleSeries s;
  s.subject_id = "impossible";
  s.y = {std::nan(""), std::nan("")};
  s.z = {1, 1};
  try {
    filter_series(s, p, InitialCondition::for_series(s, grid));
    FAIL("expected ZeroLikelihoodError");
  } catch (const ZeroLikelihoodError& e) {
    CHECK(e.day() == 2);
  }
}

TEST_CASE("filter matches the particle-filter oracle on a 10-day series") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  CycleSeries s = synthetic_series(p, 1234);
  s.y.resize(10);
  s.z.resize(10);

  InitialCondition init = InitialCondition::for_series(s, grid);
  FilterOutput out = filter_series(s, p, init);
  oracle::ParticleFilterResult pf = oracle::particle_filter(s, p, init, 200000, 99, 512);
  CHECK(std::fabs(out.total_loglik - pf.loglik) < 0.1);
  for (int t = 0; t < 10; ++t) {
    CHECK(tv_distance(masses(out.filtering[static_cast<size_t>(t)]),
                      pf.histogram[static_cast<size_t>(t)]) < 0.05);
  }
}

TEST_CASE("log-likelihood is deterministic and additive across series") {
  ModelParams p = preset("25-29");
  PhaseGrid grid(512);
  CycleSeries a = synthetic_series(p, 5);
  double la = filter_series(a, p, InitialCondition::for_series(a, grid)).total_loglik;
  CycleSeries a2 = a;
  double la2 = filter_series(a2, p, InitialCondition::for_series(a2, grid)).total_loglik;
  CHECK(la2 == la);  // bit-identical rerun
}

TEST_CASE("filtering stays normalized; z-only conditioning advances the mean phase") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  CycleSeries s = synthetic_series(p, 77);
  FilterOutput out = filter_series(s, p, InitialCondition::for_series(s, grid));
  for (const PhaseDensity& d : out.filtering) {
    CHECK(std::fabs(d.total_mass() - 1.0) < 1e-8);
  }
  CHECK(out.filtering.front().cycle_count == 1);  // onset day absorbed

  // Crossed-mass bookkeeping consistency: conditioning on z = 1 then z = 0
  // forever (no BBT information) advances the mean fractional phase
  // monotonically until the next wrap.
  CycleSeries zonly;
  zonly.subject_id = "z-only";
  zonly.y.assign(25, std::nan(""));
  zonly.z.assign(25, 0);
  zonly.z[0] = 1;
  FilterOutput zo = filter_series(zonly, p, InitialCondition::for_series(zonly, grid));
  for (size_t t = 1; t < zo.filtering.size(); ++t) {
    CHECK(zo.filtering[t].mean_frac() > zo.filtering[t - 1].mean_frac());
  }
}

TEST_CASE("grid refinement: 512 -> 1024 moves the log-likelihood by < 0.1%") {
  ModelParams p = preset("35-39");
  CycleSeries s = synthetic_series(p, 31);
  FilterConfig c512, c1024;
  c512.n_bins = 512;
  c1024.n_bins = 1024;
  double l512 =
      filter_series(s, p, InitialCondition::for_series(s, PhaseGrid(512)), c512).total_loglik;
  double l1024 =
      filter_series(s, p, InitialCondition::for_series(s, PhaseGrid(1024)), c1024).total_loglik;
  CHECK(std::fabs(l1024 - l512) / std::fabs(l512) < 1e-3);
}

TEST_CASE("grid refinement error is decreasing in the bin count") {
  ModelParams p = preset("35-39");
  CycleSeries s = synthetic_series(p, 13);
  // Start mid-cycle (uniform flow init): isolates the pure discretization
  // error from the grid-coupled onset-day point-mass convention.
  s.y.erase(s.y.begin());
  s.z.erase(s.z.begin());
  auto ll = [&](int bins) {
    FilterConfig c;
    c.n_bins = bins;
    return filter_series(s, p, InitialCondition::for_series(s, PhaseGrid(bins)), c).total_loglik;
  };
  double l128 = ll(128), l256 = ll(256), l512 = ll(512), l1024 = ll(1024);
  CHECK(std::fabs(l512 - l256) < std::fabs(l256 - l128));
  CHECK(std::fabs(l1024 - l512) < std::fabs(l512 - l256));
}

TEST_CASE("smoother: last-day smoothed equals last-day filtering") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(512);
  CycleSeries s = synthetic_series(p, 21);
  FilterOutput out = filter_series(s, p, InitialCondition::for_series(s, grid));
  std::vector<PhaseDensity> sm = smooth_series(out, p);
  CHECK(sm.size() == out.filtering.size());
  CHECK(tv_distance(masses(sm.back()), masses(out.filtering.back())) < 1e-12);
  for (const PhaseDensity& d : sm) CHECK(std::fabs(d.total_mass() - 1.0) < 1e-8);
}

TEST_CASE("smoother matches the absolute-grid enumeration oracle (64 bins, 6 days)") {
  // Moderate shapes keep the increment support tight so a 6-cycle absolute
  // grid truncates below 1e-12.
  ModelParams p;
  p.stage1 = StageParams(2.0, 60.0, 0.0, 0.25);
  p.stage2 = StageParams(1.5, 25.0, 0.35, 0.22);

  PhaseGrid grid(64);
  FilterConfig cfg;
  cfg.n_bins = 64;
  cfg.source_mass_cutoff = 0.0;

  for (int scenario = 0; scenario < 2; ++scenario) {
    CycleSeries s;
    s.subject_id = "oracle";
    if (scenario == 0) {
      s.y = {0.01, std::nan(""), -0.03, 0.34, 0.38, 0.31};
      s.z = {1, 0, 0, 0, 0, 0};
    } else {
      s.y = {0.02, 0.05, std::nan(""), 0.30, 0.36, 0.01};
      s.z = {0, 0, 0, 0, 0, 1};
    }
    InitialCondition init = InitialCondition::for_series(s, grid);
    FilterOutput out = filter_series(s, p, init, cfg);
    std::vector<PhaseDensity> sm = smooth_series(out, p);
    oracle::EnumerationResult en = oracle::enumeration_forward_backward(s, p, init, 64, 6);

    CHECK(std::fabs(out.total_loglik - en.loglik) < 1e-9);
    for (int t = 0; t < s.length(); ++t) {
      CHECK(tv_distance(masses(out.filtering[static_cast<size_t>(t)]),
                        en.filtered[static_cast<size_t>(t)]) < 1e-6);
      CHECK(tv_distance(masses(sm[static_cast<size_t>(t)]),
                        en.smoothed[static_cast<size_t>(t)]) < 1e-6);
    }
  }
}

TEST_CASE("reference and production filters agree") {
  ModelParams p = preset("35-39");
  PhaseGrid grid(128);
  FilterConfig cfg;
  cfg.n_bins = 128;
  CycleSeries s = synthetic_series(p, 8);
  s.y.resize(std::min<size_t>(12, s.y.size()));
  s.z.resize(s.y.size());
  InitialCondition init = InitialCondition::for_series(s, grid);
  FilterOutput a = filter_series(s, p, init, cfg);
  FilterOutput b = reference::filter_series(s, p, init, cfg);
  CHECK(std::fabs(a.total_loglik - b.total_loglik) < 1e-10);
  for (size_t t = 0; t < a.filtering.size(); ++t) {
    CHECK(tv_distance(masses(a.filtering[t]), masses(b.filtering[t])) < 1e-12);
  }
}
