#include "mcycle/simulator.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mcycle/errors.hpp"

namespace mcycle {

namespace {

// splitmix64: decorrelates the per-cycle seeds derived from (seed, index).
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

SimulatedCycle simulate_one(const SimConfig& cfg, int index) {
  std::mt19937_64 rng(mix64(cfg.seed ^ mix64(static_cast<uint64_t>(index) + 1)));
  const ModelParams& p = cfg.params;

  SimulatedCycle out;
  out.series.subject_id = "sim" + std::to_string(index + 1);
  out.theta.push_back(0.0);  // onset day: the phase has just crossed an integer

  double theta = 0.0;
  while (true) {
    const StageParams& sp = p.increment_params(stage_of(theta));
    std::gamma_distribution<double> inc(sp.alpha, 1.0 / sp.beta);
    double next = theta + inc(rng);
    if (next >= 1.0) break;
    theta = next;
    out.theta.push_back(theta);
    if (static_cast<int>(out.theta.size()) > cfg.max_days_per_cycle) {
      throw SafetyCapError("simulate: cycle " + std::to_string(index + 1) + " exceeded " +
                           std::to_string(cfg.max_days_per_cycle) + " days");
    }
  }

  int length = static_cast<int>(out.theta.size());
  out.cycle_length = length;
  out.stage2_start_day = length + 1;
  for (int t = 0; t < length; ++t) {
    if (frac_part(out.theta[static_cast<size_t>(t)]) >= 0.5) {
      out.stage2_start_day = t + 1;
      break;
    }
  }

  out.series.y.resize(static_cast<size_t>(length));
  out.series.z.assign(static_cast<size_t>(length), 0);
  out.series.z[0] = 1;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool any_observed = false;
  for (int t = 0; t < length; ++t) {
    double f = frac_part(out.theta[static_cast<size_t>(t)]);
    double y = p.obs_mean(f) + p.obs_sigma(f) * noise(rng);
    bool missing = unif(rng) < cfg.missing_rate;
    out.series.y[static_cast<size_t>(t)] = missing ? std::numeric_limits<double>::quiet_NaN() : y;
    any_observed = any_observed || !missing;
  }
  if (!any_observed) {
    // Keep the series ingestible: reveal day 1.
    double f = frac_part(out.theta[0]);
    out.series.y[0] = p.obs_mean(f) + p.obs_sigma(f) * noise(rng);
  }
  return out;
}

}  // namespace

std::vector<SimulatedCycle> simulate(const SimConfig& config) {
  config.params.validate();
  if (config.n_cycles < 1) throw std::invalid_argument("simulate: n_cycles must be >= 1");
  if (!(config.missing_rate >= 0.0) || config.missing_rate >= 1.0) {
    throw std::invalid_argument("simulate: missing_rate must lie in [0, 1)");
  }
  std::vector<SimulatedCycle> cycles(static_cast<size_t>(config.n_cycles));
  bool capped = false;
  std::string cap_msg;
#pragma omp parallel for schedule(dynamic) if (config.exec == Exec::Parallel)
  for (int i = 0; i < config.n_cycles; ++i) {
    try {
      cycles[static_cast<size_t>(i)] = simulate_one(config, i);
    } catch (const SafetyCapError& e) {
#pragma omp critical
      {
        capped = true;
        cap_msg = e.what();
      }
    }
  }
  if (capped) throw SafetyCapError(cap_msg);
  return cycles;
}

}  // namespace mcycle
