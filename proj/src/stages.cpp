#include "mcycle/stages.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mcycle/gamma.hpp"

namespace mcycle {

double prob_stage1(const PhaseDensity& density) {
  const PhaseGrid& grid = density.grid;
  double total = 0.0, first = 0.0;
  for (int i = 0; i < grid.n_bins; ++i) {
    total += density.mass(i);
    if (i < grid.stage_split()) first += density.mass(i);
  }
  if (!(total > 0.0)) throw InvariantError("prob_stage1: empty density");
  return first / total;
}

std::vector<StageCall> stage_calls(const std::vector<PhaseDensity>& densities,
                                   DensityBasis basis) {
  std::vector<StageCall> calls;
  calls.reserve(densities.size());
  for (size_t t = 0; t < densities.size(); ++t) {
    StageCall c;
    c.day = static_cast<int>(t) + 1;
    c.prob_stage1 = prob_stage1(densities[t]);
    c.call = c.prob_stage1 >= 0.5 ? 1 : 2;
    c.basis = basis;
    calls.push_back(c);
  }
  return calls;
}

CycleStageSummary stage_lengths(const std::vector<PhaseDensity>& cycle_densities) {
  if (cycle_densities.empty()) {
    throw std::invalid_argument("stage_lengths: empty cycle");
  }
  CycleStageSummary s;
  bool seen_stage2 = false;
  for (const PhaseDensity& d : cycle_densities) {
    int call = prob_stage1(d) >= 0.5 ? 1 : 2;
    if (call == 1) {
      ++s.first_stage_length;
      if (seen_stage2) s.non_monotone = true;
    } else {
      ++s.second_stage_length;
      seen_stage2 = true;
    }
  }
  s.monophasic = s.second_stage_length < 3;
  return s;
}

std::vector<double> stage_length_pmf(int stage, const ModelParams& params, int k_max) {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage_length_pmf: stage must be 1 or 2");
  if (k_max < 1) throw std::invalid_argument("stage_length_pmf: require k_max >= 1");
  const StageParams& sp = params.increment_params(stage);
  std::vector<double> pmf(static_cast<size_t>(k_max));
  double prev = 1.0;  // G(0.5; 0, beta) == 1
  for (int k = 1; k <= k_max; ++k) {
    double next = gamma_cdf(0.5, k * sp.alpha, sp.beta);
    pmf[static_cast<size_t>(k - 1)] = std::max(0.0, prev - next);
    prev = next;
  }
  return pmf;
}

namespace {

StageMoments moments_of(std::vector<double> v) {
  StageMoments m;
  size_t n = v.size();
  if (n == 0) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(n);
  std::sort(v.begin(), v.end());
  m.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (n >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return m;
}

}  // namespace

StageStats population_stage_stats(const std::vector<CycleStageSummary>& summaries) {
  if (summaries.empty()) {
    throw std::invalid_argument("population_stage_stats: empty input");
  }
  StageStats st;
  st.n_cycles = static_cast<int>(summaries.size());
  std::vector<double> f_all, s_all, f_nm, s_nm;
  for (const CycleStageSummary& c : summaries) {
    f_all.push_back(c.first_stage_length);
    s_all.push_back(c.second_stage_length);
    if (c.monophasic) {
      ++st.n_monophasic;
    } else {
      f_nm.push_back(c.first_stage_length);
      s_nm.push_back(c.second_stage_length);
    }
  }
  st.monophasic_pct = 100.0 * st.n_monophasic / static_cast<double>(st.n_cycles);
  st.first_all = moments_of(f_all);
  st.second_all = moments_of(s_all);
  st.first_nomono = moments_of(f_nm);
  st.second_nomono = moments_of(s_nm);

  double n = static_cast<double>(st.n_cycles);
  double mf = st.first_all.mean, ms = st.second_all.mean;
  double sff = 0.0, sss = 0.0, sfs = 0.0;
  for (size_t i = 0; i < f_all.size(); ++i) {
    sff += (f_all[i] - mf) * (f_all[i] - mf);
    sss += (s_all[i] - ms) * (s_all[i] - ms);
    sfs += (f_all[i] - mf) * (s_all[i] - ms);
  }
  (void)n;
  st.correlation = sff > 0.0 && sss > 0.0 ? sfs / std::sqrt(sff * sss)
                                          : std::numeric_limits<double>::quiet_NaN();
  return st;
}

StageMoments pmf_moments(const std::vector<double>& pmf) {
  StageMoments m;
  double mass = 0.0, mean = 0.0, m2 = 0.0;
  for (size_t i = 0; i < pmf.size(); ++i) {
    double k = static_cast<double>(i + 1);
    mass += pmf[i];
    mean += k * pmf[i];
    m2 += k * k * pmf[i];
  }
  double tail = std::max(0.0, 1.0 - mass);
  double kt = static_cast<double>(pmf.size() + 1);
  mean += kt * tail;
  m2 += kt * kt * tail;
  m.mean = mean;
  m.sd = std::sqrt(std::max(0.0, m2 - mean * mean));
  // Median from the cumulative pmf.
  double cum = 0.0;
  m.median = kt;
  for (size_t i = 0; i < pmf.size(); ++i) {
    cum += pmf[i];
    if (cum >= 0.5) {
      m.median = static_cast<double>(i + 1);
      break;
    }
  }
  return m;
}

}  // namespace mcycle
