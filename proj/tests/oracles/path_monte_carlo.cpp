#include "oracles/path_monte_carlo.hpp"

#include <random>
#include <stdexcept>

#include "mcycle/parallel.hpp"

namespace mcycle::oracle {

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr int kBlocks = 64;

// Walks one path from fractional phase `frac0`; returns (j, k): the first day
// whose phase reaches 0.5 (0 when the path starts in stage 2) and the onset
// day. k is capped at `cap`.
std::pair<int, int> walk(double frac0, const ModelParams& params, int cap, std::mt19937_64& rng) {
  double pos = frac0;
  int j = frac0 < 0.5 ? 0 : -1;  // -1: started in stage 2
  for (int day = 1; day <= cap; ++day) {
    const StageParams& sp = params.increment_params(pos < 0.5 ? 1 : 2);
    std::gamma_distribution<double> inc(sp.alpha, 1.0 / sp.beta);
    pos += inc(rng);
    if (j == 0 && pos >= 0.5) j = day;
    if (pos >= 1.0) return {j, day};
  }
  return {j, cap + 1};
}

}  // namespace

std::vector<double> mc_onset_pmf(Phase theta, const ModelParams& params, int k_max, long n_paths,
                                 uint64_t seed) {
  double frac0 = frac_part(theta.theta);
  std::vector<std::vector<long>> counts(kBlocks, std::vector<long>(static_cast<size_t>(k_max), 0));
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < kBlocks; ++blk) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<uint64_t>(blk) + 77)));
    long lo = n_paths * blk / kBlocks, hi = n_paths * (blk + 1) / kBlocks;
    for (long p = lo; p < hi; ++p) {
      int k = walk(frac0, params, k_max, rng).second;
      if (k <= k_max) ++counts[static_cast<size_t>(blk)][static_cast<size_t>(k - 1)];
    }
  }
  std::vector<double> pmf(static_cast<size_t>(k_max), 0.0);
  for (int blk = 0; blk < kBlocks; ++blk) {
    for (int k = 0; k < k_max; ++k) {
      pmf[static_cast<size_t>(k)] += static_cast<double>(counts[static_cast<size_t>(blk)][static_cast<size_t>(k)]);
    }
  }
  for (double& v : pmf) v /= static_cast<double>(n_paths);
  return pmf;
}

std::vector<std::vector<double>> mc_phi_table(Phase theta, const ModelParams& params, int k_max,
                                              long n_paths, uint64_t seed) {
  if (stage_of(theta) != 1) {
    throw std::invalid_argument("mc_phi_table: theta must lie in stage 1");
  }
  double frac0 = frac_part(theta.theta);
  std::vector<std::vector<long>> counts(
      kBlocks, std::vector<long>(static_cast<size_t>(k_max) * static_cast<size_t>(k_max), 0));
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < kBlocks; ++blk) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<uint64_t>(blk) + 177)));
    long lo = n_paths * blk / kBlocks, hi = n_paths * (blk + 1) / kBlocks;
    for (long p = lo; p < hi; ++p) {
      auto [j, k] = walk(frac0, params, k_max, rng);
      if (k <= k_max && j >= 1 && j <= k) {
        ++counts[static_cast<size_t>(blk)][static_cast<size_t>(j - 1) * k_max + (k - 1)];
      }
    }
  }
  std::vector<std::vector<double>> phi(static_cast<size_t>(k_max),
                                       std::vector<double>(static_cast<size_t>(k_max), 0.0));
  for (int blk = 0; blk < kBlocks; ++blk) {
    for (int j = 0; j < k_max; ++j) {
      for (int k = 0; k < k_max; ++k) {
        phi[static_cast<size_t>(j)][static_cast<size_t>(k)] +=
            static_cast<double>(counts[static_cast<size_t>(blk)][static_cast<size_t>(j) * k_max + k]);
      }
    }
  }
  for (auto& row : phi) {
    for (double& v : row) v /= static_cast<double>(n_paths);
  }
  return phi;
}

std::vector<double> mc_days_to_accumulate(double shape, double rate, double distance, int k_max,
                                          long n_paths, uint64_t seed) {
  std::vector<std::vector<long>> counts(kBlocks, std::vector<long>(static_cast<size_t>(k_max), 0));
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < kBlocks; ++blk) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<uint64_t>(blk) + 777)));
    std::gamma_distribution<double> inc(shape, 1.0 / rate);
    long lo = n_paths * blk / kBlocks, hi = n_paths * (blk + 1) / kBlocks;
    for (long p = lo; p < hi; ++p) {
      double pos = 0.0;
      for (int day = 1; day <= k_max; ++day) {
        pos += inc(rng);
        if (pos >= distance) {
          ++counts[static_cast<size_t>(blk)][static_cast<size_t>(day - 1)];
          break;
        }
      }
    }
  }
  std::vector<double> pmf(static_cast<size_t>(k_max), 0.0);
  for (int blk = 0; blk < kBlocks; ++blk) {
    for (int k = 0; k < k_max; ++k) {
      pmf[static_cast<size_t>(k)] += static_cast<double>(counts[static_cast<size_t>(blk)][static_cast<size_t>(k)]);
    }
  }
  for (double& v : pmf) v /= static_cast<double>(n_paths);
  return pmf;
}

double mc_mean_onset_day(Phase theta, const ModelParams& params, long n_paths, uint64_t seed,
                         int day_cap) {
  double frac0 = frac_part(theta.theta);
  std::vector<double> sums(kBlocks, 0.0);
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < kBlocks; ++blk) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<uint64_t>(blk) + 999)));
    long lo = n_paths * blk / kBlocks, hi = n_paths * (blk + 1) / kBlocks;
    double s = 0.0;
    for (long p = lo; p < hi; ++p) {
      s += static_cast<double>(walk(frac0, params, day_cap, rng).second);
    }
    sums[static_cast<size_t>(blk)] = s;
  }
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(n_paths);
}

}  // namespace mcycle::oracle
