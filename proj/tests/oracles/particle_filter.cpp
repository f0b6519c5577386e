#include "oracles/particle_filter.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mcycle/errors.hpp"
#include "mcycle/gamma.hpp"
#include "mcycle/parallel.hpp"

namespace mcycle::oracle {

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

ParticleFilterResult particle_filter(const CycleSeries& series, const ModelParams& params,
                                     const InitialCondition& init, long n_particles,
                                     uint64_t seed, int n_bins) {
  const int T = series.length();
  const long n = n_particles;
  const PhaseGrid& igrid = init.density.grid;
  PhaseGrid hgrid(n_bins);

  // Inverse-cdf table over the init density's bins.
  std::vector<double> init_cum(static_cast<size_t>(igrid.n_bins));
  {
    double acc = 0.0;
    for (int b = 0; b < igrid.n_bins; ++b) {
      acc += init.density.mass(b);
      init_cum[static_cast<size_t>(b)] = acc;
    }
    for (double& v : init_cum) v /= acc;
  }

  const int n_blocks = 128;
  std::vector<double> frac(static_cast<size_t>(n));
  std::vector<double> w(static_cast<size_t>(n));

  auto block_range = [&](int blk, long& lo, long& hi) {
    lo = n * blk / n_blocks;
    hi = n * (blk + 1) / n_blocks;
  };

#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < n_blocks; ++blk) {
    std::mt19937_64 rng(mix64(seed ^ mix64(static_cast<uint64_t>(blk) + 1000)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    long lo, hi;
    block_range(blk, lo, hi);
    for (long i = lo; i < hi; ++i) {
      double u = unif(rng);
      int b = static_cast<int>(std::lower_bound(init_cum.begin(), init_cum.end(), u) -
                               init_cum.begin());
      if (b >= igrid.n_bins) b = igrid.n_bins - 1;
      frac[static_cast<size_t>(i)] = (b + unif(rng)) * igrid.delta();
    }
  }

  ParticleFilterResult out;
  out.histogram.assign(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(n_bins), 0.0));
  std::mt19937_64 resample_rng(mix64(seed ^ 0x5e5a11ull));
  std::uniform_real_distribution<double> resample_unif(0.0, 1.0);

  for (int t = 0; t < T; ++t) {
    bool state_prior_day = t == 0 && init.mode == InitialCondition::Mode::StatePrior;
    int z = series.z[static_cast<size_t>(t)];
    bool have_y = series.has_y(t);
    double y = have_y ? series.y[static_cast<size_t>(t)] : 0.0;

#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < n_blocks; ++blk) {
      std::mt19937_64 rng(
          mix64(seed ^ mix64((static_cast<uint64_t>(t) << 20) + static_cast<uint64_t>(blk))));
      long lo, hi;
      block_range(blk, lo, hi);
      for (long i = lo; i < hi; ++i) {
        double f = frac[static_cast<size_t>(i)];
        bool crossed = false;
        if (!state_prior_day) {
          const StageParams& sp = params.increment_params(f < 0.5 ? 1 : 2);
          std::gamma_distribution<double> inc(sp.alpha, 1.0 / sp.beta);
          f += inc(rng);
          if (f >= 1.0) {
            crossed = true;
            f -= std::floor(f);
          }
          frac[static_cast<size_t>(i)] = f;
        }
        double weight = 1.0;
        if (!state_prior_day && (z == 1) != crossed) weight = 0.0;
        if (weight > 0.0 && have_y) {
          weight = normal_pdf(y, params.obs_mean(f), params.obs_sigma(f));
        }
        w[static_cast<size_t>(i)] = weight;
      }
    }

    double total = 0.0;
    for (long i = 0; i < n; ++i) total += w[static_cast<size_t>(i)];
    if (!(total > 0.0)) {
      throw ZeroLikelihoodError(t + 1, "particle filter: all particles died on day " +
                                           std::to_string(t + 1));
    }
    out.loglik += std::log(total / static_cast<double>(n));

    std::vector<double>& hist = out.histogram[static_cast<size_t>(t)];
    for (long i = 0; i < n; ++i) {
      int b = static_cast<int>(frac[static_cast<size_t>(i)] * n_bins);
      if (b >= n_bins) b = n_bins - 1;
      hist[static_cast<size_t>(b)] += w[static_cast<size_t>(i)];
    }
    for (double& v : hist) v /= total;

    // Systematic resampling.
    std::vector<double> newfrac(static_cast<size_t>(n));
    double step = total / static_cast<double>(n);
    double pos = resample_unif(resample_rng) * step;
    double cum = 0.0;
    long src = -1;
    for (long i = 0; i < n; ++i) {
      while (cum < pos && src + 1 < n) {
        ++src;
        cum += w[static_cast<size_t>(src)];
      }
      newfrac[static_cast<size_t>(i)] = frac[static_cast<size_t>(src < 0 ? 0 : src)];
      pos += step;
    }
    frac.swap(newfrac);
  }
  return out;
}

}  // namespace mcycle::oracle
