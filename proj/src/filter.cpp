#include "mcycle/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcycle {

namespace {

// Contiguous source range holding all mass above the cutoff. A range (rather
// than an index list) keeps the gather loops vectorizable; interior bins
// below the cutoff are simply included.
struct SourceRange {
  int lo = 0;
  int hi = -1;  // inclusive
};

SourceRange active_sources(const std::vector<double>& m, double cutoff_fraction) {
  SourceRange r;
  const int n = static_cast<int>(m.size());
  double cut = 0.0;
  if (cutoff_fraction > 0.0) {
    double total = 0.0;
    for (double v : m) total += v;
    cut = cutoff_fraction * total;
  }
  int lo = 0;
  while (lo < n && !(m[static_cast<size_t>(lo)] > cut)) ++lo;
  int hi = n - 1;
  while (hi >= lo && !(m[static_cast<size_t>(hi)] > cut)) --hi;
  r.lo = lo;
  r.hi = hi;
  return r;
}

// Selected-component push: computes only the z-chosen side of the
// crossed/uncrossed split (the other side is discarded by the update anyway).
// Sources are scattered in fixed blocks with per-block partial buffers merged
// in block order, so the result is identical for any thread count.
void push_selected(const std::vector<double>& m, const SourceRange& range, const PhaseGrid& grid,
                   const TransitionKernel& K, int z, Exec exec, std::vector<double>& out,
                   std::vector<std::vector<double>>& block_buf) {
  const int n = grid.n_bins;
  const int split = grid.stage_split();
  constexpr int kBlocks = 8;
  out.assign(static_cast<size_t>(n), 0.0);
  if (range.hi < range.lo) return;
  block_buf.resize(kBlocks);

#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int blk = 0; blk < kBlocks; ++blk) {
    std::vector<double>& buf = block_buf[static_cast<size_t>(blk)];
    buf.assign(static_cast<size_t>(n), 0.0);
    int lo = range.lo + (range.hi - range.lo + 1) * blk / kBlocks;
    int hi = range.lo + (range.hi - range.lo + 1) * (blk + 1) / kBlocks - 1;
    for (int a = lo; a <= hi; ++a) {
      double ma = m[static_cast<size_t>(a)];
      if (ma <= 0.0) continue;
      int s = a < split ? 0 : 1;
      const double* within = K.within[s].data();
      const double* folded = K.folded[s].data();
      if (z == 0) {
        int qmax = std::min(n - 1 - a, K.within_support[s] - 1);
        double* dst = buf.data() + a;
        for (int q = 0; q <= qmax; ++q) dst[q] += ma * within[q];
      } else {
        // Wrapping part of the one-cycle kernel: destinations 0 .. a-1.
        for (int q = n - a; q < std::min(n, K.within_support[s]); ++q) {
          buf[static_cast<size_t>(a + q - n)] += ma * within[q];
        }
        // Folded multi-cycle part: two contiguous destination segments.
        for (int q = 0; q < n - a; ++q) buf[static_cast<size_t>(a + q)] += ma * folded[q];
        for (int q = n - a; q < n; ++q) buf[static_cast<size_t>(a + q - n)] += ma * folded[q];
      }
    }
  }
  for (int blk = 0; blk < kBlocks; ++blk) {
    const std::vector<double>& buf = block_buf[static_cast<size_t>(blk)];
    for (int d = 0; d < n; ++d) out[static_cast<size_t>(d)] += buf[static_cast<size_t>(d)];
  }
}

// Shared gather core: pushes source masses one step forward into the
// uncrossed/crossed destination split. Deterministic for any thread count
// (each destination bin is an independent fixed-order sum).
void push_forward(const std::vector<double>& m, const SourceRange& range, const PhaseGrid& grid,
                  const TransitionKernel& K, Exec exec, std::vector<double>& u,
                  std::vector<double>& c) {
  const int n = grid.n_bins;
  const int split = grid.stage_split();
  u.assign(static_cast<size_t>(n), 0.0);
  c.assign(static_cast<size_t>(n), 0.0);
  if (range.hi < range.lo) return;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (int d = 0; d < n; ++d) {
    double ud = 0.0, cd = 0.0;
    // Sources at or below the destination: split at the stage boundary so the
    // kernel choice is loop-invariant.
    for (int s = 0; s < 2; ++s) {
      int a0 = std::max(range.lo, s == 0 ? 0 : split);
      int a1 = std::min({range.hi, d, s == 0 ? split - 1 : n - 1});
      const double* within = K.within[s].data();
      const double* folded = K.folded[s].data();
      for (int a = a0; a <= a1; ++a) cd += m[static_cast<size_t>(a)] * folded[d - a];
      a0 = std::max(a0, d - K.within_support[s] + 1);
      for (int a = a0; a <= a1; ++a) ud += m[static_cast<size_t>(a)] * within[d - a];
    }
    // Sources above the destination: the move wraps, so both kernel parts are
    // crossings.
    for (int s = 0; s < 2; ++s) {
      int a0 = std::max({range.lo, d + 1, s == 0 ? 0 : split});
      int a1 = std::min({range.hi, s == 0 ? split - 1 : n - 1});
      const double* within = K.within[s].data();
      const double* folded = K.folded[s].data();
      for (int a = a0; a <= a1; ++a) {
        cd += m[static_cast<size_t>(a)] * (within[d - a + n] + folded[d - a + n]);
      }
    }
    u[static_cast<size_t>(d)] = ud;
    c[static_cast<size_t>(d)] = cd;
  }
}

std::vector<double> masses_of(const PhaseDensity& d) {
  std::vector<double> m(d.weights.size());
  double delta = d.grid.delta();
  for (size_t i = 0; i < m.size(); ++i) m[i] = d.weights[i] * delta;
  return m;
}

void obs_weights(const CycleSeries& series, int t, const ModelParams& params,
                 const PhaseGrid& grid, std::vector<double>& g) {
  const int n = grid.n_bins;
  g.assign(static_cast<size_t>(n), 1.0);
  if (!series.has_y(t)) return;
  double y = series.y[static_cast<size_t>(t)];
  if (implicit_order(params.variant) == 0) {
    // Two distinct values only: the mean/sd switch on the stage.
    double g1 = normal_pdf(y, params.stage1.mu, params.stage1.sigma);
    double g2 = normal_pdf(y, params.stage2.mu, params.stage2.sigma);
    std::fill(g.begin(), g.begin() + grid.stage_split(), g1);
    std::fill(g.begin() + grid.stage_split(), g.end(), g2);
    return;
  }
  for (int b = 0; b < n; ++b) {
    double f = grid.center(b);
    g[static_cast<size_t>(b)] = normal_pdf(y, params.obs_mean(f), params.obs_sigma(f));
  }
}

// Forward recursion shared by filter_series and the likelihood-only path.
// Sink receives, per day: the predictive split (masses) or the day-1 prior,
// and the normalized posterior masses plus the log increment.
template <typename Sink>
double run_filter(const CycleSeries& series, const ModelParams& params,
                  const TransitionKernel& K, const InitialCondition& init,
                  const FilterConfig& cfg, Sink&& sink) {
  PhaseGrid grid(cfg.n_bins);
  if (!(init.density.grid == grid)) {
    throw std::invalid_argument("filter: init density grid does not match config");
  }
  const int n = grid.n_bins;
  const int T = series.length();
  if (T == 0) throw std::invalid_argument("filter: empty series");

  std::vector<double> cur = masses_of(init.density);
  long cycles = init.density.cycle_count;
  std::vector<double> u, c, g, post(static_cast<size_t>(n));
  std::vector<std::vector<double>> block_buf;
  double total_loglik = 0.0;

  for (int t = 0; t < T; ++t) {
    int z = series.z[static_cast<size_t>(t)];
    if (z != 0 && z != 1) throw std::invalid_argument("filter: z must be 0 or 1");
    obs_weights(series, t, params, grid, g);

    double day_mass = 0.0;
    if (t == 0 && init.mode == InitialCondition::Mode::StatePrior) {
      // The prior is the day-1 state distribution; only the BBT factor applies.
      for (int b = 0; b < n; ++b) {
        post[static_cast<size_t>(b)] = cur[static_cast<size_t>(b)] * g[static_cast<size_t>(b)];
        day_mass += post[static_cast<size_t>(b)];
      }
      cycles += z;
      if (!(day_mass > 0.0)) {
        throw ZeroLikelihoodError(1, "zero likelihood on day 1 (state-prior update)");
      }
      sink.day_prior(cur);
    } else {
      SourceRange active = active_sources(cur, cfg.source_mass_cutoff);
      const std::vector<double>* sel;
      if constexpr (std::decay_t<Sink>::kNeedsPredictive) {
        push_forward(cur, active, grid, K, cfg.exec, u, c);
        sink.day_predictive(u, c, cycles);
        sel = z == 1 ? &c : &u;
      } else {
        push_selected(cur, active, grid, K, z, cfg.exec, u, block_buf);
        sel = &u;
      }
      for (int b = 0; b < n; ++b) {
        post[static_cast<size_t>(b)] = (*sel)[static_cast<size_t>(b)] * g[static_cast<size_t>(b)];
        day_mass += post[static_cast<size_t>(b)];
      }
      cycles += z;
      if (!(day_mass > 0.0)) {
        throw ZeroLikelihoodError(t + 1, "zero likelihood on day " + std::to_string(t + 1) +
                                             ": data contradict the model");
      }
    }
    for (int b = 0; b < n; ++b) post[static_cast<size_t>(b)] /= day_mass;
    cur = post;
    double inc = std::log(day_mass);
    total_loglik += inc;
    sink.day_posterior(cur, cycles, inc);
  }
  return total_loglik;
}

struct NullSink {
  static constexpr bool kNeedsPredictive = false;
  void day_prior(const std::vector<double>&) {}
  void day_predictive(const std::vector<double>&, const std::vector<double>&, long) {}
  void day_posterior(const std::vector<double>&, long, double) {}
};

PhaseDensity density_from_masses(const std::vector<double>& m, PhaseGrid grid, long cycles) {
  PhaseDensity d(grid);
  double total = 0.0;
  for (double v : m) total += v;
  if (!(total > 0.0)) throw InvariantError("density_from_masses: zero mass");
  for (size_t i = 0; i < m.size(); ++i) d.weights[i] = m[i] / total * grid.n_bins;
  d.cycle_count = cycles;
  return d;
}

struct RecordingSink {
  static constexpr bool kNeedsPredictive = true;
  PhaseGrid grid;
  FilterOutput* out;

  void day_prior(const std::vector<double>& prior) {
    out->predictive.push_back(density_from_masses(prior, grid, out->init.density.cycle_count));
  }
  void day_predictive(const std::vector<double>& u, const std::vector<double>& c, long cycles) {
    std::vector<double> m(u.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = u[i] + c[i];
    out->predictive.push_back(density_from_masses(m, grid, cycles));
  }
  void day_posterior(const std::vector<double>& post, long cycles, double inc) {
    out->filtering.push_back(density_from_masses(post, grid, cycles));
    out->log_increments.push_back(inc);
  }
};

}  // namespace

TransitionKernel::TransitionKernel(const ModelParams& params, PhaseGrid grid_, double tail)
    : grid(grid_) {
  const int n = grid.n_bins;
  const double delta = grid.delta();
  for (int s = 0; s < 2; ++s) {
    const StageParams& sp = params.increment_params(s + 1);
    within[s].assign(static_cast<size_t>(n), 0.0);
    folded[s].assign(static_cast<size_t>(n), 0.0);
    double prev = 0.0;  // G(0)
    for (int q = 0; q < n; ++q) {
      double hi = gamma_cdf((q + 0.5) * delta, sp.alpha, sp.beta);
      within[s][static_cast<size_t>(q)] = hi - prev;
      prev = hi;
    }
    within_support[s] = 1;
    for (int q = n - 1; q >= 0; --q) {
      if (within[s][static_cast<size_t>(q)] > 0.0) {
        within_support[s] = q + 1;
        break;
      }
    }
    for (int c = 1;; ++c) {
      double start = (static_cast<double>(c) * n - 0.5) * delta;
      if (gamma_sf(start, sp.alpha, sp.beta) < tail) break;
      double prevc = gamma_cdf(start, sp.alpha, sp.beta);
      for (int q = 0; q < n; ++q) {
        double hi = gamma_cdf((static_cast<double>(c) * n + q + 0.5) * delta, sp.alpha, sp.beta);
        folded[s][static_cast<size_t>(q)] += hi - prevc;
        prevc = hi;
      }
    }
  }
}

double PredictiveJoint::total_mass() const {
  double s = 0.0;
  for (double v : uncrossed) s += v;
  for (double v : crossed) s += v;
  return s;
}

double PredictiveJoint::crossed_mass() const {
  double s = 0.0;
  for (double v : crossed) s += v;
  return s;
}

PhaseDensity PredictiveJoint::marginal() const {
  std::vector<double> m(uncrossed.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = uncrossed[i] + crossed[i];
  return density_from_masses(m, grid, cycle_count);
}

PredictiveJoint predict_step(const PhaseDensity& filtering, const TransitionKernel& kernel,
                             const FilterConfig& config) {
  if (!(filtering.grid == kernel.grid)) {
    throw std::invalid_argument("predict_step: density and kernel grids differ");
  }
  std::vector<double> m = masses_of(filtering);
  SourceRange active = active_sources(m, config.source_mass_cutoff);
  PredictiveJoint out;
  out.grid = filtering.grid;
  out.cycle_count = filtering.cycle_count;
  push_forward(m, active, filtering.grid, kernel, config.exec, out.uncrossed, out.crossed);
  return out;
}

PredictiveJoint predict_step(const PhaseDensity& filtering, const ModelParams& params,
                             const FilterConfig& config) {
  TransitionKernel kernel(params, filtering.grid, config.kernel_tail);
  return predict_step(filtering, kernel, config);
}

UpdateResult update_step(const PredictiveJoint& predictive, std::optional<double> y, int z,
                         const ModelParams& params) {
  if (z != 0 && z != 1) throw std::invalid_argument("update_step: z must be 0 or 1");
  const PhaseGrid& grid = predictive.grid;
  const int n = grid.n_bins;
  std::vector<double> mass(static_cast<size_t>(n));
  double total = 0.0;
  const std::vector<double>& sel = z == 1 ? predictive.crossed : predictive.uncrossed;
  for (int b = 0; b < n; ++b) {
    double g = 1.0;
    if (y.has_value()) {
      double f = grid.center(b);
      g = normal_pdf(*y, params.obs_mean(f), params.obs_sigma(f));
    }
    mass[static_cast<size_t>(b)] = sel[static_cast<size_t>(b)] * g;
    total += mass[static_cast<size_t>(b)];
  }
  if (!(total > 0.0)) {
    throw ZeroLikelihoodError(-1, "update_step: post-update mass underflowed to zero");
  }
  UpdateResult r;
  r.log_increment = std::log(total);
  r.posterior = density_from_masses(mass, grid, predictive.cycle_count + z);
  return r;
}

InitialCondition InitialCondition::state_prior(PhaseDensity d) {
  InitialCondition ic;
  ic.mode = Mode::StatePrior;
  ic.density = std::move(d);
  return ic;
}

InitialCondition InitialCondition::flow(PhaseDensity d) {
  InitialCondition ic;
  ic.mode = Mode::PreSeriesFlow;
  ic.density = std::move(d);
  return ic;
}

InitialCondition InitialCondition::for_series(const CycleSeries& series, PhaseGrid grid) {
  if (series.length() > 0 && series.z[0] == 1) {
    return state_prior(PhaseDensity::point_mass(grid, 0));
  }
  return flow(PhaseDensity::uniform(grid));
}

FilterOutput filter_series(const CycleSeries& series, const ModelParams& params,
                           const InitialCondition& init, const FilterConfig& config) {
  params.validate();
  TransitionKernel kernel(params, PhaseGrid(config.n_bins), config.kernel_tail);
  FilterOutput out;
  out.series = series;
  out.init = init;
  out.config = config;
  RecordingSink sink{PhaseGrid(config.n_bins), &out};
  out.total_loglik = run_filter(series, params, kernel, init, config, sink);
  return out;
}

double series_loglik(const CycleSeries& series, const ModelParams& params,
                     const TransitionKernel& kernel, const InitialCondition& init,
                     const FilterConfig& config) {
  return run_filter(series, params, kernel, init, config, NullSink{});
}

std::vector<PhaseDensity> smooth_series(const FilterOutput& out, const ModelParams& params) {
  const FilterConfig& cfg = out.config;
  PhaseGrid grid(cfg.n_bins);
  const int n = grid.n_bins;
  const int split = grid.stage_split();
  const int T = out.series.length();
  TransitionKernel K(params, grid, cfg.kernel_tail);

  std::vector<std::vector<double>> gamma(static_cast<size_t>(T));
  gamma[static_cast<size_t>(T - 1)] = masses_of(out.filtering[static_cast<size_t>(T - 1)]);

  std::vector<double> u, c, r(static_cast<size_t>(n));
  for (int t = T - 1; t >= 1; --t) {
    // z-selected one-step-ahead mass into day t+1 (1-based), recomputed from
    // the stored filtering density with the same cutoff as the forward pass.
    std::vector<double> fprev = masses_of(out.filtering[static_cast<size_t>(t - 1)]);
    SourceRange active = active_sources(fprev, cfg.source_mass_cutoff);
    push_forward(fprev, active, grid, K, cfg.exec, u, c);
    int z = out.series.z[static_cast<size_t>(t)];
    const std::vector<double>& p = z == 1 ? c : u;
    const std::vector<double>& gt = gamma[static_cast<size_t>(t)];
    for (int b = 0; b < n; ++b) {
      r[static_cast<size_t>(b)] =
          p[static_cast<size_t>(b)] > 0.0 ? gt[static_cast<size_t>(b)] / p[static_cast<size_t>(b)] : 0.0;
    }
    std::vector<double>& gp = gamma[static_cast<size_t>(t - 1)];
    gp.assign(static_cast<size_t>(n), 0.0);
#pragma omp parallel for schedule(static) if (cfg.exec == Exec::Parallel)
    for (int a = 0; a < n; ++a) {
      double fa = fprev[static_cast<size_t>(a)];
      if (fa <= 0.0) continue;
      int s = a < split ? 0 : 1;
      double acc = 0.0;
      if (z == 0) {
        for (int q = 0; q + a < n; ++q) {
          acc += K.within[s][static_cast<size_t>(q)] * r[static_cast<size_t>(a + q)];
        }
      } else {
        for (int q = 0; q < n; ++q) {
          int d = a + q;
          if (d >= n) d -= n;
          acc += K.folded[s][static_cast<size_t>(q)] * r[static_cast<size_t>(d)];
        }
        for (int q = n - a; q < n; ++q) {
          acc += K.within[s][static_cast<size_t>(q)] * r[static_cast<size_t>(a + q - n)];
        }
      }
      gp[static_cast<size_t>(a)] = fa * acc;
    }
    double total = 0.0;
    for (double v : gp) total += v;
    if (!(total > 0.0)) {
      throw InvariantError("smooth_series: zero smoothed mass at day " + std::to_string(t));
    }
    for (double& v : gp) v /= total;
  }

  std::vector<PhaseDensity> result;
  result.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    result.push_back(density_from_masses(gamma[static_cast<size_t>(t)], grid,
                                         out.filtering[static_cast<size_t>(t)].cycle_count));
  }
  return result;
}

namespace reference {

PredictiveJoint predict_step(const PhaseDensity& filtering, const ModelParams& params,
                             const FilterConfig& config) {
  const PhaseGrid& grid = filtering.grid;
  const int n = grid.n_bins;
  const double delta = grid.delta();
  std::vector<double> m(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) m[static_cast<size_t>(a)] = filtering.mass(a);
  SourceRange range = active_sources(m, config.source_mass_cutoff);

  PredictiveJoint out;
  out.grid = grid;
  out.cycle_count = filtering.cycle_count;
  out.uncrossed.assign(static_cast<size_t>(n), 0.0);
  out.crossed.assign(static_cast<size_t>(n), 0.0);

  for (int d = 0; d < n; ++d) {
    double ud = 0.0, cd = 0.0;
    for (int a = range.lo; a <= range.hi; ++a) {
      const StageParams& sp = params.increment_params(stage_of(grid.center(a)));
      auto window_mass = [&](long q) {
        double lo = q == 0 ? 0.0 : (static_cast<double>(q) - 0.5) * delta;
        double hi = (static_cast<double>(q) + 0.5) * delta;
        return gamma_cdf(hi, sp.alpha, sp.beta) - gamma_cdf(lo, sp.alpha, sp.beta);
      };
      // Folded wrap mass at residue q, same truncation contract as the kernel.
      auto folded_mass = [&](long q) {
        double acc = 0.0;
        for (long cyc = 1;; ++cyc) {
          double start = (static_cast<double>(cyc) * n - 0.5) * delta;
          if (gamma_sf(start, sp.alpha, sp.beta) < config.kernel_tail) break;
          acc += window_mass(cyc * n + q);
        }
        return acc;
      };
      long q = d - a;
      if (q >= 0) {
        ud += m[static_cast<size_t>(a)] * window_mass(q);
        cd += m[static_cast<size_t>(a)] * folded_mass(q);
      } else {
        q += n;
        cd += m[static_cast<size_t>(a)] * (window_mass(q) + folded_mass(q));
      }
    }
    out.uncrossed[static_cast<size_t>(d)] = ud;
    out.crossed[static_cast<size_t>(d)] = cd;
  }
  return out;
}

FilterOutput filter_series(const CycleSeries& series, const ModelParams& params,
                           const InitialCondition& init, const FilterConfig& config) {
  params.validate();
  PhaseGrid grid(config.n_bins);
  const int T = series.length();
  if (T == 0) throw std::invalid_argument("filter: empty series");

  FilterOutput out;
  out.series = series;
  out.init = init;
  out.config = config;

  PhaseDensity cur = init.density;
  for (int t = 0; t < T; ++t) {
    std::optional<double> y;
    if (series.has_y(t)) y = series.y[static_cast<size_t>(t)];
    int z = series.z[static_cast<size_t>(t)];
    double inc;
    if (t == 0 && init.mode == InitialCondition::Mode::StatePrior) {
      std::vector<double> mass(static_cast<size_t>(grid.n_bins));
      double total = 0.0;
      for (int b = 0; b < grid.n_bins; ++b) {
        double g = 1.0;
        if (y.has_value()) {
          double f = grid.center(b);
          g = normal_pdf(*y, params.obs_mean(f), params.obs_sigma(f));
        }
        mass[static_cast<size_t>(b)] = cur.mass(b) * g;
        total += mass[static_cast<size_t>(b)];
      }
      if (!(total > 0.0)) throw ZeroLikelihoodError(1, "zero likelihood on day 1");
      out.predictive.push_back(cur);
      cur = density_from_masses(mass, grid, cur.cycle_count + z);
      inc = std::log(total);
    } else {
      PredictiveJoint pj = reference::predict_step(cur, params, config);
      out.predictive.push_back(pj.marginal());
      try {
        UpdateResult ur = update_step(pj, y, z, params);
        cur = ur.posterior;
        inc = ur.log_increment;
      } catch (const ZeroLikelihoodError&) {
        throw ZeroLikelihoodError(t + 1, "zero likelihood on day " + std::to_string(t + 1));
      }
    }
    out.filtering.push_back(cur);
    out.log_increments.push_back(inc);
    out.total_loglik += inc;
  }
  return out;
}

}  // namespace reference

}  // namespace mcycle
