#include "mcycle/onset.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "mcycle/errors.hpp"
#include "mcycle/gamma.hpp"

namespace mcycle {

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// Interval represented by lattice point n.
inline void point_interval(int n, double delta, double& lo, double& hi) {
  lo = n == 0 ? 0.0 : (n - 0.5) * delta;
  hi = (n + 0.5) * delta;
}

// Fraction of point n's interval lying inside (a, b).
double overlap_weight(int n, double a, double b, double delta) {
  double lo, hi;
  point_interval(n, delta, lo, hi);
  double ol = std::min(hi, b) - std::max(lo, a);
  if (ol <= 0.0) return 0.0;
  return std::min(1.0, ol / (hi - lo));
}

// Fraction of point n's interval lying at or beyond c.
double tail_weight(int n, double c, double delta) {
  double lo, hi;
  point_interval(n, delta, lo, hi);
  double ol = hi - std::max(lo, c);
  if (ol <= 0.0) return 0.0;
  return std::min(1.0, ol / (hi - lo));
}

double window_sum(const std::vector<double>& v, double a, double b, double delta) {
  double s = 0.0;
  int lo = std::max(0, static_cast<int>(std::floor(a / delta - 0.5)));
  int hi = std::min(static_cast<int>(v.size()) - 1, static_cast<int>(std::floor(b / delta + 0.5)));
  for (int n = lo; n <= hi; ++n) s += v[static_cast<size_t>(n)] * overlap_weight(n, a, b, delta);
  return s;
}

double tail_sum(const std::vector<double>& v, double c, double delta) {
  double s = 0.0;
  int lo = std::max(0, static_cast<int>(std::floor(c / delta - 0.5)));
  for (int n = lo; n < static_cast<int>(v.size()); ++n) {
    s += v[static_cast<size_t>(n)] * tail_weight(n, c, delta);
  }
  return s;
}

// Truncates to (a, b) and renormalizes. Returns the window mass; when it is
// below 1e-12 the caller treats the whole term as zero instead of dividing.
double truncate_renorm(std::vector<double>& v, double a, double b, double delta) {
  double mass = 0.0;
  for (int n = 0; n < static_cast<int>(v.size()); ++n) {
    double w = overlap_weight(n, a, b, delta);
    v[static_cast<size_t>(n)] *= w;
    mass += v[static_cast<size_t>(n)];
  }
  if (mass < 1e-12) return 0.0;
  for (double& x : v) x /= mass;
  return mass;
}

int round_to_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

struct OnsetEngine::FftCache {
  struct SizePlans {
    int nfft = 0;
    double* in = nullptr;
    fftw_complex* freq_a = nullptr;
    fftw_complex* freq_b = nullptr;
    fftw_plan fwd{};
    fftw_plan inv{};
  };
  std::map<int, SizePlans> by_size;

  SizePlans& get(int nfft) {
    auto it = by_size.find(nfft);
    if (it != by_size.end()) return it->second;
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    SizePlans p;
    p.nfft = nfft;
    p.in = fftw_alloc_real(static_cast<size_t>(nfft));
    p.freq_a = fftw_alloc_complex(static_cast<size_t>(nfft / 2 + 1));
    p.freq_b = fftw_alloc_complex(static_cast<size_t>(nfft / 2 + 1));
    p.fwd = fftw_plan_dft_r2c_1d(nfft, p.in, p.freq_a, FFTW_ESTIMATE);
    p.inv = fftw_plan_dft_c2r_1d(nfft, p.freq_a, p.in, FFTW_ESTIMATE);
    return by_size.emplace(nfft, p).first->second;
  }

  ~FftCache() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    for (auto& kv : by_size) {
      fftw_destroy_plan(kv.second.fwd);
      fftw_destroy_plan(kv.second.inv);
      fftw_free(kv.second.in);
      fftw_free(kv.second.freq_a);
      fftw_free(kv.second.freq_b);
    }
  }
};

OnsetEngineConfig OnsetEngineConfig::aligned_to(PhaseGrid grid, double support, int k_max) {
  OnsetEngineConfig c;
  c.support = support;
  c.grid_points = static_cast<int>(std::lround(support * 2.0 * grid.n_bins));
  c.k_max = k_max;
  return c;
}

OnsetEngine::OnsetEngine(const ModelParams& params, OnsetEngineConfig config)
    : params_(params), config_(config), fft_(new FftCache) {
  params_.validate();
  if (config_.grid_points < 16 || config_.support <= 0.0 || config_.k_max < 1) {
    throw std::invalid_argument("OnsetEngine: bad config");
  }
  delta_ = config_.support / config_.grid_points;
  double hw = 0.5 / delta_;
  half_window_ = static_cast<int>(std::lround(hw));
  if (std::fabs(hw - half_window_) > 1e-9 || half_window_ < 2) {
    throw std::invalid_argument("OnsetEngine: lattice step must divide half a cycle");
  }
  single_regime_ = params_.single_increment_regime();
  build_tables();
}

OnsetEngine::~OnsetEngine() = default;

std::vector<double> OnsetEngine::gamma_masses(double shape, double rate) const {
  std::vector<double> m(static_cast<size_t>(config_.grid_points), 0.0);
  double prev = 0.0;  // G(0)
  for (int n = 0; n < config_.grid_points; ++n) {
    double hi = gamma_cdf((n + 0.5) * delta_, shape, rate);
    m[static_cast<size_t>(n)] = hi - prev;
    prev = hi;
    if (n > 0 && 1.0 - prev < 1e-15) break;  // negligible tail beyond here
  }
  return m;
}

std::vector<double> OnsetEngine::convolve(const std::vector<double>& a,
                                          const std::vector<double>& b) {
  int la = static_cast<int>(a.size());
  int lb = static_cast<int>(b.size());
  if (la == 0 || lb == 0) return {};
  int full = la + lb - 1;
  int nfft = round_to_pow2(full);
  auto& p = fft_->get(nfft);

  std::fill(p.in, p.in + nfft, 0.0);
  std::copy(a.begin(), a.end(), p.in);
  fftw_execute_dft_r2c(p.fwd, p.in, p.freq_a);
  std::fill(p.in, p.in + nfft, 0.0);
  std::copy(b.begin(), b.end(), p.in);
  fftw_execute_dft_r2c(p.fwd, p.in, p.freq_b);

  int nc = nfft / 2 + 1;
  for (int i = 0; i < nc; ++i) {
    double re = p.freq_a[i][0] * p.freq_b[i][0] - p.freq_a[i][1] * p.freq_b[i][1];
    double im = p.freq_a[i][0] * p.freq_b[i][1] + p.freq_a[i][1] * p.freq_b[i][0];
    p.freq_a[i][0] = re;
    p.freq_a[i][1] = im;
  }
  fftw_execute_dft_c2r(p.inv, p.freq_a, p.in);

  int out_len = std::min(full, config_.grid_points);
  std::vector<double> out(static_cast<size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    double v = p.in[i] / nfft;
    out[static_cast<size_t>(i)] = v < 0.0 ? 0.0 : v;  // FFT ringing guard
  }
  return out;
}

void OnsetEngine::build_tables() {
  const int K = config_.k_max;
  const int W = half_window_;
  const StageParams& s2 = single_regime_ ? params_.stage1 : params_.stage2;
  const StageParams& s1 = params_.stage1;

  // kappa_[m][l]: distances up to half a cycle suffice in the fully-explicit
  // case (the second stage spans at most 0.5); single-regime variants bridge
  // up to a full cycle.
  int l_max = single_regime_ ? 2 * W : W;
  kappa_.assign(static_cast<size_t>(K), std::vector<double>(static_cast<size_t>(l_max + 1), 0.0));
  std::vector<double> p_cur(static_cast<size_t>(l_max + 1), 1.0);  // G(.; 0) == 1
  std::vector<double> p_next(static_cast<size_t>(l_max + 1), 0.0);
  for (int m = 0; m < K; ++m) {
    for (int l = 0; l <= l_max; ++l) {
      p_next[static_cast<size_t>(l)] =
          l == 0 ? 0.0 : gamma_cdf(l * delta_, (m + 1) * s2.alpha, s2.beta);
      kappa_[static_cast<size_t>(m)][static_cast<size_t>(l)] =
          clamp01(p_cur[static_cast<size_t>(l)] - p_next[static_cast<size_t>(l)]);
    }
    // At zero distance the next step always bridges: kappa_0(0) = 1.
    kappa_[static_cast<size_t>(m)][0] = m == 0 ? 1.0 : 0.0;
    std::swap(p_cur, p_next);
  }

  if (single_regime_) return;

  g1_mass_ = gamma_masses(s1.alpha, s1.beta);
  g1_mass_.resize(static_cast<size_t>(2 * W + 1), 0.0);

  gbar1_.assign(static_cast<size_t>(2 * W + 1), 0.0);
  for (int c = 0; c <= 2 * W; ++c) {
    gbar1_[static_cast<size_t>(c)] = gamma_sf(c * delta_, s1.alpha, s1.beta);
  }

  // kappa at half-lattice distances: the second-stage bridge probability for
  // an exit landing in the middle of an edge-aligned window cell.
  kappa_half_.assign(static_cast<size_t>(std::max(0, K - 1)),
                     std::vector<double>(static_cast<size_t>(W), 0.0));
  {
    std::vector<double> p_cur(static_cast<size_t>(W), 1.0), p_next(static_cast<size_t>(W));
    for (int m = 0; m + 1 < K; ++m) {
      for (int u = 0; u < W; ++u) {
        double c = (u + 0.5) * delta_;
        p_next[static_cast<size_t>(u)] = gamma_cdf(c, (m + 1) * s2.alpha, s2.beta);
        kappa_half_[static_cast<size_t>(m)][static_cast<size_t>(u)] =
            clamp01(p_cur[static_cast<size_t>(u)] - p_next[static_cast<size_t>(u)]);
      }
      std::swap(p_cur, p_next);
    }
  }

  u_mass_.assign(static_cast<size_t>(K + 1), {});
  u_mass_[1] = {1.0};  // j = 1: no first-stage accumulation yet
  for (int j = 2; j <= K; ++j) {
    std::vector<double> m = gamma_masses((j - 1) * s1.alpha, s1.beta);
    m.resize(static_cast<size_t>(W + 1), 0.0);
    u_mass_[static_cast<size_t>(j)] = std::move(m);
  }

  // lam_[m][i]: distance to onset c = (W + i) * delta_; one first-stage step
  // lands inside the second-stage window (c - 0.5, c) and m+1 further steps
  // bridge the rest. The window is cut into edge-aligned cells with exact
  // first-stage cdf masses and the bridge evaluated at cell midpoints, which
  // keeps the sum over m exactly equal to the window mass (no leakage at the
  // truncation boundaries, where the increment density can be singular).
  e1_.assign(static_cast<size_t>(2 * W + 1), 0.0);
  for (int n = 0; n <= 2 * W; ++n) {
    e1_[static_cast<size_t>(n)] = gamma_cdf(n * delta_, s1.alpha, s1.beta);
  }
  lam_.assign(static_cast<size_t>(std::max(0, K - 1)),
              std::vector<double>(static_cast<size_t>(W + 1), 0.0));
  for (int m = 0; m + 1 < K; ++m) {
    const std::vector<double>& kh = kappa_half_[static_cast<size_t>(m)];
    for (int i = 0; i <= W; ++i) {
      int cc = W + i;
      double acc = 0.0;
      for (int u = 0; u < W; ++u) {
        double cell = e1_[static_cast<size_t>(cc - u)] - e1_[static_cast<size_t>(cc - u - 1)];
        acc += cell * kh[static_cast<size_t>(u)];
      }
      lam_[static_cast<size_t>(m)][static_cast<size_t>(i)] = acc;
    }
  }
}

std::vector<double> OnsetEngine::stage1_occupation(int j, double d1) const {
  const StageParams& s1 = params_.stage1;
  if (j == 1) return {1.0};
  const std::vector<double>& um = u_mass_[static_cast<size_t>(j)];
  int n_hi = static_cast<int>(std::floor(d1 / delta_ + 0.5 - 1e-12));
  n_hi = std::min(n_hi, static_cast<int>(um.size()) - 1);
  std::vector<double> q(static_cast<size_t>(n_hi + 1), 0.0);
  double shape = (j - 1) * s1.alpha;
  for (int n = 0; n <= n_hi; ++n) {
    double lo, hi;
    point_interval(n, delta_, lo, hi);
    if (hi <= d1) {
      q[static_cast<size_t>(n)] = um[static_cast<size_t>(n)];
    } else {
      // Boundary point: exact mass of the clipped interval [lo, d1).
      q[static_cast<size_t>(n)] = std::max(
          0.0, gamma_cdf(d1, shape, s1.beta) - gamma_cdf(lo, shape, s1.beta));
    }
  }
  return q;
}

std::vector<double> OnsetEngine::f_vector_aligned(double frac, int k_max) const {
  const int W = half_window_;
  double d2 = 1.0 - frac;
  int L2 = static_cast<int>(std::lround(d2 / delta_));
  std::vector<double> f(static_cast<size_t>(k_max), 0.0);

  if (single_regime_ || frac >= 0.5) {
    for (int k = 1; k <= k_max; ++k) {
      f[static_cast<size_t>(k - 1)] = kappa_[static_cast<size_t>(k - 1)][static_cast<size_t>(L2)];
    }
    return f;
  }

  double d1 = 0.5 - frac;
  const int L1 = L2 - W;
  const StageParams& s1 = params_.stage1;
  double prev_occ = 1.0;  // P(still in stage 1 after j-1 steps)
  for (int j = 1; j <= k_max; ++j) {
    std::vector<double> q = stage1_occupation(j, d1);
    double qmass = 0.0;
    for (double v : q) qmass += v;
    if (qmass < 1e-16) break;  // occupation mass shrinks monotonically in j
    int n_hi = static_cast<int>(q.size()) - 1;

    // The exact mass leaving stage 1 on day j telescopes against the next
    // day's occupation; rescale the quantized leave estimate onto it so the
    // lattice never double-counts the boundary cell.
    double next_occ = gamma_cdf(d1, j * s1.alpha, s1.beta);
    double exact_leave = std::max(0.0, prev_occ - next_occ);
    prev_occ = next_occ;
    double est_leave = 0.0;
    for (int n = 0; n <= n_hi; ++n) {
      // Survival past d2 plus exit into the second-stage window (d1, d2),
      // written exactly as the parts distributed over k below.
      est_leave += q[static_cast<size_t>(n)] *
                   (gbar1_[static_cast<size_t>(L2 - n)] + e1_[static_cast<size_t>(L2 - n)] -
                    e1_[static_cast<size_t>(L1 - n)]);
    }
    if (!(est_leave > 0.0)) continue;
    double rho = exact_leave / est_leave;
    for (double& v : q) v *= rho;

    {
      double acc = 0.0;
      for (int n = 0; n <= n_hi; ++n) {
        acc += q[static_cast<size_t>(n)] * gbar1_[static_cast<size_t>(L2 - n)];
      }
      f[static_cast<size_t>(j - 1)] += acc;
    }
    for (int k = j + 1; k <= k_max; ++k) {
      const std::vector<double>& lm = lam_[static_cast<size_t>(k - j - 1)];
      double acc = 0.0;
      for (int n = 0; n <= n_hi; ++n) {
        acc += q[static_cast<size_t>(n)] * lm[static_cast<size_t>(L2 - W - n)];
      }
      f[static_cast<size_t>(k - 1)] += acc;
    }
  }
  for (double& v : f) v = clamp01(v);
  return f;
}

std::vector<double> OnsetEngine::f_vector_general(double frac, int k_max) const {
  const StageParams& s1 = params_.stage1;
  const StageParams& s2 = single_regime_ ? params_.stage1 : params_.stage2;
  double d2 = 1.0 - frac;
  std::vector<double> f(static_cast<size_t>(k_max), 0.0);

  if (single_regime_ || frac >= 0.5) {
    double prev = 1.0;  // G(.; 0) == 1
    for (int k = 1; k <= k_max; ++k) {
      double next = gamma_cdf(d2, k * s2.alpha, s2.beta);
      f[static_cast<size_t>(k - 1)] = clamp01(prev - next);
      prev = next;
    }
    return f;
  }

  double d1 = 0.5 - frac;
  const int W = half_window_;
  int x_hi = static_cast<int>(std::floor(d1 / delta_ + 0.5 - 1e-12));

  // First-stage survival and cdf values on the theta-shifted lattice:
  // edge[n] = G1(d2 - n dx); sf[n] = 1 - edge[n] computed without cancellation.
  std::vector<double> edge(static_cast<size_t>(x_hi + W + 2));
  std::vector<double> sfth(static_cast<size_t>(x_hi + 1));
  for (int n = 0; n < static_cast<int>(edge.size()); ++n) {
    double c = d2 - n * delta_;
    edge[static_cast<size_t>(n)] = c <= 0.0 ? 0.0 : gamma_cdf(c, s1.alpha, s1.beta);
  }
  for (int x = 0; x <= x_hi; ++x) {
    sfth[static_cast<size_t>(x)] = gamma_sf(d2 - x * delta_, s1.alpha, s1.beta);
  }

  // corr[m][x]: one first-stage step from lattice offset x lands inside the
  // second-stage window and m+1 further steps bridge the rest. Same
  // edge-aligned cell construction as the precomputed aligned table.
  std::vector<std::vector<double>> corr(
      static_cast<size_t>(std::max(0, k_max - 1)),
      std::vector<double>(static_cast<size_t>(x_hi + 1), 0.0));
  for (int m = 0; m + 1 < k_max; ++m) {
    const std::vector<double>& kh = kappa_half_[static_cast<size_t>(m)];
    for (int x = 0; x <= x_hi; ++x) {
      double acc = 0.0;
      for (int u = 0; u < W; ++u) {
        double cell = edge[static_cast<size_t>(x + u)] - edge[static_cast<size_t>(x + u + 1)];
        acc += cell * kh[static_cast<size_t>(u)];
      }
      corr[static_cast<size_t>(m)][static_cast<size_t>(x)] = acc;
    }
  }

  double prev_occ = 1.0;
  for (int j = 1; j <= k_max; ++j) {
    std::vector<double> q = stage1_occupation(j, d1);
    double qmass = 0.0;
    for (double v : q) qmass += v;
    if (qmass < 1e-16) break;
    int q_hi = static_cast<int>(q.size()) - 1;

    // Rescale the quantized leave estimate onto the exact telescoped mass,
    // as in the aligned path.
    double next_occ = gamma_cdf(d1, j * s1.alpha, s1.beta);
    double exact_leave = std::max(0.0, prev_occ - next_occ);
    prev_occ = next_occ;
    double est_leave = 0.0;
    for (int x = 0; x <= q_hi; ++x) {
      est_leave += q[static_cast<size_t>(x)] *
                   (sfth[static_cast<size_t>(x)] + edge[static_cast<size_t>(x)] -
                    edge[static_cast<size_t>(x + W)]);
    }
    if (!(est_leave > 0.0)) continue;
    double rho = exact_leave / est_leave;
    for (double& v : q) v *= rho;

    {
      double acc = 0.0;
      for (int x = 0; x <= q_hi; ++x) {
        acc += q[static_cast<size_t>(x)] * sfth[static_cast<size_t>(x)];
      }
      f[static_cast<size_t>(j - 1)] += acc;
    }
    for (int k = j + 1; k <= k_max; ++k) {
      const std::vector<double>& cm = corr[static_cast<size_t>(k - j - 1)];
      double acc = 0.0;
      for (int x = 0; x <= q_hi; ++x) acc += q[static_cast<size_t>(x)] * cm[static_cast<size_t>(x)];
      f[static_cast<size_t>(k - 1)] += acc;
    }
  }
  for (double& v : f) v = clamp01(v);
  return f;
}

std::vector<double> OnsetEngine::f_vector(Phase theta, int k_max) const {
  if (k_max < 1 || k_max > config_.k_max) {
    throw std::invalid_argument("OnsetEngine::f_vector: k_max out of engine range");
  }
  double frac = frac_part(theta.theta);
  double d2 = 1.0 - frac;
  double ratio = d2 / delta_;
  bool aligned = std::fabs(ratio - std::lround(ratio)) < 1e-9;
  return aligned ? f_vector_aligned(frac, k_max) : f_vector_general(frac, k_max);
}

double OnsetEngine::f(int k, Phase theta) const {
  if (k < 1) throw std::invalid_argument("OnsetEngine::f: require k >= 1");
  if (!single_regime_ && stage_of(theta) == 2) return f_stage2(k, theta);
  if (single_regime_) {
    double d2 = 1.0 - frac_part(theta.theta);
    const StageParams& sp = params_.stage1;
    double prev = k == 1 ? 1.0 : gamma_cdf(d2, (k - 1) * sp.alpha, sp.beta);
    return clamp01(prev - gamma_cdf(d2, k * sp.alpha, sp.beta));
  }
  return f_stage1(k, theta);
}

double OnsetEngine::f_stage2(int k, Phase theta) const {
  if (stage_of(theta) != 2) {
    throw std::domain_error("f_stage2: theta must lie in the second stage");
  }
  if (k < 1) throw std::invalid_argument("f_stage2: require k >= 1");
  const StageParams& sp = single_regime_ ? params_.stage1 : params_.stage2;
  double d2 = 1.0 - frac_part(theta.theta);
  double prev = k == 1 ? 1.0 : gamma_cdf(d2, (k - 1) * sp.alpha, sp.beta);
  return clamp01(prev - gamma_cdf(d2, k * sp.alpha, sp.beta));
}

double OnsetEngine::f_stage1(int k, Phase theta) const {
  if (stage_of(theta) != 1) {
    throw std::domain_error("f_stage1: theta must lie in the first stage");
  }
  if (single_regime_) {
    throw std::domain_error("f_stage1: engine variant has no stage switch");
  }
  return f_vector(theta, k)[static_cast<size_t>(k - 1)];
}

double OnsetEngine::phi(int j, int k, Phase theta) const {
  if (stage_of(theta) != 1) throw std::domain_error("phi: theta must lie in the first stage");
  if (single_regime_) throw std::domain_error("phi: engine variant has no stage switch");
  if (j < 1 || k < j) throw std::invalid_argument("phi: require 1 <= j <= k");
  if (k > config_.k_max) throw std::invalid_argument("phi: k beyond engine range");

  const StageParams& s1 = params_.stage1;
  const StageParams& s2 = params_.stage2;
  double frac = frac_part(theta.theta);
  double d1 = 0.5 - frac;
  double d2 = 1.0 - frac;

  std::vector<double> q = stage1_occupation(j, d1);
  int q_hi = static_cast<int>(q.size()) - 1;
  const int W = half_window_;
  std::vector<double> edge(static_cast<size_t>(q_hi + W + 2));
  for (int n = 0; n < static_cast<int>(edge.size()); ++n) {
    double c = d2 - n * delta_;
    edge[static_cast<size_t>(n)] = c <= 0.0 ? 0.0 : gamma_cdf(c, s1.alpha, s1.beta);
  }
  std::vector<double> sfth(static_cast<size_t>(q_hi + 1));
  for (int x = 0; x <= q_hi; ++x) {
    sfth[static_cast<size_t>(x)] = gamma_sf(d2 - x * delta_, s1.alpha, s1.beta);
  }
  // Telescoped-leave rescale, identical to the f_vector paths.
  double prev_occ = j == 1 ? 1.0 : gamma_cdf(d1, (j - 1) * s1.alpha, s1.beta);
  double exact_leave = std::max(0.0, prev_occ - gamma_cdf(d1, j * s1.alpha, s1.beta));
  double est_leave = 0.0;
  for (int x = 0; x <= q_hi; ++x) {
    est_leave += q[static_cast<size_t>(x)] *
                 (sfth[static_cast<size_t>(x)] + edge[static_cast<size_t>(x)] -
                  edge[static_cast<size_t>(x + W)]);
  }
  if (!(est_leave > 0.0)) return 0.0;
  double rho = exact_leave / est_leave;

  if (k == j) {
    double acc = 0.0;
    for (int x = 0; x <= q_hi; ++x) {
      acc += q[static_cast<size_t>(x)] * sfth[static_cast<size_t>(x)];
    }
    return clamp01(rho * acc);
  }
  const std::vector<double>& kh = kappa_half_[static_cast<size_t>(k - j - 1)];
  double acc = 0.0;
  for (int x = 0; x <= q_hi; ++x) {
    double inner = 0.0;
    for (int u = 0; u < W; ++u) {
      double cell = edge[static_cast<size_t>(x + u)] - edge[static_cast<size_t>(x + u + 1)];
      inner += cell * kh[static_cast<size_t>(u)];
    }
    acc += q[static_cast<size_t>(x)] * inner;
  }
  return clamp01(rho * acc);
}

double OnsetEngine::phi_reference(int j, int k, Phase theta) {
  if (stage_of(theta) != 1) throw std::domain_error("phi_reference: theta must lie in stage 1");
  if (single_regime_) throw std::domain_error("phi_reference: variant has no stage switch");
  if (j < 1 || k < j) throw std::invalid_argument("phi_reference: require 1 <= j <= k");

  const StageParams& s1 = params_.stage1;
  const StageParams& s2 = params_.stage2;
  double frac = frac_part(theta.theta);
  double d1 = 0.5 - frac;
  double d2 = 1.0 - frac;

  if (j == 1) {
    if (k == 1) return gamma_sf(d2, s1.alpha, s1.beta);
    double first = gamma_cdf(d2, s1.alpha, s1.beta) - gamma_cdf(d1, s1.alpha, s1.beta);
    std::vector<double> piv = gamma_masses(s1.alpha, s1.beta);
    double vmass = truncate_renorm(piv, d1, d2, delta_);
    if (vmass == 0.0) return 0.0;
    if (k == 2) {
      return clamp01(first * tail_sum(convolve(piv, gamma_masses(s2.alpha, s2.beta)), d2, delta_));
    }
    std::vector<double> piw = convolve(piv, gamma_masses((k - 2) * s2.alpha, s2.beta));
    double second = window_sum(piw, d1, d2, delta_);
    double wmass = truncate_renorm(piw, d1, d2, delta_);
    if (wmass == 0.0) return 0.0;
    double third = tail_sum(convolve(piw, gamma_masses(s2.alpha, s2.beta)), d2, delta_);
    return clamp01(first * second * third);
  }

  double pa = gamma_cdf(d1, (j - 1) * s1.alpha, s1.beta);
  std::vector<double> piu = gamma_masses((j - 1) * s1.alpha, s1.beta);
  double umass = truncate_renorm(piu, 0.0, d1, delta_);
  if (umass == 0.0) return 0.0;
  std::vector<double> piv = convolve(piu, gamma_masses(s1.alpha, s1.beta));
  if (k == j) return clamp01(pa * tail_sum(piv, d2, delta_));
  double second = window_sum(piv, d1, d2, delta_);
  double vmass = truncate_renorm(piv, d1, d2, delta_);
  if (vmass == 0.0) return 0.0;
  if (k == j + 1) {
    return clamp01(pa * second *
                   tail_sum(convolve(piv, gamma_masses(s2.alpha, s2.beta)), d2, delta_));
  }
  std::vector<double> piw = convolve(piv, gamma_masses((k - j - 1) * s2.alpha, s2.beta));
  double third = window_sum(piw, d1, d2, delta_);
  double wmass = truncate_renorm(piw, d1, d2, delta_);
  if (wmass == 0.0) return 0.0;
  double fourth = tail_sum(convolve(piw, gamma_masses(s2.alpha, s2.beta)), d2, delta_);
  return clamp01(pa * second * third * fourth);
}

double OnsetEngine::f_stage1_reference(int k, Phase theta) {
  double acc = 0.0;
  for (int j = 1; j <= k; ++j) acc += phi_reference(j, k, theta);
  return clamp01(acc);
}

OnsetDistribution OnsetEngine::onset_distribution(const PhaseDensity& filtering, int k_max) const {
  if (k_max < 1 || k_max > config_.k_max) {
    throw std::invalid_argument("onset_distribution: k_max out of engine range");
  }
  const PhaseGrid& grid = filtering.grid;
  const int n = grid.n_bins;
  double total = filtering.total_mass();
  if (!(total > 0.0)) throw InvariantError("onset_distribution: empty filtering density");

  std::vector<int> active;
  double skipped = 0.0;
  for (int b = 0; b < n; ++b) {
    double w = filtering.mass(b) / total;
    if (w > 1e-15) {
      active.push_back(b);
    } else {
      skipped += w;
    }
  }
  std::vector<std::vector<double>> per_bin(active.size());
#pragma omp parallel for schedule(dynamic) if (config_.exec == Exec::Parallel)
  for (int i = 0; i < static_cast<int>(active.size()); ++i) {
    per_bin[static_cast<size_t>(i)] = f_vector(Phase(grid.center(active[static_cast<size_t>(i)])), k_max);
  }

  OnsetDistribution dist;
  dist.h.assign(static_cast<size_t>(k_max), 0.0);
  dist.tail = skipped;
  for (size_t i = 0; i < active.size(); ++i) {
    double w = filtering.mass(active[i]) / total;
    double sum_f = 0.0;
    for (int k = 0; k < k_max; ++k) {
      dist.h[static_cast<size_t>(k)] += w * per_bin[i][static_cast<size_t>(k)];
      sum_f += per_bin[i][static_cast<size_t>(k)];
    }
    dist.tail += w * std::max(0.0, 1.0 - sum_f);
  }
  return dist;
}

int point_predict(const OnsetDistribution& dist) {
  if (dist.h.empty()) throw std::invalid_argument("point_predict: empty distribution");
  int best = 1;
  double best_p = dist.h[0];
  for (int k = 2; k <= dist.k_max(); ++k) {
    if (dist.h[static_cast<size_t>(k - 1)] > best_p) {
      best_p = dist.h[static_cast<size_t>(k - 1)];
      best = k;
    }
  }
  return best;
}

OnsetDistribution onset_distribution(const PhaseDensity& filtering, const ModelParams& params,
                                     const OnsetEngine& engine, int k_max) {
  const ModelParams& ep = engine.params();
  bool same = ep.variant == params.variant &&
              ep.stage1.alpha == params.stage1.alpha && ep.stage1.beta == params.stage1.beta &&
              ep.stage2.alpha == params.stage2.alpha && ep.stage2.beta == params.stage2.beta;
  if (!same) {
    throw std::invalid_argument("onset_distribution: params do not match engine");
  }
  return engine.onset_distribution(filtering, k_max);
}

}  // namespace mcycle
