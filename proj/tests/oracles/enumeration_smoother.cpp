#include "oracles/enumeration_smoother.hpp"

#include <cmath>
#include <stdexcept>

#include "mcycle/errors.hpp"
#include "mcycle/gamma.hpp"

namespace mcycle::oracle {

EnumerationResult enumeration_forward_backward(const CycleSeries& series,
                                               const ModelParams& params,
                                               const InitialCondition& init, int n_bins,
                                               int n_cycles) {
  const int T = series.length();
  const int n = n_bins * n_cycles;  // absolute bins
  const double delta = 1.0 / n_bins;

  auto frac_center = [&](int b) { return ((b % n_bins) + 0.5) * delta; };
  auto cycle_of = [&](int b) { return b / n_bins; };

  // Dense transition masses between absolute bins (point source at center).
  std::vector<std::vector<double>> trans(static_cast<size_t>(n),
                                         std::vector<double>(static_cast<size_t>(n), 0.0));
  for (int a = 0; a < n; ++a) {
    const StageParams& sp = params.increment_params(frac_center(a) < 0.5 ? 1 : 2);
    for (int b = a; b < n; ++b) {
      long q = b - a;
      double lo = q == 0 ? 0.0 : (q - 0.5) * delta;
      double hi = (q + 0.5) * delta;
      trans[static_cast<size_t>(a)][static_cast<size_t>(b)] =
          gamma_cdf(hi, sp.alpha, sp.beta) - gamma_cdf(lo, sp.alpha, sp.beta);
    }
  }

  auto obs_weight = [&](int t, int b) {
    if (!series.has_y(t)) return 1.0;
    double f = frac_center(b);
    return normal_pdf(series.y[static_cast<size_t>(t)], params.obs_mean(f), params.obs_sigma(f));
  };

  // Forward pass (normalized alphas, per-day scaling factors).
  EnumerationResult out;
  std::vector<std::vector<double>> alpha(static_cast<size_t>(T),
                                         std::vector<double>(static_cast<size_t>(n), 0.0));
  std::vector<double> scale(static_cast<size_t>(T), 0.0);

  for (int t = 0; t < T; ++t) {
    int z = series.z[static_cast<size_t>(t)];
    std::vector<double>& at = alpha[static_cast<size_t>(t)];
    if (t == 0 && init.mode == InitialCondition::Mode::StatePrior) {
      for (int b = 0; b < n_bins; ++b) {
        at[static_cast<size_t>(b)] = init.density.mass(b) * obs_weight(0, b);
      }
    } else {
      const std::vector<double>* prev;
      std::vector<double> flow(static_cast<size_t>(n), 0.0);
      if (t == 0) {
        for (int b = 0; b < n_bins; ++b) flow[static_cast<size_t>(b)] = init.density.mass(b);
        prev = &flow;
      } else {
        prev = &alpha[static_cast<size_t>(t - 1)];
      }
      for (int b = 0; b < n; ++b) {
        double acc = 0.0;
        for (int a = 0; a <= b; ++a) {
          bool crossed = cycle_of(b) > cycle_of(a);
          if ((z == 1) != crossed) continue;
          acc += (*prev)[static_cast<size_t>(a)] * trans[static_cast<size_t>(a)][static_cast<size_t>(b)];
        }
        at[static_cast<size_t>(b)] = acc * obs_weight(t, b);
      }
    }
    double total = 0.0;
    for (double v : at) total += v;
    if (!(total > 0.0)) {
      throw ZeroLikelihoodError(t + 1, "enumeration oracle: zero mass");
    }
    for (double& v : at) v /= total;
    scale[static_cast<size_t>(t)] = total;
    out.loglik += std::log(total);
  }

  // Backward pass.
  std::vector<std::vector<double>> beta(static_cast<size_t>(T),
                                        std::vector<double>(static_cast<size_t>(n), 0.0));
  for (int b = 0; b < n; ++b) beta[static_cast<size_t>(T - 1)][static_cast<size_t>(b)] = 1.0;
  for (int t = T - 2; t >= 0; --t) {
    int z = series.z[static_cast<size_t>(t + 1)];
    for (int a = 0; a < n; ++a) {
      double acc = 0.0;
      for (int b = a; b < n; ++b) {
        bool crossed = cycle_of(b) > cycle_of(a);
        if ((z == 1) != crossed) continue;
        acc += trans[static_cast<size_t>(a)][static_cast<size_t>(b)] * obs_weight(t + 1, b) *
               beta[static_cast<size_t>(t + 1)][static_cast<size_t>(b)];
      }
      beta[static_cast<size_t>(t)][static_cast<size_t>(a)] = acc / scale[static_cast<size_t>(t + 1)];
    }
  }

  out.filtered.assign(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(n_bins), 0.0));
  out.smoothed.assign(static_cast<size_t>(T), std::vector<double>(static_cast<size_t>(n_bins), 0.0));
  for (int t = 0; t < T; ++t) {
    double total = 0.0;
    std::vector<double> gamma(static_cast<size_t>(n));
    for (int b = 0; b < n; ++b) {
      gamma[static_cast<size_t>(b)] = alpha[static_cast<size_t>(t)][static_cast<size_t>(b)] *
                                      beta[static_cast<size_t>(t)][static_cast<size_t>(b)];
      total += gamma[static_cast<size_t>(b)];
    }
    for (int b = 0; b < n; ++b) {
      out.filtered[static_cast<size_t>(t)][static_cast<size_t>(b % n_bins)] +=
          alpha[static_cast<size_t>(t)][static_cast<size_t>(b)];
      out.smoothed[static_cast<size_t>(t)][static_cast<size_t>(b % n_bins)] +=
          gamma[static_cast<size_t>(b)] / total;
    }
  }
  return out;
}

}  // namespace mcycle::oracle
