#include "mcycle/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcycle {

namespace {

struct Simplex {
  std::vector<std::vector<double>> x;
  std::vector<double> fx;

  void sort() {
    std::vector<size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return fx[a] < fx[b]; });
    std::vector<std::vector<double>> nx(x.size());
    std::vector<double> nf(x.size());
    for (size_t i = 0; i < idx.size(); ++i) {
      nx[i] = std::move(x[idx[i]]);
      nf[i] = fx[idx[i]];
    }
    x = std::move(nx);
    fx = std::move(nf);
  }
};

}  // namespace

NelderMeadResult nelder_mead(const Objective& f, std::vector<double> x0,
                             const NelderMeadOptions& opt) {
  const size_t d = x0.size();
  if (d == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");

  NelderMeadResult res;
  res.n_evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++res.n_evals;
    return f(x);
  };

  std::vector<double> best_x = x0;
  double best_f = eval(x0);

  double step = opt.init_step;
  for (int round = 0; round <= opt.max_restarts; ++round) {
    Simplex s;
    s.x.push_back(best_x);
    s.fx.push_back(best_f);
    for (size_t i = 0; i < d; ++i) {
      std::vector<double> v = best_x;
      v[i] += step;
      s.x.push_back(v);
      s.fx.push_back(eval(v));
      if (res.n_evals >= opt.max_evals) break;
    }
    while (s.x.size() < d + 1) {  // budget ran out mid-build
      s.x.push_back(best_x);
      s.fx.push_back(best_f);
    }
    s.sort();

    while (res.n_evals < opt.max_evals) {
      if (s.fx[d] - s.fx[0] < opt.tol) break;
      // centroid of all but the worst
      std::vector<double> c(d, 0.0);
      for (size_t i = 0; i < d; ++i) {
        for (size_t j = 0; j < d; ++j) c[j] += s.x[i][j];
      }
      for (size_t j = 0; j < d; ++j) c[j] /= static_cast<double>(d);

      auto blend = [&](double t) {
        std::vector<double> v(d);
        for (size_t j = 0; j < d; ++j) v[j] = c[j] + t * (s.x[d][j] - c[j]);
        return v;
      };
      std::vector<double> xr = blend(-1.0);
      double fr = eval(xr);
      if (fr < s.fx[0]) {
        std::vector<double> xe = blend(-2.0);
        double fe = eval(xe);
        if (fe < fr) {
          s.x[d] = std::move(xe);
          s.fx[d] = fe;
        } else {
          s.x[d] = std::move(xr);
          s.fx[d] = fr;
        }
      } else if (fr < s.fx[d - 1]) {
        s.x[d] = std::move(xr);
        s.fx[d] = fr;
      } else {
        bool outside = fr < s.fx[d];
        std::vector<double> xc = blend(outside ? -0.5 : 0.5);
        double fc = eval(xc);
        if (fc < std::min(fr, s.fx[d])) {
          s.x[d] = std::move(xc);
          s.fx[d] = fc;
        } else {
          // shrink toward the best vertex
          for (size_t i = 1; i <= d; ++i) {
            for (size_t j = 0; j < d; ++j) s.x[i][j] = s.x[0][j] + 0.5 * (s.x[i][j] - s.x[0][j]);
            s.fx[i] = eval(s.x[i]);
            if (res.n_evals >= opt.max_evals) break;
          }
        }
      }
      s.sort();
    }

    double round_best = s.fx[0];
    bool improved = round_best < best_f - opt.tol;
    if (round_best < best_f) {
      best_f = round_best;
      best_x = s.x[0];
    }
    res.converged = s.fx[d] - s.fx[0] < opt.tol;
    if (res.n_evals >= opt.max_evals) break;
    if (round > 0 && !improved) break;  // restart stalled
    step *= opt.restart_shrink;
  }

  res.x = std::move(best_x);
  res.fx = best_f;
  return res;
}

std::vector<std::vector<double>> central_hessian(const Objective& f, const std::vector<double>& x,
                                                 double rel_step) {
  const size_t d = x.size();
  double f0 = f(x);
  double noise_floor = 1e-10 * std::max(1.0, std::fabs(f0));

  std::vector<double> h(d);
  for (size_t i = 0; i < d; ++i) {
    h[i] = rel_step * std::max(1.0, std::fabs(x[i]));
    for (int attempt = 0; attempt < 3; ++attempt) {
      std::vector<double> xp = x, xm = x;
      xp[i] += h[i];
      xm[i] -= h[i];
      double dp = std::fabs(f(xp) - f0), dm = std::fabs(f(xm) - f0);
      if (dp > noise_floor || dm > noise_floor) break;
      h[i] *= 2.0;
    }
  }

  std::vector<std::vector<double>> hess(d, std::vector<double>(d, 0.0));
  for (size_t i = 0; i < d; ++i) {
    std::vector<double> xp = x, xm = x;
    xp[i] += h[i];
    xm[i] -= h[i];
    hess[i][i] = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i]);
  }
  for (size_t i = 0; i < d; ++i) {
    for (size_t j = i + 1; j < d; ++j) {
      std::vector<double> xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += h[i]; xpp[j] += h[j];
      xpm[i] += h[i]; xpm[j] -= h[j];
      xmp[i] -= h[i]; xmp[j] += h[j];
      xmm[i] -= h[i]; xmm[j] -= h[j];
      double v = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h[i] * h[j]);
      hess[i][j] = v;
      hess[j][i] = v;
    }
  }
  return hess;
}

bool cholesky_factor(std::vector<std::vector<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      if (i == j) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        a[i][i] = std::sqrt(s);
      } else {
        a[i][j] = s / a[j][j];
        a[j][i] = 0.0;
      }
    }
  }
  return true;
}

std::vector<std::vector<double>> cholesky_inverse(const std::vector<std::vector<double>>& l) {
  const size_t n = l.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  // Solve L L^T x = e_k by forward then backward substitution.
  for (size_t k = 0; k < n; ++k) {
    std::vector<double> y(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double s = i == k ? 1.0 : 0.0;
      for (size_t j = 0; j < i; ++j) s -= l[i][j] * y[j];
      y[i] = s / l[i][i];
    }
    for (size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (size_t j = ii + 1; j < n; ++j) s -= l[j][ii] * inv[j][k];
      inv[ii][k] = s / l[ii][ii];
    }
  }
  return inv;
}

}  // namespace mcycle
