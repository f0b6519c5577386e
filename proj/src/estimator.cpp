#include "mcycle/estimator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mcycle/parallel.hpp"

namespace mcycle {

std::vector<std::string> fit_param_names(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::FullyExplicit:
      return {"alpha1", "beta1", "alpha2", "beta2", "mu1", "sigma1", "mu2", "sigma2"};
    case ModelVariant::RestrictedExplicit:
      return {"alpha", "beta", "mu1", "sigma1", "mu2", "sigma2"};
    default: {
      std::vector<std::string> names = {"alpha", "beta", "sigma", "a"};
      for (int m = 1; m <= implicit_order(variant); ++m) {
        names.push_back("b" + std::to_string(m));
        names.push_back("c" + std::to_string(m));
      }
      return names;
    }
  }
}

std::vector<bool> log_coordinates(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::FullyExplicit:
      return {true, true, true, true, false, true, false, true};
    case ModelVariant::RestrictedExplicit:
      return {true, true, false, true, false, true};
    default: {
      std::vector<bool> lg = {true, true, true, false};
      for (int m = 1; m <= implicit_order(variant); ++m) {
        lg.push_back(false);
        lg.push_back(false);
      }
      return lg;
    }
  }
}

std::vector<double> pack_params(const ModelParams& params) {
  params.validate();
  switch (params.variant) {
    case ModelVariant::FullyExplicit:
      return {std::log(params.stage1.alpha), std::log(params.stage1.beta),
              std::log(params.stage2.alpha), std::log(params.stage2.beta),
              params.stage1.mu, std::log(params.stage1.sigma),
              params.stage2.mu, std::log(params.stage2.sigma)};
    case ModelVariant::RestrictedExplicit:
      return {std::log(params.stage1.alpha), std::log(params.stage1.beta),
              params.stage1.mu, std::log(params.stage1.sigma),
              params.stage2.mu, std::log(params.stage2.sigma)};
    default: {
      std::vector<double> x = {std::log(params.stage1.alpha), std::log(params.stage1.beta),
                               std::log(params.stage1.sigma), params.trig->intercept};
      for (const auto& h : params.trig->harmonics) {
        x.push_back(h.first);
        x.push_back(h.second);
      }
      return x;
    }
  }
}

ModelParams unpack_params(const std::vector<double>& x, ModelVariant variant) {
  ModelParams p;
  p.variant = variant;
  switch (variant) {
    case ModelVariant::FullyExplicit:
      if (x.size() != 8) throw std::invalid_argument("unpack_params: FE expects 8 values");
      p.stage1 = StageParams(std::exp(x[0]), std::exp(x[1]), x[4], std::exp(x[5]));
      p.stage2 = StageParams(std::exp(x[2]), std::exp(x[3]), x[6], std::exp(x[7]));
      break;
    case ModelVariant::RestrictedExplicit:
      if (x.size() != 6) throw std::invalid_argument("unpack_params: RE expects 6 values");
      p.stage1 = StageParams(std::exp(x[0]), std::exp(x[1]), x[2], std::exp(x[3]));
      p.stage2 = StageParams(std::exp(x[0]), std::exp(x[1]), x[4], std::exp(x[5]));
      break;
    default: {
      int order = implicit_order(variant);
      if (static_cast<int>(x.size()) != 4 + 2 * order) {
        throw std::invalid_argument("unpack_params: wrong size for implicit variant");
      }
      TrigSeries trig;
      trig.intercept = x[3];
      for (int m = 0; m < order; ++m) {
        trig.harmonics.emplace_back(x[4 + 2 * m], x[5 + 2 * m]);
      }
      p.stage1 = StageParams(std::exp(x[0]), std::exp(x[1]), 0.0, std::exp(x[2]));
      p.stage2 = p.stage1;
      p.trig = trig;
      break;
    }
  }
  p.validate();
  return p;
}

double neg_loglik(const ModelParams& params, const std::vector<CycleSeries>& data,
                  const FitSpec& spec, NegLoglikDiag* diag) {
  if (data.empty()) throw std::invalid_argument("neg_loglik: empty data");
  params.validate();
  PhaseGrid grid(spec.n_bins);
  FilterConfig fcfg;
  fcfg.n_bins = spec.n_bins;
  fcfg.exec = Exec::Serial;  // parallelism lives at the series level here
  TransitionKernel kernel(params, grid, fcfg.kernel_tail);

  const int n = static_cast<int>(data.size());
  std::vector<double> ll(static_cast<size_t>(n), 0.0);
  std::vector<int> zero_day(static_cast<size_t>(n), 0);
#pragma omp parallel for schedule(dynamic) if (spec.exec == Exec::Parallel)
  for (int i = 0; i < n; ++i) {
    try {
      InitialCondition init = InitialCondition::for_series(data[static_cast<size_t>(i)], grid);
      ll[static_cast<size_t>(i)] =
          series_loglik(data[static_cast<size_t>(i)], params, kernel, init, fcfg);
    } catch (const ZeroLikelihoodError& e) {
      zero_day[static_cast<size_t>(i)] = e.day();
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (zero_day[static_cast<size_t>(i)] > 0) {
      if (diag) {
        ++diag->n_zero_likelihood;
        if (diag->first_series.empty()) {
          diag->first_series = data[static_cast<size_t>(i)].subject_id;
          diag->first_day = zero_day[static_cast<size_t>(i)];
        }
      }
      total = std::numeric_limits<double>::infinity();
    }
    if (!std::isinf(total)) total += ll[static_cast<size_t>(i)];
  }
  return std::isinf(total) ? total : -total;
}

ModelParams default_init(ModelVariant variant, const std::vector<CycleSeries>& data) {
  ModelParams p;
  p.variant = variant;
  switch (variant) {
    case ModelVariant::FullyExplicit:
      p.stage1 = StageParams(1.0, 40.0, 0.0, 0.25);
      p.stage2 = StageParams(0.4, 6.0, 0.35, 0.25);
      break;
    case ModelVariant::RestrictedExplicit:
      p.stage1 = StageParams(0.6, 15.0, 0.0, 0.25);
      p.stage2 = StageParams(0.6, 15.0, 0.35, 0.25);
      break;
    default: {
      double sum = 0.0;
      long cnt = 0;
      for (const CycleSeries& s : data) {
        for (int t = 0; t < s.length(); ++t) {
          if (s.has_y(t)) {
            sum += s.y[static_cast<size_t>(t)];
            ++cnt;
          }
        }
      }
      TrigSeries trig;
      trig.intercept = cnt > 0 ? sum / static_cast<double>(cnt) : 0.15;
      trig.harmonics.assign(static_cast<size_t>(implicit_order(variant)), {0.0, 0.0});
      trig.harmonics[0] = {0.0, -0.15};
      p.stage1 = StageParams(0.6, 15.0, 0.0, 0.25);
      p.stage2 = p.stage1;
      p.trig = trig;
      break;
    }
  }
  return p;
}

FitResult fit(const std::vector<CycleSeries>& data, const FitSpec& spec, const ModelParams& init) {
  if (data.empty()) throw std::invalid_argument("fit: empty data");
  if (init.variant != spec.variant) {
    throw std::invalid_argument("fit: init variant does not match spec");
  }
  Objective obj = [&](const std::vector<double>& x) {
    ModelParams p;
    try {
      p = unpack_params(x, spec.variant);
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::infinity();
    }
    return neg_loglik(p, data, spec);
  };

  NelderMeadOptions nm;
  nm.max_evals = spec.max_evals;
  nm.tol = spec.tol;
  NelderMeadResult r = nelder_mead(obj, pack_params(init), nm);

  FitResult fr;
  fr.params = unpack_params(r.x, spec.variant);
  fr.loglik = -r.fx;
  fr.n_evals = r.n_evals;
  fr.converged = r.converged;
  fr.param_names = fit_param_names(spec.variant);
  return fr;
}

void confidence_intervals(FitResult& result, const std::vector<CycleSeries>& data,
                          const FitSpec& spec) {
  std::vector<double> xhat = pack_params(result.params);
  Objective obj = [&](const std::vector<double>& x) {
    ModelParams p;
    try {
      p = unpack_params(x, spec.variant);
    } catch (const std::invalid_argument&) {
      return std::numeric_limits<double>::infinity();
    }
    return neg_loglik(p, data, spec);
  };
  result.hessian = central_hessian(obj, xhat, spec.hessian_step);
  result.ci95.clear();

  std::vector<std::vector<double>> l = result.hessian;
  bool finite = true;
  for (const auto& row : l) {
    for (double v : row) finite = finite && std::isfinite(v);
  }
  if (!finite || !cholesky_factor(l)) {
    result.hessian_singular = true;
    return;
  }
  result.hessian_singular = false;
  std::vector<std::vector<double>> cov = cholesky_inverse(l);
  std::vector<bool> lg = log_coordinates(spec.variant);
  for (size_t i = 0; i < xhat.size(); ++i) {
    double se = std::sqrt(std::max(0.0, cov[i][i]));
    double lo = xhat[i] - 1.959963984540054 * se;
    double hi = xhat[i] + 1.959963984540054 * se;
    if (lg[i]) {
      lo = std::exp(lo);
      hi = std::exp(hi);
    }
    result.ci95.emplace_back(lo, hi);
  }
}

}  // namespace mcycle
