#include "seqord/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>

namespace seqord {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double sample_quantile(std::vector<double>& values, double prob) {
  if (values.empty()) throw std::invalid_argument("sample_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Run fn(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct NelderMeadResult {
  Vxd x;
  double value = 0.0;
  int evaluations = 0;
};

// Minimise f from x0 with an axis-aligned initial simplex of edge `step`.
NelderMeadResult nelder_mead(const std::function<double(const Vxd&)>& f, const Vxd& x0, double step, int max_evals,
                             double ftol = 1e-7, double xtol = 1e-4) {
  const Eigen::Index n = x0.size();
  std::vector<Vxd> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  int evals = 0;
  auto eval = [&](const Vxd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };
  for (Eigen::Index i = 0; i < n; ++i) simplex[i + 1][i] += step;
  for (Eigen::Index i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

  std::vector<Eigen::Index> order(n + 1);
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = order.front(), worst = order.back(), second = order[n - 1];
    double size = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) size = std::max(size, (simplex[i] - simplex[best]).lpNorm<Eigen::Infinity>());
    if (fv[worst] - fv[best] < ftol * (1.0 + std::abs(fv[best])) && size < xtol) break;

    Vxd centroid = Vxd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i)
      if (i != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Vxd reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr < fv[best]) {
      const Vxd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Vxd contracted = outside ? Vxd(centroid + 0.5 * (reflected - centroid))
                                   : Vxd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = contracted;
      fv[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      fv[i] = eval(simplex[i]);
    }
  }
  const auto best = std::min_element(fv.begin(), fv.end()) - fv.begin();
  return {simplex[best], fv[best], evals};
}

// Central-difference Hessian of f at x.
Mxd fd_hessian(const std::function<double(const Vxd&)>& f, const Vxd& x, double f0, double h) {
  const Eigen::Index n = x.size();
  Mxd H(n, n);
  auto at = [&](Eigen::Index i, double di, Eigen::Index j, double dj) {
    Vxd y = x;
    y[i] += di;
    if (j >= 0) y[j] += dj;
    return f(y);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    H(i, i) = (at(i, h, -1, 0) - 2.0 * f0 + at(i, -h, -1, 0)) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j)
      H(i, j) = H(j, i) =
          (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
  }
  return H;
}

double mixture_cdf(double x, const std::vector<double>& w, const std::vector<double>& mean, const std::vector<double>& sd) {
  double cdf = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) cdf += w[j] * 0.5 * std::erfc(-(x - mean[j]) / (sd[j] * std::sqrt(2.0)));
  return cdf;
}

ParameterSummary mixture_summary(std::string name, const std::vector<double>& w, const std::vector<double>& mean,
                                 const std::vector<double>& sd) {
  ParameterSummary s;
  s.name = std::move(name);
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (std::size_t j = 0; j < w.size(); ++j) {
    s.mean += w[j] * mean[j];
    lo = std::min(lo, mean[j] - 10.0 * sd[j]);
    hi = std::max(hi, mean[j] + 10.0 * sd[j]);
  }
  auto quantile = [&](double prob) {
    double a = lo, b = hi;
    for (int it = 0; it < 200 && b - a > 1e-12 * (1.0 + std::abs(a)); ++it) {
      const double mid = 0.5 * (a + b);
      (mixture_cdf(mid, w, mean, sd) < prob ? a : b) = mid;
    }
    return 0.5 * (a + b);
  };
  s.q025 = quantile(0.025);
  s.q50 = quantile(0.5);
  s.q975 = quantile(0.975);
  return s;
}

ParameterSummary empirical_summary(std::string name, std::vector<double> values) {
  ParameterSummary s;
  s.name = std::move(name);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.q025 = sample_quantile(values, 0.025);
  s.q50 = sample_quantile(values, 0.5);
  s.q975 = sample_quantile(values, 0.975);
  return s;
}

double knot_diameter(const DesignLayout& layout) {
  if (layout.knot_count() < 2) return 0.0;
  const V2d span = layout.knots.colwise().maxCoeff() - layout.knots.colwise().minCoeff();
  return span.norm();
}

}  // namespace

Vxd FitResult::posterior_mean() const {
  Vxd mean = Vxd::Zero(grid.front().approx.mode.size());
  for (const auto& g : grid) mean += g.weight * g.approx.mode;
  return mean;
}

double hyper_log_posterior(const ExpandedDesign& design, const ModelSpec& spec, const Hyperparameters& hyper,
                           GaussianApprox* approx_out, const Vxd& init) {
  LaplaceOptions opts;
  opts.coef_variance = spec.priors.coef_variance;
  const LaplaceProblem problem(design, hyper, opts);
  GaussianApprox approx = problem.find_mode(init);
  if (!approx.converged) throw ConvergenceError("inner Laplace mode search did not converge");
  double lp = problem.log_marginal(approx);
  if (hyper.variant != Variant::M1) {
    lp += pc_log_density(hyper.sigma, spec.priors.sigma) + pc_log_density(hyper.range, spec.priors.range);
    if (hyper.variant == Variant::M3) lp += pc_log_density(hyper.rho, spec.priors.rho);
    lp += hyper.log_jacobian();
  }
  if (approx_out) *approx_out = std::move(approx);
  return lp;
}

FitResult fit(const ExpandedDesign& design, const ModelSpec& spec, const FitOptions& options) {
  const Variant variant = design.layout.variant;
  if (variant != spec.variant) throw std::invalid_argument("fit: design was built for a different variant");
  const int dh = Hyperparameters::dimension(variant);

  FitResult result;
  result.layout = design.layout;
  result.seed = options.seed;

  Hyperparameters start;
  start.variant = variant;
  if (dh > 0) {
    const double diameter = knot_diameter(design.layout);
    start.sigma = options.init_sigma > 0.0 ? options.init_sigma : spec.priors.sigma.u;
    start.range = options.init_range > 0.0 ? options.init_range
                                           : (diameter > 0.0 ? 0.25 * diameter : spec.priors.range.u);
    start.rho = variant == Variant::M3 ? options.init_rho : 0.0;
  }

  if (dh == 0 || options.fixed_hyper) {
    GridPoint g;
    g.hyper = start;
    g.internal = start.to_internal();
    g.log_posterior = hyper_log_posterior(design, spec, start, &g.approx);
    g.weight = 1.0;
    result.grid.push_back(std::move(g));
    result.hyper_mode = start.to_internal();
    result.hyper_hessian = Mxd::Zero(dh, dh);
    auto fixed = [](std::string name, double v) { return ParameterSummary{std::move(name), v, v, v, v}; };
    if (dh > 0) {
      result.hyperparameters.push_back(fixed("r", start.range));
      result.hyperparameters.push_back(fixed("sigma", start.sigma));
      if (variant == Variant::M3) result.hyperparameters.push_back(fixed("rho", start.rho));
    }
  } else {
    Vxd warm;
    auto neg_log_post = [&](const Vxd& internal) {
      try {
        GaussianApprox approx;
        const double lp =
            hyper_log_posterior(design, spec, Hyperparameters::from_internal(internal, variant), &approx, warm);
        warm = approx.mode;
        return -lp;
      } catch (const std::exception&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    NelderMeadResult nm = nelder_mead(neg_log_post, start.to_internal(), 0.7, options.max_mode_evaluations);
    nm = nelder_mead(neg_log_post, nm.x, 0.2, options.max_mode_evaluations);
    if (!std::isfinite(nm.value) || nm.value == std::numeric_limits<double>::max())
      throw ConvergenceError("hyperparameter mode search failed: no finite posterior value found");

    result.hyper_mode = nm.x;
    GaussianApprox center;
    hyper_log_posterior(design, spec, Hyperparameters::from_internal(nm.x, variant), &center);
    warm = center.mode;
    result.hyper_hessian = fd_hessian(neg_log_post, nm.x, nm.value, 0.1);

    Eigen::SelfAdjointEigenSolver<Mxd> eig(result.hyper_hessian);
    Vxd curvature = eig.eigenvalues().cwiseAbs().cwiseMax(1e-2);
    const Mxd axes = eig.eigenvectors() * curvature.cwiseSqrt().cwiseInverse().asDiagonal();

    // Full factorial grid in standardised coordinates.
    const auto& zs = options.grid_z;
    const std::size_t per = zs.size();
    std::size_t total = 1;
    for (int i = 0; i < dh; ++i) total *= per;
    std::vector<Vxd> zpoints;
    for (std::size_t idx = 0; idx < total; ++idx) {
      Vxd z(dh);
      std::size_t rem = idx;
      for (int i = 0; i < dh; ++i, rem /= per) z[i] = zs[rem % per];
      zpoints.push_back(z);
    }
    result.grid.resize(total);
    parallel_for(total, options.threads, [&](std::size_t i) {
      GridPoint& g = result.grid[i];
      g.internal = nm.x + axes * zpoints[i];
      g.hyper = Hyperparameters::from_internal(g.internal, variant);
      try {
        g.log_posterior = hyper_log_posterior(design, spec, g.hyper, &g.approx, center.mode);
      } catch (const std::exception&) {
        g.log_posterior = kNegInf;
      }
    });

    double top = kNegInf;
    for (const auto& g : result.grid) top = std::max(top, g.log_posterior);
    if (!std::isfinite(top)) throw ConvergenceError("no grid point produced a finite posterior value");
    double total_weight = 0.0;
    for (auto& g : result.grid) total_weight += g.weight = std::exp(g.log_posterior - top);
    for (auto& g : result.grid) g.weight /= total_weight;

    // Drop failed points so downstream code never sees empty approximations.
    std::vector<GridPoint> kept;
    std::vector<Vxd> kept_z;
    for (std::size_t i = 0; i < result.grid.size(); ++i)
      if (std::isfinite(result.grid[i].log_posterior)) {
        kept.push_back(std::move(result.grid[i]));
        kept_z.push_back(zpoints[i]);
      }
    result.grid = std::move(kept);
    zpoints = std::move(kept_z);

    const double zmax = *std::max_element(zs.begin(), zs.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    const double center_lp = -nm.value;
    for (std::size_t i = 0; i < result.grid.size(); ++i)
      if (zpoints[i].cwiseAbs().maxCoeff() >= std::abs(zmax) && result.grid[i].log_posterior > center_lp - 0.5)
        result.boundary_warning = true;
    if (result.boundary_warning)
      std::cerr << "warning: hyperparameter grid carries substantial weight on its boundary; widen grid_z\n";

    // Hyperparameter marginals: split-normal along each principal axis, with
    // scales read off the grid's axis points.
    Vxd s_plus = Vxd::Ones(dh), s_minus = Vxd::Ones(dh);
    for (std::size_t i = 0; i < result.grid.size(); ++i) {
      const Vxd& z = zpoints[i];
      Eigen::Index axis;
      const double zi = z.cwiseAbs().maxCoeff(&axis);
      if (zi == 0.0 || std::abs(zi) < std::abs(zmax) || (z.cwiseAbs().array() > 0.0).count() != 1) continue;
      const double drop = center_lp - result.grid[i].log_posterior;
      const double s = drop > 0.0 ? std::abs(zi) / std::sqrt(2.0 * drop) : 1.0;
      (z[axis] > 0 ? s_plus : s_minus)[axis] = std::clamp(s, 0.2, 5.0);
    }
    std::mt19937_64 rng(derive_seed(options.seed, 2));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    std::vector<std::vector<double>> values(3);
    for (int draw = 0; draw < options.hyper_marginal_draws; ++draw) {
      Vxd z(dh);
      for (int i = 0; i < dh; ++i) {
        const double mag = std::abs(normal(rng));
        const bool up = unif(rng) < s_plus[i] / (s_plus[i] + s_minus[i]);
        z[i] = up ? s_plus[i] * mag : -s_minus[i] * mag;
      }
      const Hyperparameters h = Hyperparameters::from_internal(nm.x + axes * z, variant);
      values[0].push_back(h.range);
      values[1].push_back(h.sigma);
      if (variant == Variant::M3) values[2].push_back(h.rho);
    }
    result.hyperparameters.push_back(empirical_summary("r", std::move(values[0])));
    result.hyperparameters.push_back(empirical_summary("sigma", std::move(values[1])));
    if (variant == Variant::M3) result.hyperparameters.push_back(empirical_summary("rho", std::move(values[2])));
  }

  for (const auto& g : result.grid)
    if (!g.approx.converged) throw ConvergenceError("Laplace approximation failed at a retained grid point");

  const auto names = design.layout.coefficient_names();
  const Eigen::Index p = design.coef_dim();
  std::vector<double> w, mean, sd;
  std::vector<Vxd> variances;
  for (const auto& g : result.grid) {
    w.push_back(g.weight);
    variances.push_back(g.approx.marginal_variances(p));
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    mean.clear();
    sd.clear();
    for (std::size_t j = 0; j < result.grid.size(); ++j) {
      mean.push_back(result.grid[j].approx.mode[i]);
      sd.push_back(std::sqrt(variances[j][i]));
    }
    result.coefficients.push_back(mixture_summary(names[static_cast<std::size_t>(i)], w, mean, sd));
  }

  const DicResult d = dic(result, design, options.samples, derive_seed(options.seed, 1));
  result.dic = d.dic;
  result.p_d = d.p_d;
  return result;
}

PosteriorDraws sample_posterior(const FitResult& fit, int n, std::uint64_t seed, int threads) {
  if (n <= 0) throw std::invalid_argument("sample_posterior: draw count must be positive");
  const Eigen::Index d = fit.grid.front().approx.mode.size();
  const Eigen::Index q = std::min<Eigen::Index>(fit.layout.q(), d);
  PosteriorDraws out;
  out.theta.resize(d, n);
  out.grid_index.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> weights;
  for (const auto& g : fit.grid) weights.push_back(g.weight);

  constexpr int kBlock = 256;
  const std::size_t blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
  parallel_for(blocks, threads, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::normal_distribution<double> normal;
    const int first = static_cast<int>(b) * kBlock;
    const int last = std::min(n, first + kBlock);
    for (int s = first; s < last; ++s) {
      const int j = pick(rng);
      Vxd z(d);
      for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
      // Noise on global and latent coordinates follows the sign convention.
      if (fit.layout.negate_globals) z.tail(d - q) *= -1.0;
      const auto& approx = fit.grid[static_cast<std::size_t>(j)].approx;
      approx.chol_lower.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
      out.theta.col(s) = approx.mode + z;
      out.grid_index[static_cast<std::size_t>(s)] = j;
    }
  });
  return out;
}

double deviance(const ExpandedDesign& design, const Vxd& theta) {
  const Eigen::Index p = design.coef_dim();
  const Vxd eta = linear_predictor(design, theta.head(p), theta.tail(design.latent_dim()));
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += bernoulli_row(design.y[i], eta[i], design.layout.link).loglik;
  return -2.0 * ll;
}

DicResult dic(const ExpandedDesign& design, const PosteriorDraws& draws) {
  DicResult r;
  const Eigen::Index n = draws.theta.cols();
  if (n == 0) throw std::invalid_argument("dic: no posterior draws");
  for (Eigen::Index s = 0; s < n; ++s) r.mean_deviance += deviance(design, draws.theta.col(s));
  r.mean_deviance /= static_cast<double>(n);
  r.deviance_at_mean = deviance(design, draws.theta.rowwise().mean());
  r.p_d = r.mean_deviance - r.deviance_at_mean;
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

DicResult dic(const FitResult& fit, const ExpandedDesign& design, int samples, std::uint64_t seed) {
  return dic(design, sample_posterior(fit, samples, seed));
}

}  // namespace seqord
