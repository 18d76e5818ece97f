#include "seqord/simulate.hpp"

#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>
#include <Eigen/Eigenvalues>

#include "seqord/fit.hpp"

namespace seqord {

KnotSet<double> GroundTruth::grid_sites(int count, double extent_km, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("grid_sites: need at least one site");
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const double cell = extent_km / side;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.15, 0.85);
  Eigen::Matrix<double, Eigen::Dynamic, 2> xy(count, 2);
  for (int i = 0; i < count; ++i) {
    const int row = i / side, col = i % side;
    xy(i, 0) = (col + jitter(rng)) * cell;
    xy(i, 1) = (row + jitter(rng)) * cell;
  }
  return KnotSet<double>(xy);
}

Mxd simulate_field(const GroundTruth& truth, int times, std::uint64_t seed) {
  if (times < 1) throw std::invalid_argument("simulate_field: need at least one time step");
  const Eigen::Index k = truth.sites.size();
  Mxd u = Mxd::Zero(k, times);
  if (truth.matern.sigma == 0.0) return u;
  const Mxd H = build_H(truth.sites, truth.matern);
  const Mxd L = Eigen::LLT<Mxd>(H).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto innovation = [&] {
    Vxd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z[i] = normal(rng);
    return Vxd(L * z);
  };
  const double rho = truth.ar.rho;
  u.col(0) = innovation() / std::sqrt(1.0 - rho * rho);
  for (int t = 1; t < times; ++t) u.col(t) = rho * u.col(t - 1) + innovation();
  return u;
}

SimulatedData simulate_dataset(const GroundTruth& truth) {
  const int q = truth.scale.thresholds();
  if (truth.beta_cuts.size() != q) throw std::invalid_argument("simulate_dataset: need one cut per threshold");
  if (truth.beta_global.size() != Covariates::size)
    throw std::invalid_argument("simulate_dataset: need one global coefficient per covariate");
  if (truth.years < 1 || truth.obs_per_year < 1) throw std::invalid_argument("simulate_dataset: empty design");

  SimulatedData out;
  out.field = simulate_field(truth, truth.years, derive_seed(truth.seed, 0));
  std::mt19937_64 rng(derive_seed(truth.seed, 1));
  std::uniform_real_distribution<double> unif;
  std::lognormal_distribution<double> access(truth.access_log_mean, truth.access_log_sd);

  const Eigen::Index k = truth.sites.size();
  std::vector<std::string> ids(static_cast<std::size_t>(k));
  std::vector<Habitat> habitat(static_cast<std::size_t>(k));
  std::vector<double> access_km(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto s = static_cast<std::size_t>(i);
    ids[s] = "S" + std::to_string(i + 1);
    habitat[s] = unif(rng) < truth.forest_prob ? Habitat::forest : Habitat::grassland;
    access_km[s] = access(rng);
  }
  // Treatments may fall in the year before the first survey.
  for (int y = truth.year_min - 1; y < truth.year_min + truth.years; ++y) {
    const std::chrono::sys_days jan1{std::chrono::year{y} / std::chrono::January / 1};
    for (Eigen::Index i = 0; i < k; ++i) {
      if (!(unif(rng) < truth.control_rate)) continue;
      const int day = static_cast<int>(unif(rng) * 365.0);
      out.controls.push_back({truth.species, ids[static_cast<std::size_t>(i)], jan1 + std::chrono::days{day}});
    }
  }

  const double center = truth.year_min + 0.5 * (truth.years - 1);
  for (int t = 0; t < truth.years; ++t) {
    const int year = truth.year_min + t;
    for (int j = 0; j < truth.obs_per_year; ++j) {
      const Eigen::Index site = j % k;
      const auto s = static_cast<std::size_t>(site);
      Observation o;
      o.site_id = ids[s];
      o.location = truth.sites[site];
      o.year = year;
      o.species = truth.species;
      o.habitat = habitat[s];
      o.access_km = access_km[s];
      const auto ctrl =
          control_covariates(o.species, o.site_id, reference_date_for(year, truth.reference), out.controls);
      Covariates x;
      x.ctrl = ctrl.exposed;
      x.duration = ctrl.years;
      x.year_centered = year - center;
      x.forest = o.habitat == Habitat::forest ? 1.0 : 0.0;
      x.log_access = std::log(std::max(o.access_km, kMinAccessKm));
      const double global = x.vector().dot(truth.beta_global) + out.field(site, t);
      Vxd delta(q);
      for (int c = 0; c < q; ++c) delta[c] = link_inverse(truth.beta_cuts[c] - global, truth.link);
      o.score = sequential_draw(delta, rng);
      out.observations.push_back(std::move(o));
    }
  }
  return out;
}

double brute_marginal(const ExpandedDesign& design, const Hyperparameters& hyper, const LaplaceOptions& options) {
  const Eigen::Index d = design.dim();
  if (d > 2) throw std::invalid_argument("brute_marginal: at most two integrated dimensions are supported");
  const LaplaceProblem problem(design, hyper, options);
  const LatentPrior& prior = problem.prior();
  Mxd Z(design.rows(), d);
  Z << design.X, Mxd(design.W);
  const double constant = 0.5 * prior.log_det_cov + 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  auto f = [&](const Vxd& theta) {
    const Vxd eta = Z * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      ll += options.likelihood ? options.likelihood(design.y[i], eta[i]).loglik
                               : bernoulli_row(design.y[i], eta[i], design.layout.link).loglik;
    const double value = -ll + 0.5 * theta.dot(prior.precision * theta) + constant;
    return std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
  };
  if (d == 0) return -f(Vxd::Zero(0));

  // Coarse-to-fine scan for the peak, starting from the prior scale.
  const Mxd prior_cov = problem.prior().precision.inverse();
  Vxd center = Vxd::Zero(d);
  Vxd half = 8.0 * prior_cov.diagonal().cwiseSqrt();
  double best = f(center);
  constexpr int kScan = 10;
  for (int round = 0; round < 16; ++round) {
    Vxd next = center;
    for (int i = 0; i <= kScan; ++i)
      for (int j = 0; j <= (d > 1 ? kScan : 0); ++j) {
        Vxd t = center;
        t[0] += half[0] * (2.0 * i / kScan - 1.0);
        if (d > 1) t[1] += half[1] * (2.0 * j / kScan - 1.0);
        const double v = f(t);
        if (v < best) best = v, next = t;
      }
    center = next;
    half *= 0.5;
  }

  // Integrate along the principal axes of a finite-difference curvature at the peak.
  Mxd hess(d, d);
  const double h = 1e-3;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      Vxd pp = center, pm = center, mp = center, mm = center;
      pp[a] += h, pp[b] += h;
      pm[a] += h, pm[b] -= h;
      mp[a] -= h, mp[b] += h;
      mm[a] -= h, mm[b] -= h;
      hess(a, b) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
    }
  const Eigen::SelfAdjointEigenSolver<Mxd> eig(0.5 * (hess + hess.transpose()));
  const Mxd axes = eig.eigenvectors();
  auto at = [&](const Vxd& s) { return Vxd(center + axes * s); };

  std::vector<double> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
  for (Eigen::Index a = 0; a < d; ++a) {
    const double scale = 1.0 / std::sqrt(std::max(eig.eigenvalues()[a], 1e-12));
    for (int dir : {-1, 1}) {
      double t = scale;
      Vxd s = Vxd::Zero(d);
      for (int it = 0; it < 200; ++it, t *= 1.5) {
        s[a] = dir * t;
        if (f(at(s)) - best > 40.0) break;
      }
      (dir < 0 ? lo : hi)[static_cast<std::size_t>(a)] = dir * t;
    }
  }

  // The integrand is smooth and bell-shaped along the principal axes, so a fixed
  // high-order rule suffices and avoids adaptive refinement on rounding noise.
  using GL = boost::math::quadrature::gauss<double, 60>;
  auto integrand = [&](const Vxd& s) { return std::exp(best - f(at(s))); };
  double total = 0.0;
  if (d == 1) {
    total = GL::integrate([&](double s0) { return integrand(Vxd::Constant(1, s0)); }, lo[0], hi[0]);
  } else {
    total = GL::integrate(
        [&](double s0) {
          return GL::integrate([&](double s1) { return integrand((Vxd(2) << s0, s1).finished()); }, lo[1], hi[1]);
        },
        lo[0], hi[0]);
  }
  return std::log(total) - best;
}

}  // namespace seqord
