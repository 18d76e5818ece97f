#include <cmath>
#include <map>
#include <random>

#include <Eigen/Cholesky>

#include "seqord/fit.hpp"

namespace seqord {

namespace {

// Knot covariance of one grid point, factored once and reused for every target.
struct KnotKriging {
  Hyperparameters hyper;
  Eigen::LLT<Mxd> llt;
  double nugget = 0.0;

  KnotKriging(const DesignLayout& layout, const Hyperparameters& h) : hyper(h) {
    const MaternParams<double> matern(h.sigma, h.range);
    const Mxd H = build_H(KnotSet<double>(layout.knots), matern);
    nugget = knot_nugget(H, matern);
    llt.compute(H);
  }

  LatentConditional condition(const DesignLayout& layout, const V2d& location, int year) const {
    const MaternParams<double> matern(hyper.sigma, hyper.range);
    const Eigen::Index k = layout.knots.rows();
    Vxd h(k);
    bool on_knot = false;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double dist = (layout.knots.row(i).transpose() - location).norm();
      h[i] = matern_cov(dist, matern);
      // A target on a knot is that knot, jitter included.
      if (dist == 0.0) h[i] += nugget, on_knot = true;
    }
    const Vxd spatial = llt.solve(h);
    const double explained = h.dot(spatial);
    const double self = hyper.sigma * hyper.sigma + (on_knot ? nugget : 0.0);

    LatentConditional out;
    if (layout.variant == Variant::M2) {
      out.weights = spatial;
      out.variance = std::max(0.0, self - explained);
      return out;
    }
    // Separable case: cross-covariance is a(t*) (x) h and Sigma^{-1} = Q (x) H^{-1}.
    const int T = layout.times;
    const ARParams<double> ar(hyper.rho);
    const double scale = 1.0 / (1.0 - hyper.rho * hyper.rho);
    const int target_time = year - layout.year_min;
    Vxd a(T);
    for (int t = 0; t < T; ++t) a[t] = std::pow(hyper.rho, std::abs(t - target_time)) * scale;
    const Vxd temporal = ar1_precision(T, ar) * a;
    out.weights = kronecker(temporal, spatial);
    out.variance = std::max(0.0, scale * self - a.dot(temporal) * explained);
    return out;
  }
};

}  // namespace

Covariates target_covariates(const DesignLayout& layout, int year, Habitat habitat, double access_km, int ctrl,
                             double duration) {
  Covariates x;
  x.ctrl = ctrl;
  x.duration = duration;
  x.year_centered = year - layout.year_center;
  x.forest = habitat == Habitat::forest ? 1.0 : 0.0;
  x.log_access = std::log(std::max(access_km, kMinAccessKm));
  return x;
}

LatentConditional latent_conditional(const DesignLayout& layout, const Hyperparameters& hyper, const V2d& location,
                                     int year) {
  if (layout.variant == Variant::M1) return {};
  return KnotKriging(layout, hyper).condition(layout, location, year);
}

PredictionResult predict(const DesignLayout& layout, const std::vector<Hyperparameters>& grid_hyper,
                         const PosteriorDraws& draws, const std::vector<PredictionTarget>& targets,
                         std::uint64_t seed) {
  const Eigen::Index p = layout.coef_dim();
  const Eigen::Index m = layout.latent_dim();
  const int q = layout.q();
  const Eigen::Index n = draws.theta.cols();
  if (draws.theta.rows() != p + m) throw std::invalid_argument("predict: draws do not match the model layout");
  if (n == 0) throw std::invalid_argument("predict: no posterior draws");

  std::map<int, KnotKriging> kriging;
  if (m > 0)
    for (int j : draws.grid_index)
      if (!kriging.count(j)) kriging.emplace(j, KnotKriging(layout, grid_hyper.at(static_cast<std::size_t>(j))));

  PredictionResult result;
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(q + 1), std::vector<double>(static_cast<std::size_t>(n)));
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const auto& target = targets[ti];
    std::map<int, LatentConditional> conditional;
    for (auto& [j, kk] : kriging) conditional.emplace(j, kk.condition(layout, target.location, target.year));

    std::mt19937_64 rng(derive_seed(seed, ti));
    std::normal_distribution<double> normal;
    const Vxd x = target.covariates.vector();
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto theta = draws.theta.col(s);
      double global = x.dot(theta.segment(q, Covariates::size));
      if (m > 0) {
        const auto& lc = conditional.at(draws.grid_index[static_cast<std::size_t>(s)]);
        global += lc.weights.dot(theta.tail(m)) + std::sqrt(lc.variance) * normal(rng);
      }
      Vxd delta(q);
      for (int c = 0; c < q; ++c) delta[c] = link_inverse(theta[c] + layout.sign() * global, layout.link);
      const CategoryProbs<double> pi = sequential_to_category_probs(SequentialProbs<double>(std::move(delta)));
      result.max_sum_error = std::max(result.max_sum_error, std::abs(pi.pi.sum() - 1.0));
      for (int c = 0; c <= q; ++c) probs[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)] = pi.pi[c];
    }
    for (int c = 0; c <= q; ++c) {
      auto& v = probs[static_cast<std::size_t>(c)];
      CategoryQuantiles row;
      row.target = ti;
      row.category = c + 1;
      row.q05 = sample_quantile(v, 0.05);
      row.q50 = sample_quantile(v, 0.50);
      row.q95 = sample_quantile(v, 0.95);
      result.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace seqord
