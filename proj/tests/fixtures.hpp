#pragma once
// Small model instances shared by the unit and acceptance tests.

#include <random>

#include "seqord/laplace.hpp"

namespace fixture {

using namespace seqord;

// Design with hand-chosen columns: X (n x p), latent incidence w (n values onto one
// knot, repeated across `times` blocks by `time_of_row`), binary responses y.
inline ExpandedDesign manual_design(const Mxd& X, const Vxd& w, const std::vector<int>& time_of_row, const Vxd& y,
                                    Link link, Variant variant, int times = 1) {
  ExpandedDesign d;
  d.y = y;
  d.X = X;
  d.layout.scale = OrdinalScale(2);
  d.layout.link = link;
  d.layout.variant = variant;
  d.layout.knots = Eigen::Matrix<double, 1, 2>(0.0, 0.0);
  d.layout.times = variant == Variant::M1 ? 0 : times;
  const Eigen::Index m = d.layout.latent_dim();
  d.W.resize(y.size(), m);
  if (m > 0) {
    std::vector<Eigen::Triplet<double>> entries;
    for (Eigen::Index r = 0; r < y.size(); ++r)
      if (w[r] != 0.0) entries.emplace_back(static_cast<int>(r), time_of_row[static_cast<std::size_t>(r)], w[r]);
    d.W.setFromTriplets(entries.begin(), entries.end());
  }
  for (Eigen::Index r = 0; r < y.size(); ++r) {
    d.row_obs.push_back(static_cast<int>(r));
    d.row_cat.push_back(1);
  }
  return d;
}

struct Instance {
  ExpandedDesign design;
  Hyperparameters hyper;
};

// At most two integrated dimensions with a few thousand rows, where the
// Laplace approximation is accurate enough to compare against quadrature.
inline Instance quadrature_instance(std::mt19937_64& rng, int index) {
  const Link links[] = {Link::logit, Link::cloglog, Link::probit};
  const Link link = links[index % 3];
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;
  const int n = 2000 + static_cast<int>(unif(rng) * 2000);
  const int shape = index % 4;  // 0: beta + u, 1: u(1), u(2), 2: beta only, 3: u only
  Instance out;
  out.hyper.sigma = 0.5 + unif(rng);
  out.hyper.range = 5.0;
  out.hyper.rho = 0.3 + 0.5 * unif(rng);
  // Moderate effects keep both responses common, away from separation.
  const double beta = 0.5 * normal(rng), u1 = 1.6 * unif(rng) - 0.8, u2 = 1.6 * unif(rng) - 0.8;

  Mxd X(n, shape == 0 || shape == 2 ? 1 : 0);
  Vxd w = Vxd::Zero(n), y(n);
  std::vector<int> time(static_cast<std::size_t>(n), 0);
  for (int r = 0; r < n; ++r) {
    const double x = normal(rng);
    double eta = 0.0;
    if (X.cols()) {
      X(r, 0) = x;
      eta += beta * x;
    }
    if (shape != 2) {
      w[r] = -1.0;
      if (shape == 1) time[static_cast<std::size_t>(r)] = r % 2;
      eta -= time[static_cast<std::size_t>(r)] ? u2 : u1;
    }
    double p = 0.0;
    switch (link) {
      case Link::logit: p = 1.0 / (1.0 + std::exp(-eta)); break;
      case Link::cloglog: p = -std::expm1(-std::exp(eta)); break;
      case Link::probit: p = 0.5 * std::erfc(-eta / std::sqrt(2.0)); break;
    }
    y[r] = unif(rng) < p ? 1.0 : 0.0;
  }
  const Variant variant = shape == 2 ? Variant::M1 : (shape == 1 ? Variant::M3 : Variant::M2);
  out.hyper.variant = variant;
  out.design = manual_design(X, w, time, y, link, variant, shape == 1 ? 2 : 1);
  return out;
}

// Small random instance from the full design pipeline (k <= 3 knots, T <= 2, <= 10 observations).
inline Instance pipeline_instance(std::mt19937_64& rng, Link link) {
  std::uniform_int_distribution<int> kdist(1, 3), tdist(1, 2), ndist(1, 10), cdist(2, 6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int k = kdist(rng), T = tdist(rng), n = ndist(rng), C = cdist(rng);
  ModelSpec spec = ModelSpec::defaults(C);
  spec.link = link;
  spec.variant = unif(rng) < 0.5 ? Variant::M3 : Variant::M2;
  std::vector<Observation> obs;
  std::vector<V2d> sites;
  for (int i = 0; i < k; ++i) sites.emplace_back(10.0 * unif(rng), 10.0 * unif(rng));
  std::uniform_int_distribution<int> score(1, C);
  for (int j = 0; j < n; ++j) {
    const int s = j % k;
    obs.push_back({"S" + std::to_string(s), sites[static_cast<std::size_t>(s)], 2000 + (j / k) % T, "sp", score(rng),
                   unif(rng) < 0.5 ? Habitat::forest : Habitat::grassland, 0.1 + 3 * unif(rng)});
  }
  std::vector<ControlEvent> events{{"sp", "S0", std::chrono::sys_days{std::chrono::year{1999} / 3 / 14}}};
  Instance out{build_design(obs, events, spec), {}};
  out.hyper.variant = spec.variant;
  out.hyper.sigma = 0.3 + 1.5 * unif(rng);
  out.hyper.range = 1.0 + 10.0 * unif(rng);
  out.hyper.rho = -0.5 + 1.4 * unif(rng);
  return out;
}

}  // namespace fixture
