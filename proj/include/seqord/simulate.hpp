#pragma once
/** \file
 * Synthetic data from known ground truth, and a brute-force quadrature
 * reference for the Laplace marginal.
 */

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "seqord/laplace.hpp"

namespace seqord {

struct GroundTruth {
  MaternParams<double> matern{1.0, 5.0};
  ARParams<double> ar{0.9};
  Vxd beta_cuts;    ///< q sequential thresholds
  Vxd beta_global;  ///< ctrl, d, year, forest, log_access
  KnotSet<double> sites;  ///< sites double as knots
  OrdinalScale scale{5};
  Link link = Link::cloglog;
  std::string species = "sp1";
  int year_min = 2001;
  int years = 5;
  int obs_per_year = 120;
  double forest_prob = 0.5;
  double access_log_mean = 0.0;  ///< log-normal access distance (km)
  double access_log_sd = 1.0;
  double control_rate = 0.2;  ///< chance a site is treated in a given year
  std::chrono::month_day reference{std::chrono::July / 1};
  std::uint64_t seed = 1;

  GroundTruth() : sites(default_sites()) {}
  /// Sites on a jittered lattice over a square of side `extent_km`.
  static KnotSet<double> grid_sites(int count, double extent_km, std::uint64_t seed);

 private:
  static KnotSet<double> default_sites() { return grid_sites(40, 20.0, 7); }
};

/// k x T knot trajectories: u(1) ~ N(0, H / (1 - rho^2)), u(t) = rho u(t-1) + e(t), e(t) ~ N(0, H).
Mxd simulate_field(const GroundTruth& truth, int times, std::uint64_t seed);

struct SimulatedData {
  std::vector<Observation> observations;
  std::vector<ControlEvent> controls;
  Mxd field;  ///< k x T latent truth
};

/// Scores by sequential coin flips: category c is accepted with probability delta_c.
SimulatedData simulate_dataset(const GroundTruth& truth);

/// One draw from the sequential model given per-category stopping probabilities.
template <typename Rng>
int sequential_draw(const Vxd& delta, Rng& rng) {
  std::uniform_real_distribution<double> unif;
  for (Eigen::Index c = 0; c < delta.size(); ++c)
    if (unif(rng) < delta[c]) return static_cast<int>(c) + 1;
  return static_cast<int>(delta.size()) + 1;
}

/// log of the integral of p(y | theta) p(theta | hyper) over theta = [beta; u]
/// by nested adaptive Gauss-Kronrod quadrature; at most two integrated dimensions.
double brute_marginal(const ExpandedDesign& design, const Hyperparameters& hyper, const LaplaceOptions& options = {});

}  // namespace seqord
