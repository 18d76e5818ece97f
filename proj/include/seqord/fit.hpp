#pragma once
/** \file
 * Hyperparameter integration over a grid of Laplace approximations,
 * posterior sampling, prediction of category probabilities at new
 * space-time points, and the deviance information criterion.
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqord/laplace.hpp"

namespace seqord {

struct FitOptions {
  /// Standardised grid offsets per hyperparameter direction (full factorial).
  std::vector<double> grid_z{-2.0, -1.0, 0.0, 1.0, 2.0};
  int threads = 1;
  int samples = 2000;
  std::uint64_t seed = 1;
  int max_mode_evaluations = 600;
  /// Monte Carlo draws used for hyperparameter marginal quantiles.
  int hyper_marginal_draws = 20000;
  /// Start of the hyperparameter search; non-positive entries pick defaults.
  double init_sigma = 0.0;
  double init_range = 0.0;
  double init_rho = 0.5;
  /// Hold hyperparameters at the initial values instead of searching (single grid point).
  bool fixed_hyper = false;
};

struct GridPoint {
  Hyperparameters hyper;
  Vxd internal;
  double log_posterior = 0.0;
  double weight = 0.0;
  GaussianApprox approx;
};

struct ParameterSummary {
  std::string name;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double mean = 0.0;
};

struct FitResult {
  DesignLayout layout;
  std::vector<GridPoint> grid;
  Vxd hyper_mode;       ///< internal coordinates
  Mxd hyper_hessian;    ///< of the negative log posterior, internal coordinates
  std::vector<ParameterSummary> coefficients;
  std::vector<ParameterSummary> hyperparameters;  ///< r, sigma, rho as present
  bool boundary_warning = false;
  std::uint64_t seed = 0;
  std::string spec_hash;
  double dic = 0.0;
  double p_d = 0.0;

  /// Mixture mean of theta over the grid.
  Vxd posterior_mean() const;
};

/// Log posterior of the hyperparameters in internal coordinates (up to a constant).
double hyper_log_posterior(const ExpandedDesign& design, const ModelSpec& spec, const Hyperparameters& hyper,
                           GaussianApprox* approx_out = nullptr, const Vxd& init = {});

FitResult fit(const ExpandedDesign& design, const ModelSpec& spec, const FitOptions& options = {});

struct PosteriorDraws {
  Mxd theta;                   ///< dim x n, columns are draws of [beta; u]
  std::vector<int> grid_index;  ///< grid point each draw came from
};

PosteriorDraws sample_posterior(const FitResult& fit, int n, std::uint64_t seed, int threads = 1);

struct DicResult {
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  double p_d = 0.0;
  double dic = 0.0;
};

/// D(theta) = -2 sum of binary log-likelihood rows.
double deviance(const ExpandedDesign& design, const Vxd& theta);
DicResult dic(const ExpandedDesign& design, const PosteriorDraws& draws);
DicResult dic(const FitResult& fit, const ExpandedDesign& design, int samples, std::uint64_t seed);

struct PredictionTarget {
  V2d location;
  int year = 0;
  Covariates covariates;
};

/// Gaussian conditional of the latent value at one target given the knot field.
struct LatentConditional {
  Vxd weights;  ///< applied to the stacked knot field
  double variance = 0.0;
};

/// Exact conditioning of u(location, year) on the knot field under the
/// separable covariance at `hyper`.
LatentConditional latent_conditional(const DesignLayout& layout, const Hyperparameters& hyper, const V2d& location,
                                     int year);

struct CategoryQuantiles {
  std::size_t target = 0;
  int category = 0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

struct PredictionResult {
  std::vector<CategoryQuantiles> rows;
  double max_sum_error = 0.0;  ///< max |sum(pi) - 1| over all draws and targets
};

PredictionResult predict(const DesignLayout& layout, const std::vector<Hyperparameters>& grid_hyper,
                         const PosteriorDraws& draws, const std::vector<PredictionTarget>& targets,
                         std::uint64_t seed);

/// Covariates of a target, centred with the layout's study midpoint.
Covariates target_covariates(const DesignLayout& layout, int year, Habitat habitat, double access_km, int ctrl = 0,
                             double duration = 0.0);

/// Type-7 sample quantile of `values` (sorted in place).
double sample_quantile(std::vector<double>& values, double prob);

/// SplitMix64 step, used to derive independent seed streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace seqord
