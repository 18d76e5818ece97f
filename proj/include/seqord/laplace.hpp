#pragma once
/** \file
 * Gaussian (Laplace) approximation of the joint posterior of coefficients
 * and latent knot effects at fixed covariance hyperparameters.
 *
 * The unknown vector is theta = [beta; u] with beta ~ N(0, v I) and
 * u ~ N(0, Sigma(hyper)), where Sigma is H for the spatial-only variant and
 * the separable AR(1) x Matérn covariance for the space-time variant. The
 * likelihood is a product of independent binary rows.
 */

#include <functional>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "seqord/design.hpp"

namespace seqord {

/// Mode search or integration failed to converge.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// sigma, range, rho with the unconstrained coordinates used for optimisation:
/// (log sigma, log r, log((1 + rho) / (1 - rho))).
struct Hyperparameters {
  Variant variant = Variant::M1;
  double sigma = 0.0;
  double range = 0.0;
  double rho = 0.0;

  static int dimension(Variant v) { return v == Variant::M1 ? 0 : (v == Variant::M2 ? 2 : 3); }
  int dimension() const { return dimension(variant); }

  Vxd to_internal() const;
  static Hyperparameters from_internal(const Vxd& internal, Variant variant);
  /// log |d(sigma, r, rho) / d(internal)|.
  double log_jacobian() const;
};

/// Log-density of one binary row and its first two derivatives in eta.
struct RowTerms {
  double loglik = 0.0;
  double score = 0.0;   ///< d loglik / d eta
  double weight = 0.0;  ///< -d^2 loglik / d eta^2 (observed)
  double fisher = 0.0;  ///< expected information in eta
};

using RowLikelihood = std::function<RowTerms(double y, double eta)>;

/// Bernoulli row with delta = g^{-1}(eta); log-probabilities are evaluated
/// in closed forms that stay finite without clamping.
RowTerms bernoulli_row(double y, double eta, Link link);
RowLikelihood bernoulli_likelihood(Link link);

/// Gaussian prior on theta = [beta; u] at fixed hyperparameters.
struct LatentPrior {
  Mxd precision;
  double log_det_cov = 0.0;
};

/// `coef_dim` overrides the layout's coefficient count when non-negative.
LatentPrior latent_prior(const DesignLayout& layout, const Hyperparameters& hyper, double coef_variance,
                         Eigen::Index coef_dim = -1);

struct Objective {
  double value = 0.0;
  Vxd gradient;
  Mxd hessian;  ///< empty unless requested
};

struct GaussianApprox {
  Vxd mode;
  Mxd chol_lower;  ///< L with L L' = precision at the mode
  double log_det_precision = 0.0;
  double objective = 0.0;  ///< negative log joint at the mode
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;

  /// Marginal variances, diag(precision^{-1}), for the first `count` entries.
  Vxd marginal_variances(Eigen::Index count) const;
};

struct LaplaceOptions {
  double coef_variance = 1000.0;
  RowLikelihood likelihood;  ///< defaults to the design's link
  int max_iterations = 100;
  double tolerance = 1e-8;
};

/// Negative log joint density -log p(y | theta) - log p(theta) at fixed
/// hyperparameters, assembled once per (design, hyper).
class LaplaceProblem {
 public:
  LaplaceProblem(const ExpandedDesign& design, const Hyperparameters& hyper, LaplaceOptions options = {});

  Eigen::Index dim() const { return design_.dim(); }
  const LatentPrior& prior() const { return prior_; }

  Objective evaluate(const Vxd& theta, bool with_hessian = true) const;
  /// Damped Newton from `init` (zero when empty).
  GaussianApprox find_mode(const Vxd& init = {}) const;
  /// log p(y | hyper) ~ -f(mode) + (d/2) log 2 pi - (1/2) log det(precision).
  double log_marginal(const GaussianApprox& approx) const;
  double log_likelihood(const Vxd& theta) const;

 private:
  const ExpandedDesign& design_;
  Hyperparameters hyper_;
  LaplaceOptions options_;
  LatentPrior prior_;
};

Objective neg_log_joint(const Vxd& theta, const Hyperparameters& hyper, const ExpandedDesign& design,
                        const LaplaceOptions& options = {});
GaussianApprox find_mode(const Hyperparameters& hyper, const ExpandedDesign& design, const Vxd& init = {},
                         const LaplaceOptions& options = {});
/// Throws ConvergenceError if the inner mode search fails.
double log_laplace_marginal(const Hyperparameters& hyper, const ExpandedDesign& design,
                            const LaplaceOptions& options = {});

}  // namespace seqord
