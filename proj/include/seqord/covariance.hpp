#pragma once
/** \file
 * Matérn (order 1) spatial covariance on a knot set, the separable AR(1)
 * space-time covariance built from it, and penalised-complexity priors for
 * the marginal standard deviation, effective range and lag-one correlation.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "seqord/types.hpp"

namespace seqord {

/// Matérn smoothness; fixed, not estimated.
inline constexpr double kMaternOrder = 1.0;

template <typename F>
struct MaternParams {
  F sigma;
  F range;  ///< effective range r (km), where correlation drops to about 0.13

  MaternParams(F sigma_, F range_) : sigma(sigma_), range(range_) {
    if (!(sigma >= F(0)) || !(range > F(0))) throw std::invalid_argument("Matérn parameters need sigma >= 0 and range > 0");
  }

  F theta() const { return std::sqrt(F(8) * F(kMaternOrder)) / range; }
};

template <typename F>
struct ARParams {
  F rho;

  explicit ARParams(F rho_) : rho(rho_) {
    if (!(std::abs(rho) < F(1))) throw std::invalid_argument("AR(1) correlation must satisfy |rho| < 1");
  }
};

/// Knot coordinates (easting, northing) in kilometres, one row per knot.
template <typename F>
class KnotSet {
 public:
  using Coords = Eigen::Matrix<F, Eigen::Dynamic, 2>;

  explicit KnotSet(Coords locations) : xy_(std::move(locations)) {
    if (xy_.rows() < 1) throw std::invalid_argument("knot set must not be empty");
    for (Eigen::Index i = 0; i < xy_.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        if (xy_.row(i) == xy_.row(j)) throw std::invalid_argument("knot locations must be pairwise distinct");
  }

  Eigen::Index size() const { return xy_.rows(); }
  const Coords& coords() const { return xy_; }
  V2<F> operator[](Eigen::Index i) const { return xy_.row(i).transpose(); }

 private:
  Coords xy_;
};

/// sigma^2 (theta d) K_1(theta d); sigma^2 at d = 0.
template <typename F>
F matern_cov(F dist, const MaternParams<F>& p) {
  if (dist < F(0)) throw std::domain_error("matern_cov: negative distance");
  const F var = p.sigma * p.sigma;
  if (dist == F(0)) return var;
  const F x = p.theta() * dist;
  if (x > F(700)) return F(0);
  // Gamma(1) 2^0 = 1 for order one.
  return var * x * std::cyl_bessel_k(F(kMaternOrder), x);
}

template <typename F>
F matern_corr(F dist, F range) {
  return matern_cov(dist, MaternParams<F>(F(1), range));
}

/// Relative diagonal jitter: first try, and the largest allowed.
inline constexpr double kJitterStart = 1e-8;
inline constexpr double kJitterMax = 1e-4;

/// Pairwise Matérn covariance at the knots, plus the smallest jitter
/// (1e-8 sigma^2, escalating x10 to 1e-4 sigma^2) that admits a Cholesky factor.
template <typename F>
Mx<F> build_H(const KnotSet<F>& knots, const MaternParams<F>& p) {
  const Eigen::Index k = knots.size();
  Mx<F> H(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    H(i, i) = matern_cov(F(0), p);
    for (Eigen::Index j = 0; j < i; ++j) H(i, j) = H(j, i) = matern_cov((knots[i] - knots[j]).norm(), p);
  }
  const F var = p.sigma * p.sigma;
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10) {
    Mx<F> trial = H;
    trial.diagonal().array() += F(rel) * var;
    Eigen::LLT<Mx<F>> llt(trial);
    if (llt.info() == Eigen::Success) return trial;
  }
  throw std::runtime_error("build_H: covariance not positive definite after jitter escalation (degenerate knots?)");
}

/// Jitter that build_H added to the diagonal.
template <typename F>
F knot_nugget(const Mx<F>& H, const MaternParams<F>& p) {
  return H(0, 0) - p.sigma * p.sigma;
}

/// Omega = H / (1 - rho^2).
template <typename Derived>
auto stationary_cov(const Eigen::MatrixBase<Derived>& H, const ARParams<typename Derived::Scalar>& ar) {
  using F = typename Derived::Scalar;
  return (H / (F(1) - ar.rho * ar.rho)).eval();
}

/// Stationary AR(1) covariance over times, rho^|t-t'| / (1 - rho^2).
template <typename F>
Mx<F> ar1_covariance(int times, const ARParams<F>& ar) {
  if (times < 1) throw std::invalid_argument("need at least one time point");
  Mx<F> A(times, times);
  const F scale = F(1) / (F(1) - ar.rho * ar.rho);
  for (int t = 0; t < times; ++t)
    for (int s = 0; s < times; ++s) A(t, s) = std::pow(ar.rho, std::abs(t - s)) * scale;
  return A;
}

/// Inverse of ar1_covariance: tridiagonal with 1 + rho^2 inside, 1 at the ends, -rho off the diagonal.
template <typename F>
Mx<F> ar1_precision(int times, const ARParams<F>& ar) {
  if (times < 1) throw std::invalid_argument("need at least one time point");
  Mx<F> Q = Mx<F>::Zero(times, times);
  const F r2 = ar.rho * ar.rho;
  for (int t = 0; t < times; ++t) {
    const bool edge = t == 0 || t == times - 1;
    Q(t, t) = times == 1 ? F(1) - r2 : (edge ? F(1) : F(1) + r2);
    if (t + 1 < times) Q(t, t + 1) = Q(t + 1, t) = -ar.rho;
  }
  return Q;
}

template <typename DA, typename DB>
auto kronecker(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
  using F = typename DA::Scalar;
  Mx<F> out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

/// Covariance of the stacked field [u(1); ...; u(T)]: block (t, t') is
/// rho^|t-t'| H / (1 - rho^2).
template <typename F>
Mx<F> joint_spacetime_cov(const KnotSet<F>& knots, int times, const MaternParams<F>& matern, const ARParams<F>& ar) {
  return kronecker(ar1_covariance(times, ar), build_H(knots, matern));
}

enum class PCPriorKind { sd, range2d, cor1 };

/// Penalised-complexity prior fixed by a tail statement:
///   sd:      P(sigma > u) = alpha
///   range2d: P(r < u) = alpha
///   cor1:    P(rho > u) = alpha, base model rho = 1
struct PCPrior {
  PCPriorKind kind;
  double u;
  double alpha;

  PCPrior(PCPriorKind kind_, double u_, double alpha_) : kind(kind_), u(u_), alpha(alpha_) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("PC prior tail probability must lie in (0,1)");
    if (kind == PCPriorKind::cor1) {
      if (!(u > -1.0 && u < 1.0)) throw std::invalid_argument("correlation PC prior threshold must lie in (-1,1)");
      // Attainable only if alpha exceeds the lambda -> 0 limit sqrt((1-u)/2).
      if (!(alpha > std::sqrt((1.0 - u) / 2.0)))
        throw std::invalid_argument("correlation PC prior: tail probability too small for a base model at rho = 1");
    } else if (!(u > 0.0)) {
      throw std::invalid_argument("PC prior threshold must be positive");
    }
  }

  /// Rate of the exponential prior on the distance scale.
  double rate() const {
    switch (kind) {
      case PCPriorKind::sd: return -std::log(alpha) / u;
      case PCPriorKind::range2d: return -std::log(alpha) * u;
      case PCPriorKind::cor1: return cor1_rate();
    }
    return 0.0;
  }

 private:
  // Solve (1 - e^{-l s_u}) / (1 - e^{-l sqrt 2}) = alpha for l, s_u = sqrt(1 - u).
  double cor1_rate() const {
    const double su = std::sqrt(1.0 - u);
    const auto tail = [&](double l) { return -std::expm1(-l * su) / -std::expm1(-l * std::numbers::sqrt2); };
    double lo = 1e-12, hi = 1.0;
    while (tail(hi) < alpha) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (tail(mid) < alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

inline const char* to_string(PCPriorKind kind) {
  switch (kind) {
    case PCPriorKind::sd: return "sd";
    case PCPriorKind::range2d: return "range2d";
    case PCPriorKind::cor1: return "cor1";
  }
  return "?";
}

template <typename F>
F pc_log_density(F value, const PCPrior& prior) {
  const F lambda(prior.rate());
  switch (prior.kind) {
    case PCPriorKind::sd:
      if (!(value >= F(0))) throw std::domain_error("sd PC prior: value must be non-negative");
      return std::log(lambda) - lambda * value;
    case PCPriorKind::range2d:
      if (!(value > F(0))) throw std::domain_error("range PC prior: value must be positive");
      return std::log(lambda) - F(2) * std::log(value) - lambda / value;
    case PCPriorKind::cor1: {
      if (!(value > F(-1) && value < F(1))) throw std::domain_error("correlation PC prior: value must lie in (-1,1)");
      const F dist = std::sqrt(F(1) - value);
      const F norm = -std::expm1(-lambda * std::numbers::sqrt2_v<F>);
      return std::log(lambda) - lambda * dist - std::log(F(2) * dist) - std::log(norm);
    }
  }
  throw std::invalid_argument("pc_log_density: unknown prior kind");
}

/// Greedy farthest-point subset of `points` of size at most `max_count`,
/// seeded at the first point. Returns row indices in selection order.
template <typename F>
std::vector<Eigen::Index> farthest_point_subset(const Eigen::Matrix<F, Eigen::Dynamic, 2>& points, Eigen::Index max_count) {
  const Eigen::Index n = points.rows();
  std::vector<Eigen::Index> chosen;
  if (n == 0 || max_count <= 0) return chosen;
  Vx<F> nearest = Vx<F>::Constant(n, std::numeric_limits<F>::infinity());
  Eigen::Index next = 0;
  while (static_cast<Eigen::Index>(chosen.size()) < std::min(n, max_count)) {
    chosen.push_back(next);
    for (Eigen::Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], (points.row(i) - points.row(next)).norm());
    nearest.maxCoeff(&next);
    if (nearest[next] == F(0)) break;
  }
  return chosen;
}

}  // namespace seqord
