#pragma once
// Independent reference computations shared by the unit and acceptance tests.
// These deliberately avoid the library's own numerics where practical.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>

#include "seqord/ordinal.hpp"

namespace oracle {

inline double delta(double eta, seqord::Link link) {
  switch (link) {
    case seqord::Link::cloglog: return 1.0 - std::exp(-std::exp(eta));
    case seqord::Link::logit: return 1.0 / (1.0 + std::exp(-eta));
    case seqord::Link::probit: return 0.5 * std::erfc(-eta / std::sqrt(2.0));
  }
  return 0.0;
}

// P(z) = delta_z prod_{c<z} (1 - delta_c); the top category has no stopping factor.
inline double truncated_multinomial(int z, const std::vector<double>& d) {
  double p = 1.0;
  for (int c = 1; c < z; ++c) p *= 1.0 - d[c - 1];
  if (z <= static_cast<int>(d.size())) p *= d[z - 1];
  return p;
}

// Grouped Cox probabilities by differencing the cumulative distribution.
inline std::vector<double> ph_probs(const std::vector<double>& beta_cum, double g) {
  std::vector<double> cdf;
  for (double b : beta_cum) cdf.push_back(1.0 - std::exp(-std::exp(b - g)));
  cdf.push_back(1.0);
  std::vector<double> pi(cdf.size());
  for (std::size_t l = 0; l < cdf.size(); ++l) pi[l] = cdf[l] - (l ? cdf[l - 1] : 0.0);
  return pi;
}

inline double matern(double d, double sigma, double range) {
  if (d == 0.0) return sigma * sigma;
  const double x = std::sqrt(8.0) / range * d;
  return sigma * sigma * x * boost::math::cyl_bessel_k(1, x);
}

// Covariance of stacked [u(1); ...; u(T)] by propagating u(t) = rho u(t-1) + e(t).
inline Eigen::MatrixXd ar1_propagated(const Eigen::MatrixXd& H, double rho, int T) {
  const Eigen::Index k = H.rows();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(k * T, k * T);
  S.topLeftCorner(k, k) = H / (1.0 - rho * rho);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < t; ++s) {
      const Eigen::MatrixXd c = rho * S.block(k * (t - 1), k * s, k, k);
      S.block(k * t, k * s, k, k) = c;
      S.block(k * s, k * t, k, k) = c.transpose();
    }
    S.block(k * t, k * t, k, k) = rho * rho * S.block(k * (t - 1), k * (t - 1), k, k) + H;
  }
  return S;
}

inline double bisect(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-14) {
  double flo = f(lo);
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    J.col(i) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

// Relative error with an absolute floor for entries near zero.
inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want, double floor = 1.0) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(floor, want.cwiseAbs().maxCoeff());
}

}  // namespace oracle
