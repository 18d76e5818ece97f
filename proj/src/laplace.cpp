#include "seqord/laplace.hpp"

#include <cmath>
#include <numbers>

namespace seqord {

Vxd Hyperparameters::to_internal() const {
  Vxd out(dimension());
  if (variant == Variant::M1) return out;
  out[0] = std::log(sigma);
  out[1] = std::log(range);
  if (variant == Variant::M3) out[2] = 2.0 * std::atanh(rho);
  return out;
}

Hyperparameters Hyperparameters::from_internal(const Vxd& internal, Variant variant) {
  if (internal.size() != dimension(variant)) throw std::invalid_argument("hyperparameter dimension mismatch");
  Hyperparameters h;
  h.variant = variant;
  if (variant == Variant::M1) return h;
  h.sigma = std::exp(internal[0]);
  h.range = std::exp(internal[1]);
  if (variant == Variant::M3) h.rho = std::tanh(0.5 * internal[2]);
  return h;
}

double Hyperparameters::log_jacobian() const {
  if (variant == Variant::M1) return 0.0;
  double out = std::log(sigma) + std::log(range);
  if (variant == Variant::M3) out += std::log(0.5 * (1.0 - rho * rho));
  return out;
}

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// -d^2/d eta^2 log(1 - exp(-mu)), mu = exp(eta).
double cloglog_event_weight(double mu) {
  if (mu < 1e-3) {
    const double num = 0.5 + mu * (1.0 / 3.0 + mu * (1.0 / 8.0 + mu / 30.0));
    const double den = 1.0 + mu * (0.5 + mu * (1.0 / 6.0 + mu / 24.0));
    return mu * num / (den * den);
  }
  if (mu <= 1.0) {
    const double em1 = std::expm1(mu);
    return mu * (mu * (em1 + 1.0) - em1) / (em1 * em1);
  }
  const double e = std::exp(-mu);
  const double one_minus = -std::expm1(-mu);
  return mu * (mu * e - e + e * e) / (one_minus * one_minus);
}

// log Phi(x) and the inverse Mills ratio phi(x) / Phi(x).
void probit_tail(double x, double& log_cdf, double& mills) {
  if (x > -37.0) {
    const double cdf = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    const double log_pdf = -0.5 * x * x - kLogSqrt2Pi;
    log_cdf = std::log(cdf);
    mills = std::exp(log_pdf - log_cdf);
    return;
  }
  const double r = 1.0 / (x * x);
  const double series = 1.0 - r + 3.0 * r * r;
  log_cdf = -0.5 * x * x - kLogSqrt2Pi - std::log(-x) + std::log(series);
  mills = -x / series;
}

}  // namespace

RowTerms bernoulli_row(double y, double eta, Link link) {
  RowTerms t;
  switch (link) {
    case Link::logit: {
      const double p = 1.0 / (1.0 + std::exp(-eta));
      t.loglik = y > 0.5 ? -softplus(-eta) : -softplus(eta);
      t.score = y - p;
      t.weight = t.fisher = p * (1.0 - p);
      break;
    }
    case Link::cloglog: {
      const double mu = std::exp(eta);
      t.fisher = std::isinf(mu) ? 0.0 : mu * mu / std::expm1(mu);
      if (!std::isfinite(t.fisher)) t.fisher = 0.0;
      if (y > 0.5) {
        if (mu < 1e-8) {
          t.loglik = eta - 0.5 * mu;
          t.score = 1.0 - 0.5 * mu;
        } else {
          t.loglik = std::log(-std::expm1(-mu));
          t.score = std::isinf(std::expm1(mu)) ? 0.0 : mu / std::expm1(mu);
        }
        t.weight = cloglog_event_weight(mu);
      } else {
        t.loglik = -mu;
        t.score = -mu;
        t.weight = mu;
      }
      break;
    }
    case Link::probit: {
      double log_cdf = 0.0, mills = 0.0;
      if (y > 0.5) {
        probit_tail(eta, log_cdf, mills);
        t.loglik = log_cdf;
        t.score = mills;
        t.weight = mills * (eta + mills);
      } else {
        probit_tail(-eta, log_cdf, mills);
        t.loglik = log_cdf;
        t.score = -mills;
        t.weight = mills * (mills - eta);
      }
      const double cdf = 0.5 * std::erfc(-eta / std::numbers::sqrt2);
      const double pdf = std::exp(-0.5 * eta * eta - kLogSqrt2Pi);
      const double denom = cdf * (1.0 - cdf);
      t.fisher = denom > 0.0 ? pdf * pdf / denom : t.weight;
      break;
    }
  }
  return t;
}

RowLikelihood bernoulli_likelihood(Link link) {
  return [link](double y, double eta) { return bernoulli_row(y, eta, link); };
}

LatentPrior latent_prior(const DesignLayout& layout, const Hyperparameters& hyper, double coef_variance,
                         Eigen::Index coef_dim) {
  if (hyper.variant != layout.variant) throw std::invalid_argument("hyperparameters do not match the design variant");
  if (!(coef_variance > 0.0)) throw std::invalid_argument("coefficient prior variance must be positive");
  const Eigen::Index p = coef_dim < 0 ? layout.coef_dim() : coef_dim;
  const Eigen::Index m = layout.latent_dim();
  LatentPrior prior;
  prior.precision = Mxd::Zero(p + m, p + m);
  prior.precision.topLeftCorner(p, p).diagonal().setConstant(1.0 / coef_variance);
  prior.log_det_cov = static_cast<double>(p) * std::log(coef_variance);
  if (m == 0) return prior;

  const KnotSet<double> knots(layout.knots);
  const Mxd H = build_H(knots, MaternParams<double>(hyper.sigma, hyper.range));
  const Eigen::LLT<Mxd> llt(H);
  const Mxd H_inv = llt.solve(Mxd::Identity(H.rows(), H.cols()));
  const double log_det_H = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  if (layout.variant == Variant::M2) {
    prior.precision.bottomRightCorner(m, m) = H_inv;
    prior.log_det_cov += log_det_H;
  } else {
    const ARParams<double> ar(hyper.rho);
    prior.precision.bottomRightCorner(m, m) = kronecker(ar1_precision(layout.times, ar), H_inv);
    prior.log_det_cov += -static_cast<double>(knots.size()) * std::log1p(-hyper.rho * hyper.rho) +
                         static_cast<double>(layout.times) * log_det_H;
  }
  return prior;
}

Vxd GaussianApprox::marginal_variances(Eigen::Index count) const {
  const Eigen::Index d = chol_lower.rows();
  count = std::min(count, d);
  Mxd E = Mxd::Identity(d, count);
  chol_lower.triangularView<Eigen::Lower>().solveInPlace(E);
  return E.colwise().squaredNorm().transpose();
}

LaplaceProblem::LaplaceProblem(const ExpandedDesign& design, const Hyperparameters& hyper, LaplaceOptions options)
    : design_(design), hyper_(hyper), options_(std::move(options)),
      prior_(latent_prior(design.layout, hyper, options_.coef_variance, design.coef_dim())) {
  if (!options_.likelihood) options_.likelihood = bernoulli_likelihood(design.layout.link);
}

double LaplaceProblem::log_likelihood(const Vxd& theta) const {
  const Eigen::Index p = design_.coef_dim();
  const Vxd eta = linear_predictor(design_, theta.head(p), theta.tail(design_.latent_dim()));
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += options_.likelihood(design_.y[i], eta[i]).loglik;
  return ll;
}

Objective LaplaceProblem::evaluate(const Vxd& theta, bool with_hessian) const {
  const Eigen::Index p = design_.coef_dim();
  const Eigen::Index m = design_.latent_dim();
  const Eigen::Index d = p + m;
  if (theta.size() != d) throw std::invalid_argument("neg_log_joint: theta has the wrong dimension");

  const Vxd eta = linear_predictor(design_, theta.head(p), theta.tail(m));
  const Eigen::Index n = eta.size();
  Vxd score(n), weight(n);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowTerms t = options_.likelihood(design_.y[i], eta[i]);
    ll += t.loglik;
    score[i] = t.score;
    // Expected information wherever the observed curvature is not usable.
    weight[i] = t.weight >= 0.0 && std::isfinite(t.weight) ? t.weight : t.fisher;
  }

  const Vxd prior_grad = prior_.precision * theta;
  Objective out;
  out.value = -ll + 0.5 * theta.dot(prior_grad) + 0.5 * prior_.log_det_cov +
              0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  out.gradient = prior_grad;
  out.gradient.head(p) -= design_.X.transpose() * score;
  if (m > 0) out.gradient.tail(m) -= design_.W.transpose() * score;
  if (!std::isfinite(out.value) || !out.gradient.allFinite())
    throw std::overflow_error("neg_log_joint: non-finite value");

  if (with_hessian) {
    out.hessian = prior_.precision;
    const Mxd WX = weight.asDiagonal() * design_.X;
    out.hessian.topLeftCorner(p, p) += design_.X.transpose() * WX;
    if (m > 0) {
      const Mxd cross = design_.W.transpose() * WX;
      out.hessian.bottomLeftCorner(m, p) += cross;
      out.hessian.topRightCorner(p, m) += cross.transpose();
      const SpMxd weighted = weight.asDiagonal() * design_.W;
      const Eigen::SparseMatrix<double> block = design_.W.transpose() * weighted;
      for (int col = 0; col < block.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(block, col); it; ++it)
          out.hessian(p + it.row(), p + it.col()) += it.value();
    }
  }
  return out;
}

GaussianApprox LaplaceProblem::find_mode(const Vxd& init) const {
  const Eigen::Index d = dim();
  Vxd theta = init.size() == d ? init : Vxd::Zero(d);
  GaussianApprox out;
  Objective obj = evaluate(theta);
  for (int it = 0;; ++it) {
    out.iterations = it;
    out.grad_norm = obj.gradient.size() ? obj.gradient.lpNorm<Eigen::Infinity>() : 0.0;
    const bool flat = out.grad_norm / std::max(1.0, std::abs(obj.value)) < options_.tolerance;
    if (d == 0) {
      out.converged = true;
      break;
    }
    Eigen::LLT<Mxd> llt(obj.hessian);
    if (llt.info() != Eigen::Success) break;
    const Vxd step = -llt.solve(obj.gradient);
    // Converged once both the scaled gradient and the Newton step are below tolerance.
    if (flat && step.lpNorm<Eigen::Infinity>() < options_.tolerance) {
      out.converged = true;
      break;
    }
    if (it >= options_.max_iterations) {
      out.converged = flat;
      break;
    }
    const double slope = obj.gradient.dot(step);
    double t = 1.0;
    bool moved = false;
    for (int halvings = 0; halvings < 40; ++halvings, t *= 0.5) {
      const Vxd trial = theta + t * step;
      double value;
      try {
        value = evaluate(trial, false).value;
      } catch (const std::overflow_error&) {
        continue;
      }
      if (value <= obj.value + 1e-4 * t * slope && (value < obj.value || t == 1.0)) {
        theta = trial;
        moved = true;
        break;
      }
    }
    if (!moved) {
      // No representable decrease left; accept if the Newton decrement is negligible.
      out.converged = flat || -slope < 1e-12 * std::max(1.0, std::abs(obj.value));
      break;
    }
    obj = evaluate(theta);
  }
  Eigen::LLT<Mxd> llt(obj.hessian);
  if (llt.info() != Eigen::Success) {
    out.converged = false;
    out.chol_lower = Mxd::Zero(d, d);
  } else {
    out.chol_lower = llt.matrixL();
    out.log_det_precision = 2.0 * out.chol_lower.diagonal().array().log().sum();
  }
  out.mode = std::move(theta);
  out.objective = obj.value;
  return out;
}

double LaplaceProblem::log_marginal(const GaussianApprox& approx) const {
  return -approx.objective + 0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) -
         0.5 * approx.log_det_precision;
}

Objective neg_log_joint(const Vxd& theta, const Hyperparameters& hyper, const ExpandedDesign& design,
                        const LaplaceOptions& options) {
  return LaplaceProblem(design, hyper, options).evaluate(theta);
}

GaussianApprox find_mode(const Hyperparameters& hyper, const ExpandedDesign& design, const Vxd& init,
                         const LaplaceOptions& options) {
  return LaplaceProblem(design, hyper, options).find_mode(init);
}

double log_laplace_marginal(const Hyperparameters& hyper, const ExpandedDesign& design, const LaplaceOptions& options) {
  const LaplaceProblem problem(design, hyper, options);
  const GaussianApprox approx = problem.find_mode();
  if (!approx.converged)
    throw ConvergenceError("Laplace mode search did not converge (gradient norm " + std::to_string(approx.grad_norm) +
                           " after " + std::to_string(approx.iterations) + " iterations)");
  return problem.log_marginal(approx);
}

}  // namespace seqord
