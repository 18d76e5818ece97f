#include <catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "seqord/simulate.hpp"

using namespace seqord;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// One latent scalar with prior N(0, 1) observed once as y = 1 through a logit link.
ExpandedDesign single_bernoulli() {
  return fixture::manual_design(Mxd(1, 0), Vxd::Ones(1), {0}, Vxd::Ones(1), Link::logit, Variant::M2);
}

Hyperparameters unit_sigma() {
  Hyperparameters h;
  h.variant = Variant::M2;
  h.sigma = 1.0;
  h.range = 1.0;
  return h;
}

}  // namespace

TEST_CASE("hyperparameter coordinates", "[laplace]") {
  Hyperparameters h;
  h.variant = Variant::M3;
  h.sigma = 0.7;
  h.range = 12.0;
  h.rho = -0.83;
  const auto back = Hyperparameters::from_internal(h.to_internal(), Variant::M3);
  CHECK_THAT(back.sigma, WithinRel(h.sigma, 1e-12));
  CHECK_THAT(back.range, WithinRel(h.range, 1e-12));
  CHECK_THAT(back.rho, WithinRel(h.rho, 1e-12));
  CHECK(h.to_internal().size() == 3);
  h.variant = Variant::M1;
  CHECK(h.to_internal().size() == 0);

  // Jacobian against a finite-difference determinant.
  h.variant = Variant::M3;
  const Vxd z = h.to_internal();
  const Mxd J = oracle::fd_jacobian(
      [](const Vxd& v) {
        const auto p = Hyperparameters::from_internal(v, Variant::M3);
        return Vxd((Vxd(3) << p.sigma, p.range, p.rho).finished());
      },
      z, 1e-6);
  CHECK_THAT(h.log_jacobian(), WithinAbs(std::log(std::abs(J.determinant())), 1e-7));
}

TEST_CASE("row likelihood terms", "[laplace]") {
  for (Link link : {Link::cloglog, Link::logit, Link::probit})
    for (double y : {0.0, 1.0})
      for (double eta = -30.0; eta <= 4.0; eta += 0.37) {
        const RowTerms t = bernoulli_row(y, eta, link);
        const double h = 1e-5;
        const double d1 = (bernoulli_row(y, eta + h, link).loglik - bernoulli_row(y, eta - h, link).loglik) / (2 * h);
        const double d2 = (bernoulli_row(y, eta + h, link).score - bernoulli_row(y, eta - h, link).score) / (2 * h);
        CHECK(std::isfinite(t.loglik));
        CHECK(t.weight >= 0.0);
        CHECK(t.fisher >= 0.0);
        CHECK_THAT(t.score, WithinAbs(d1, 1e-6 * (1 + std::abs(d1))));
        CHECK_THAT(t.weight, WithinAbs(-d2, 1e-5 * (1 + std::abs(d2))));
        if (eta > -4.0 && eta < 1.5) {
          const double p = oracle::delta(eta, link);
          CHECK_THAT(t.loglik, WithinAbs(y ? std::log(p) : std::log1p(-p), 1e-11));
        }
      }
  // Far tails stay finite where the clamped probabilities would saturate.
  CHECK(std::isfinite(bernoulli_row(1.0, -800.0, Link::cloglog).loglik));
  CHECK(std::isfinite(bernoulli_row(0.0, 6.0, Link::cloglog).loglik));
  CHECK(std::isfinite(bernoulli_row(1.0, -60.0, Link::probit).loglik));
}

TEST_CASE("objective without data is the Gaussian prior", "[laplace]") {
  auto d = fixture::manual_design(Mxd(0, 2), Vxd::Zero(0), {}, Vxd::Zero(0), Link::logit, Variant::M2);
  const Hyperparameters h = unit_sigma();
  const Objective at0 = neg_log_joint(Vxd::Zero(3), h, d);
  CHECK(at0.gradient.isZero());
  const double want = 0.5 * (2 * std::log(1000.0) + std::log(1.0 + 1e-8)) + 1.5 * std::log(2 * std::numbers::pi);
  CHECK_THAT(at0.value, WithinRel(want, 1e-12));
  const GaussianApprox a = find_mode(h, d);
  CHECK(a.converged);
  CHECK(a.mode.isZero());
  CHECK_THAT(brute_marginal(fixture::manual_design(Mxd(0, 1), Vxd::Zero(0), {}, Vxd::Zero(0), Link::logit,
                                                   Variant::M2),
                            h),
             WithinAbs(0.0, 1e-10));
}

TEST_CASE("gradient and Hessian against finite differences", "[laplace]") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 0.7);
  for (Link link : {Link::cloglog, Link::logit, Link::probit})
    for (int rep = 0; rep < 10; ++rep) {
      const auto inst = fixture::pipeline_instance(rng, link);
      const LaplaceProblem prob(inst.design, inst.hyper);
      Vxd theta(prob.dim());
      for (auto& x : theta) x = n(rng);
      const Objective o = prob.evaluate(theta);
      const Vxd g = oracle::fd_gradient([&](const Vxd& t) { return prob.evaluate(t, false).value; }, theta);
      const Mxd H = oracle::fd_jacobian([&](const Vxd& t) { return prob.evaluate(t, false).gradient; }, theta);
      CHECK(oracle::rel_err(o.gradient, g) < 1e-5);
      CHECK(oracle::rel_err(o.hessian, H) < 1e-4);
    }
}

TEST_CASE("single Bernoulli mode and marginal", "[laplace]") {
  const auto d = single_bernoulli();
  const GaussianApprox a = find_mode(unit_sigma(), d);
  const double want = oracle::bisect([](double u) { return u + 1.0 / (1.0 + std::exp(-u)) - 1.0; }, -2.0, 2.0);
  CHECK_THAT(want, WithinAbs(0.4010, 1e-4));
  // The jitter scales the prior variance by 1 + 1e-8.
  CHECK_THAT(a.mode[0], WithinAbs(want, 1e-7));
  CHECK(a.converged);

  // Symmetry makes the exact marginal one half; one observation leaves the Laplace
  // value about 7e-3 away from it.
  const double brute = brute_marginal(d, unit_sigma());
  CHECK_THAT(brute, WithinAbs(std::log(0.5), 1e-8));
  const double laplace = log_laplace_marginal(unit_sigma(), d);
  CHECK(std::abs(laplace - brute) < 1e-2);
  CHECK(std::abs(laplace - brute) > 1e-3);

  // Flipping y with eta negated leaves the marginal unchanged.
  auto flipped = fixture::manual_design(Mxd(1, 0), -Vxd::Ones(1), {0}, Vxd::Zero(1), Link::logit, Variant::M2);
  CHECK_THAT(brute_marginal(flipped, unit_sigma()), WithinAbs(brute, 1e-10));
}

TEST_CASE("Laplace is exact for a Gaussian pseudo-likelihood", "[laplace]") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n;
  const int rows = 12;
  Mxd X(rows, 2);
  Vxd y(rows), w = -Vxd::Ones(rows);
  std::vector<int> time(rows);
  for (int r = 0; r < rows; ++r) {
    X.row(r) << 1.0, n(rng);
    y[r] = n(rng);
    time[static_cast<std::size_t>(r)] = r % 3;
  }
  auto d = fixture::manual_design(X, w, time, y, Link::logit, Variant::M3, 3);
  Hyperparameters h;
  h.variant = Variant::M3;
  h.sigma = 0.8;
  h.range = 3.0;
  h.rho = 0.6;
  LaplaceOptions opt;
  opt.coef_variance = 4.0;
  opt.likelihood = [](double yy, double eta) {
    const double r = yy - eta;
    return RowTerms{-0.5 * r * r - 0.5 * std::log(2 * std::numbers::pi), r, 1.0, 1.0};
  };
  // y ~ N(0, I + Z S Z') with Z = [X W] and S the joint prior covariance.
  const LaplaceProblem prob(d, h, opt);
  Mxd Z(rows, 5);
  Z << X, Mxd(d.W);
  const Mxd S = prob.prior().precision.inverse();
  const Mxd V = Mxd::Identity(rows, rows) + Z * S * Z.transpose();
  const Eigen::LLT<Mxd> llt(V);
  const double logdet = 2.0 * Mxd(llt.matrixL()).diagonal().array().log().sum();
  const double exact = -0.5 * y.dot(llt.solve(y)) - 0.5 * logdet - 0.5 * rows * std::log(2 * std::numbers::pi);
  CHECK_THAT(log_laplace_marginal(h, d, opt), WithinAbs(exact, 1e-10));
}

TEST_CASE("mode is unique for the logit link", "[laplace]") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int rep = 0; rep < 5; ++rep) {
    const auto inst = fixture::pipeline_instance(rng, Link::logit);
    const GaussianApprox ref = find_mode(inst.hyper, inst.design);
    REQUIRE(ref.converged);
    for (int s = 0; s < 10; ++s) {
      Vxd init(inst.design.dim());
      for (auto& x : init) x = n(rng);
      const GaussianApprox a = find_mode(inst.hyper, inst.design, init);
      CHECK(a.converged);
      CHECK((a.mode - ref.mode).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("Laplace marginal against two-dimensional quadrature", "[laplace]") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 4; ++i) {
    const auto inst = fixture::quadrature_instance(rng, i);
    REQUIRE(inst.design.dim() <= 2);
    const double brute = brute_marginal(inst.design, inst.hyper);
    const double laplace = log_laplace_marginal(inst.hyper, inst.design);
    CHECK(std::abs(laplace - brute) < 1e-3);
  }
  const auto big = fixture::pipeline_instance(rng, Link::logit);
  CHECK_THROWS_AS(brute_marginal(big.design, big.hyper), std::invalid_argument);
}

TEST_CASE("sign reversal leaves the maximised joint density unchanged", "[laplace]") {
  std::mt19937_64 rng(37);
  for (int rep = 0; rep < 5; ++rep) {
    const auto inst = fixture::pipeline_instance(rng, Link::cloglog);
    ExpandedDesign plain = inst.design;
    plain.layout.negate_globals = false;
    const Eigen::Index q = plain.layout.q();
    plain.X.rightCols(Covariates::size) *= -1.0;
    plain.W = -plain.W;
    const GaussianApprox a = find_mode(inst.hyper, inst.design);
    const GaussianApprox b = find_mode(inst.hyper, plain);
    CHECK_THAT(a.objective, WithinAbs(b.objective, 1e-8));
    CHECK((a.mode.head(q) - b.mode.head(q)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.mode.tail(a.mode.size() - q) + b.mode.tail(b.mode.size() - q)).cwiseAbs().maxCoeff() < 1e-6);
  }
}
