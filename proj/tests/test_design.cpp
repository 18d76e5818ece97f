#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "seqord/design.hpp"
#include "seqord/simulate.hpp"

using namespace seqord;
using namespace std::chrono;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Observation obs(const std::string& site, double x, double y, int year, int score, Habitat h = Habitat::grassland,
                double access = 1.0) {
  return Observation{site, V2d(x, y), year, "weed", score, h, access};
}

}  // namespace

TEST_CASE("dates and control covariates", "[design]") {
  CHECK(format_date(parse_date("2020-02-29")) == "2020-02-29");
  CHECK_THROWS_AS(parse_date("2021-02-29"), DataError);
  CHECK_THROWS_AS(parse_date("2021/01/01"), DataError);
  CHECK_THROWS_AS(parse_date("2021-01-01x"), DataError);

  const std::vector<ControlEvent> one{{"weed", "A", parse_date("2020-06-01")}};
  const auto c1 = control_covariates("weed", "A", parse_date("2021-06-01"), one);
  CHECK(c1.exposed == 1);
  CHECK_THAT(c1.years, WithinAbs(1.0, 1e-15));

  const auto none = control_covariates("weed", "A", parse_date("2021-06-01"), {});
  CHECK(none.exposed == 0);
  CHECK(none.years == 0.0);

  const std::vector<ControlEvent> two{{"weed", "A", parse_date("2019-01-01")}, {"weed", "A", parse_date("2020-01-01")}};
  const auto c2 = control_covariates("weed", "A", reference_date_for(2020, July / 1), two);
  CHECK(c2.exposed == 1);
  CHECK_THAT(c2.years, WithinAbs(0.4986, 5e-5));

  // Later events, other sites and other species are ignored; so is an event on the reference day.
  const std::vector<ControlEvent> noise{{"weed", "A", parse_date("2020-07-01")},
                                        {"weed", "B", parse_date("2020-03-01")},
                                        {"other", "A", parse_date("2020-03-01")},
                                        {"weed", "A", parse_date("2021-01-01")}};
  CHECK(control_covariates("weed", "A", parse_date("2020-07-01"), noise).exposed == 0);
  CHECK_THROWS_AS(reference_date_for(2021, February / 29), DataError);
}

TEST_CASE("design rows follow the sign-reversed global structure", "[design]") {
  ModelSpec spec = ModelSpec::defaults(5);
  spec.variant = Variant::M3;
  const std::vector<ControlEvent> events{{"weed", "A", parse_date("2020-04-20")}};
  const auto d = build_design({obs("A", 1.0, 2.0, 2020, 3, Habitat::forest, 0.2)}, events, spec);
  const auto ctrl = control_covariates("weed", "A", parse_date("2020-07-01"), events);
  REQUIRE(d.rows() == 3);
  CHECK(d.y == (Vxd(3) << 0, 0, 1).finished());
  Vxd row(9);
  row << 0, 1, 0, 0, -1, -ctrl.years, 0, -1, -std::log(0.2);
  CHECK((d.X.row(1).transpose() - row).cwiseAbs().maxCoeff() < 1e-15);
  for (int r = 0; r < 3; ++r) {
    CHECK(d.X(r, r) == 1.0);
    CHECK(d.X.row(r).tail(5) == d.X.row(0).tail(5));
    CHECK(d.W.coeff(r, 0) == -1.0);
    CHECK(d.row_obs[static_cast<std::size_t>(r)] == 0);
    CHECK(d.row_cat[static_cast<std::size_t>(r)] == r + 1);
  }

  const auto top = build_design({obs("A", 1.0, 2.0, 2020, 5)}, {}, spec);
  CHECK(top.rows() == 4);
  CHECK(top.y.isZero());

  spec.negate_globals = false;
  const auto plain = build_design({obs("A", 1.0, 2.0, 2020, 3, Habitat::forest, 0.2)}, events, spec);
  CHECK(plain.X.rightCols(5) == -d.X.rightCols(5));
  CHECK(plain.W.coeff(0, 0) == 1.0);
}

TEST_CASE("latent incidence per variant", "[design]") {
  const std::vector<Observation> data{obs("A", 0, 0, 2001, 2), obs("B", 3, 0, 2001, 4), obs("A", 0, 0, 2003, 1),
                                      obs("A", 0, 0, 2003, 2), obs("C", 0, 3, 2002, 5)};
  ModelSpec spec = ModelSpec::defaults(5);
  for (Variant v : {Variant::M1, Variant::M2, Variant::M3}) {
    spec.variant = v;
    const auto d = build_design(data, {}, spec);
    Eigen::Index n = 0;
    for (const auto& o : data) n += std::min(o.score, 4);
    CHECK(d.rows() == n);
    CHECK(d.layout.knot_count() == 3);
    CHECK(d.layout.year_center == 2002.0);
    const Mxd W = Mxd(d.W);
    if (v == Variant::M1) {
      CHECK(d.latent_dim() == 0);
      continue;
    }
    CHECK(d.latent_dim() == (v == Variant::M2 ? 3 : 9));
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const auto j = static_cast<std::size_t>(d.row_obs[static_cast<std::size_t>(r)]);
      const int t = v == Variant::M3 ? data[j].year - 2001 : 0;
      CHECK(W.row(r).sum() == -1.0);
      CHECK(W(r, t * 3 + d.obs_knot[j]) == -1.0);
    }
    // Repeat visits at one site-year share a latent column.
    CHECK(d.obs_knot[2] == d.obs_knot[3]);
    CHECK(d.obs_time[2] == d.obs_time[3]);
  }
}

TEST_CASE("design validation", "[design]") {
  const ModelSpec spec = ModelSpec::defaults(5);
  CHECK_THROWS_AS(build_design({}, {}, spec), DataError);
  CHECK_THROWS_AS(build_design({obs("A", 0, 0, 2001, 6)}, {}, spec), DataError);
  CHECK_THROWS_AS(build_design({obs("A", 0, 0, 2001, 0)}, {}, spec), DataError);
  CHECK_THROWS_AS(build_design({obs("", 0, 0, 2001, 1)}, {}, spec), DataError);
  CHECK_THROWS_AS(build_design({obs("A", 0, 0, 2001, 1), obs("A", 1, 0, 2002, 1)}, {}, spec), DataError);
  auto other = obs("B", 1, 1, 2001, 1);
  other.species = "other";
  CHECK_THROWS_AS(build_design({obs("A", 0, 0, 2001, 1), other}, {}, spec), DataError);

  // Access at zero is floored before the log.
  const auto d = build_design({obs("A", 0, 0, 2001, 1, Habitat::grassland, 0.0)}, {}, spec);
  CHECK_THAT(d.X(0, 8), WithinAbs(-std::log(kMinAccessKm), 1e-12));
}

TEST_CASE("knot thinning maps observations to the nearest knot", "[design]") {
  std::vector<Observation> data;
  for (int i = 0; i < 10; ++i) data.push_back(obs("S" + std::to_string(i), i, 0.0, 2001, 1 + i % 5));
  ModelSpec spec = ModelSpec::defaults(5);
  spec.max_knots = 4;
  const auto d = build_design(data, {}, spec);
  CHECK(d.layout.knot_count() == 4);
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double mine = (d.layout.knots.row(d.obs_knot[j]).transpose() - data[j].location).norm();
    for (int k = 0; k < 4; ++k) CHECK(mine <= (d.layout.knots.row(k).transpose() - data[j].location).norm());
  }
}

TEST_CASE("linear predictor and grouped likelihood", "[design]") {
  GroundTruth truth;
  truth.sites = GroundTruth::grid_sites(6, 10.0, 3);
  truth.years = 3;
  truth.obs_per_year = 30;
  truth.beta_cuts = (Vxd(4) << -1.0, -0.3, 0.2, 0.6).finished();
  truth.beta_global = (Vxd(5) << -0.4, 0.3, 0.2, 0.5, -0.3).finished();
  truth.control_rate = 0.4;
  const SimulatedData sim = simulate_dataset(truth);
  ModelSpec spec = ModelSpec::defaults(5);
  const auto d = build_design(sim.observations, sim.controls, spec);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.3);
  Vxd beta(9), u(d.latent_dim());
  for (auto& x : beta) x = n(rng);
  for (auto& x : u) x = n(rng);
  CHECK((linear_predictor(d, beta.cwiseProduct((Vxd(9) << 1, 1, 1, 1, 0, 0, 0, 0, 0).finished()),
                          Vxd::Zero(u.size())) -
         d.X.leftCols(4) * beta.head(4))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  const Vxd eta = linear_predictor(d, beta, u);
  const int k = d.layout.knot_count();
  double grouped = 0.0;
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    const auto j = static_cast<std::size_t>(d.row_obs[static_cast<std::size_t>(r)]);
    const int c = d.row_cat[static_cast<std::size_t>(r)];
    const auto& x = d.obs_covariates[j];
    const double hand = beta[c - 1] - (x.ctrl * beta[4] + x.duration * beta[5] + x.year_centered * beta[6] +
                                       x.forest * beta[7] + x.log_access * beta[8]) -
                        u[d.obs_time[j] * k + d.obs_knot[j]];
    CHECK_THAT(eta[r], WithinAbs(hand, 1e-14));
  }
  Eigen::Index row = 0;
  for (std::size_t j = 0; j < d.scores.size(); ++j) {
    std::vector<double> delta;
    for (int c = 0; c < std::min(d.scores[j], 4); ++c) delta.push_back(oracle::delta(eta[row++], Link::cloglog));
    grouped += std::log(oracle::truncated_multinomial(d.scores[j], delta));
  }
  CHECK_THAT(ordinal_loglik(d, beta, u), WithinRel(grouped, 1e-12));

  // Doubling a covariate value doubles its contribution.
  auto twice = sim.observations;
  for (auto& o : twice) o.access_km = o.access_km * o.access_km;
  const auto d2 = build_design(twice, sim.controls, spec);
  CHECK((d2.X.col(8) - 2.0 * d.X.col(8)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Gompertz decomposition", "[design]") {
  const ARParams<double> ar(0.5);
  Mxd u(2, 4);
  u << 0.1, 0.3, -0.2, 0.4, 1.0, 0.5, 0.2, -0.1;
  const auto flat = gompertz_decompose(u, Mxd::Zero(2, 4), ar, LatentSign::population);
  CHECK(flat.log_xi == u);
  CHECK(flat.density_dependence == -0.5);
  CHECK(gompertz_decompose(u, Mxd::Zero(2, 4), ar, LatentSign::reversed).log_xi == -u);

  const auto geo = gompertz_decompose(Mxd::Zero(1, 3), Mxd::Constant(1, 3, 2.0), ar, LatentSign::population);
  CHECK_THAT(geo.nu_dot(0, 0), WithinAbs(2.0, 1e-15));
  CHECK_THAT(geo.nu_dot(0, 1), WithinAbs(3.0, 1e-15));
  CHECK_THAT(geo.nu_dot(0, 2), WithinAbs(3.5, 1e-15));
  CHECK_THROWS(gompertz_decompose(u, Mxd::Zero(2, 3), ar, LatentSign::population));
  CHECK_THROWS(gompertz_decompose(Mxd(2, 0), Mxd(2, 0), ar, LatentSign::population));

  GroundTruth truth;
  truth.sites = GroundTruth::grid_sites(5, 10.0, 1);
  truth.ar = ARParams<double>(0.8);
  const Mxd field = simulate_field(truth, 6, 99);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  Mxd effect(5, 6);
  for (auto& x : effect.reshaped()) x = n(rng);
  const Mxd nu = intrinsic_growth(effect, truth.ar);
  const auto g = gompertz_decompose(field, nu, truth.ar, LatentSign::population);
  CHECK((g.log_xi - (field + effect)).cwiseAbs().maxCoeff() < 1e-10);
  for (int t = 1; t < 6; ++t) {
    const Vxd resid = g.log_xi.col(t) - truth.ar.rho * g.log_xi.col(t - 1) - nu.col(t);
    const Vxd innovation = field.col(t) - truth.ar.rho * field.col(t - 1);
    CHECK((resid - innovation).cwiseAbs().maxCoeff() < 1e-10);
  }
}
