#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "seqord/simulate.hpp"

using namespace seqord;
using Catch::Matchers::WithinAbs;

namespace {

GroundTruth base_truth() {
  GroundTruth t;
  t.sites = GroundTruth::grid_sites(10, 10.0, 2);
  t.years = 3;
  t.obs_per_year = 50;
  t.beta_cuts = (Vxd(4) << -1.0, -0.5, 0.0, 0.5).finished();
  t.beta_global = (Vxd(5) << -0.5, 0.3, 0.2, 0.6, -0.3).finished();
  return t;
}

std::array<int, 5> counts(const std::vector<Observation>& obs) {
  std::array<int, 5> c{};
  for (const auto& o : obs) ++c[static_cast<std::size_t>(o.score - 1)];
  return c;
}

}  // namespace

TEST_CASE("latent field simulation", "[simulate]") {
  GroundTruth t = base_truth();
  t.sites = GroundTruth::grid_sites(3, 6.0, 1);

  t.matern = MaternParams<double>(0.0, 5.0);
  CHECK(simulate_field(t, 4, 1).isZero());

  t.matern = MaternParams<double>(1.0, 5.0);
  t.ar = ARParams<double>(0.0);
  const int T = 40000;
  const Mxd indep = simulate_field(t, T, 3);
  for (int i = 0; i < 3; ++i) {
    const Vxd a = indep.row(i).head(T - 1).transpose(), b = indep.row(i).tail(T - 1).transpose();
    const double corr = (a.array() - a.mean()).matrix().dot((b.array() - b.mean()).matrix()) /
                        std::sqrt((a.array() - a.mean()).square().sum() * (b.array() - b.mean()).square().sum());
    CHECK(std::abs(corr) < 4.0 / std::sqrt(double(T)));
  }

  t.ar = ARParams<double>(0.5);
  const Mxd chain = simulate_field(t, T, 4);
  for (int i = 0; i < 3; ++i) {
    const double var = chain.row(i).array().square().mean();
    CHECK(std::abs(var / (1.0 / 0.75) - 1.0) < 0.05);
  }
  CHECK(simulate_field(t, 5, 8) == simulate_field(t, 5, 8));
  CHECK(simulate_field(t, 5, 8) != simulate_field(t, 5, 9));
}

TEST_CASE("dataset simulation", "[simulate]") {
  GroundTruth t = base_truth();
  const auto a = simulate_dataset(t);
  CHECK(a.observations.size() == 150);
  CHECK(a.field.rows() == 10);
  CHECK(a.field.cols() == 3);
  for (const auto& o : a.observations) CHECK((o.score >= 1 && o.score <= 5));
  const auto b = simulate_dataset(t);
  CHECK(a.field == b.field);
  for (std::size_t i = 0; i < a.observations.size(); ++i) CHECK(a.observations[i].score == b.observations[i].score);
  CHECK(a.controls.size() == b.controls.size());

  GroundTruth stop = t;
  stop.beta_cuts[0] = 60.0;
  for (const auto& o : simulate_dataset(stop).observations) CHECK(o.score == 1);

  GroundTruth climb = t;
  climb.forest_prob = 1.0;
  climb.beta_global[3] = 60.0;
  for (const auto& o : simulate_dataset(climb).observations) CHECK(o.score == 5);

  GroundTruth lo = t, hi = t;
  lo.obs_per_year = hi.obs_per_year = 2000;
  lo.beta_cuts[0] = -1.0;
  hi.beta_cuts[0] = 0.5;
  CHECK(counts(simulate_dataset(hi).observations)[0] > counts(simulate_dataset(lo).observations)[0]);

  CHECK_THROWS(simulate_dataset([] {
    GroundTruth bad = base_truth();
    bad.beta_cuts = Vxd::Zero(3);
    return bad;
  }()));
}

TEST_CASE("sequential draws follow the category probabilities", "[simulate]") {
  const Vxd eta = (Vxd(4) << -0.7, -0.2, 0.1, 0.4).finished();
  Vxd delta(4);
  std::vector<double> d;
  for (int c = 0; c < 4; ++c) d.push_back(delta[c] = oracle::delta(eta[c], Link::cloglog));
  std::vector<double> pi;
  for (int z = 1; z <= 5; ++z) pi.push_back(oracle::truncated_multinomial(z, d));

  const int n = 100000;
  std::mt19937_64 rng(12);
  std::discrete_distribution<int> direct(pi.begin(), pi.end());
  std::array<double, 5> seq{}, cat{};
  for (int i = 0; i < n; ++i) {
    ++seq[static_cast<std::size_t>(sequential_draw(delta, rng) - 1)];
    ++cat[static_cast<std::size_t>(direct(rng))];
  }
  double chi2 = 0.0;
  for (std::size_t c = 0; c < 5; ++c) {
    const double se = std::sqrt(n * pi[c] * (1 - pi[c]));
    CHECK(std::abs(seq[c] - n * pi[c]) < 3.5 * se);
    const double pooled = (seq[c] + cat[c]) / 2.0;
    chi2 += (seq[c] - pooled) * (seq[c] - pooled) / pooled + (cat[c] - pooled) * (cat[c] - pooled) / pooled;
  }
  // 0.99 quantile of chi-square with 4 degrees of freedom.
  CHECK(chi2 < 13.2767);
}
