#include "seqord/design.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_map>

namespace seqord {

namespace chr = std::chrono;

Date parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
    throw DataError("invalid date '" + iso + "' (expected YYYY-MM-DD)");
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + iso + "'");
  return Date{ymd};
}

std::string format_date(Date date) {
  const chr::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

Habitat parse_habitat(const std::string& name) {
  if (name == "forest") return Habitat::forest;
  if (name == "grassland") return Habitat::grassland;
  throw DataError("unknown habitat '" + name + "' (expected forest or grassland)");
}

const char* to_string(Habitat h) { return h == Habitat::forest ? "forest" : "grassland"; }

Variant parse_variant(const std::string& name) {
  if (name == "M1") return Variant::M1;
  if (name == "M2") return Variant::M2;
  if (name == "M3") return Variant::M3;
  throw std::invalid_argument("unknown model variant '" + name + "' (expected M1, M2 or M3)");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::M1: return "M1";
    case Variant::M2: return "M2";
    case Variant::M3: return "M3";
  }
  return "?";
}

PriorSet PriorSet::defaults(const OrdinalScale& scale) {
  return PriorSet{PCPrior(PCPriorKind::sd, 1.0 / scale.thresholds(), 0.05), PCPrior(PCPriorKind::range2d, 10.0, 0.05),
                  PCPrior(PCPriorKind::cor1, 0.5, 2.0 / 3.0), 1000.0};
}

ModelSpec ModelSpec::defaults(int categories) {
  ModelSpec spec;
  spec.scale = OrdinalScale(categories);
  spec.priors = PriorSet::defaults(spec.scale);
  return spec;
}

Date reference_date_for(int year, chr::month_day md) {
  const chr::year_month_day ymd{chr::year{year}, md.month(), md.day()};
  if (!ymd.ok()) throw DataError("reference date does not exist in year " + std::to_string(year));
  return Date{ymd};
}

ControlCovariates control_covariates(const std::string& species, const std::string& site_id, Date reference,
                                     const std::vector<ControlEvent>& events) {
  std::optional<Date> latest;
  for (const auto& e : events) {
    if (e.species != species || e.site_id != site_id || !(e.date < reference)) continue;
    if (!latest || *latest < e.date) latest = e.date;
  }
  if (!latest) return {};
  const double days = static_cast<double>((reference - *latest).count());
  return {1, days / kDaysPerYear};
}

std::vector<std::string> DesignLayout::coefficient_names() const {
  std::vector<std::string> names;
  for (int c = 1; c <= q(); ++c) names.push_back("cut_" + std::to_string(c));
  for (const auto& n : global_covariate_names()) names.push_back(n);
  return names;
}

namespace {


// Distinct site coordinates in first-seen order.
std::vector<V2d> distinct_locations(const std::vector<Observation>& observations) {
  std::vector<V2d> out;
  std::set<std::pair<double, double>> seen;
  for (const auto& o : observations)
    if (seen.insert({o.location.x(), o.location.y()}).second) out.push_back(o.location);
  return out;
}

int nearest(const Eigen::Matrix<double, Eigen::Dynamic, 2>& knots, const V2d& p) {
  Eigen::Index best = 0;
  (knots.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

ExpandedDesign build_design(const std::vector<Observation>& observations, const std::vector<ControlEvent>& events,
                            const ModelSpec& spec) {
  if (observations.empty()) throw DataError("no observations");
  const std::string& species = observations.front().species;
  std::unordered_map<std::string, V2d> site_location;
  for (std::size_t j = 0; j < observations.size(); ++j) {
    const auto& o = observations[j];
    if (o.species != species)
      throw DataError("observation " + std::to_string(j + 1) + ": models are fit per species, found '" + o.species +
                      "' alongside '" + species + "'");
    if (!spec.scale.contains(o.score))
      throw DataError("observation " + std::to_string(j + 1) + ": score " + std::to_string(o.score) + " outside 1.." +
                      std::to_string(spec.scale.categories()));
    if (o.site_id.empty()) throw DataError("observation " + std::to_string(j + 1) + ": unknown site (empty site_id)");
    auto [it, fresh] = site_location.emplace(o.site_id, o.location);
    if (!fresh && it->second != o.location)
      throw DataError("observation " + std::to_string(j + 1) + ": site '" + o.site_id + "' has inconsistent coordinates");
  }

  ExpandedDesign d;
  DesignLayout& L = d.layout;
  L.scale = spec.scale;
  L.link = spec.link;
  L.variant = spec.variant;
  L.negate_globals = spec.negate_globals;
  auto [ymin, ymax] = std::minmax_element(observations.begin(), observations.end(),
                                          [](const auto& a, const auto& b) { return a.year < b.year; });
  L.year_min = ymin->year;
  L.year_max = ymax->year;
  L.year_center = 0.5 * (L.year_min + L.year_max);

  const auto locs = distinct_locations(observations);
  Eigen::Matrix<double, Eigen::Dynamic, 2> all(static_cast<Eigen::Index>(locs.size()), 2);
  for (std::size_t i = 0; i < locs.size(); ++i) all.row(static_cast<Eigen::Index>(i)) = locs[i].transpose();
  if (spec.max_knots > 0 && all.rows() > spec.max_knots) {
    const auto pick = farthest_point_subset<double>(all, spec.max_knots);
    L.knots.resize(static_cast<Eigen::Index>(pick.size()), 2);
    for (std::size_t i = 0; i < pick.size(); ++i) L.knots.row(static_cast<Eigen::Index>(i)) = all.row(pick[i]);
  } else {
    L.knots = all;
  }
  switch (spec.variant) {
    case Variant::M1: L.times = 0; break;
    case Variant::M2: L.times = 1; break;
    case Variant::M3: L.times = L.year_max - L.year_min + 1; break;
  }

  const int q = spec.scale.thresholds();
  const int p = L.coef_dim();
  const int m = L.latent_dim();
  const double sign = L.sign();

  std::size_t n = 0;
  for (const auto& o : observations) n += static_cast<std::size_t>(std::min(o.score, q));
  d.y = Vxd::Zero(static_cast<Eigen::Index>(n));
  d.X = Mxd::Zero(static_cast<Eigen::Index>(n), p);
  d.row_obs.reserve(n);
  d.row_cat.reserve(n);
  std::vector<Eigen::Triplet<double>> w_entries;
  w_entries.reserve(m > 0 ? n : 0);

  Eigen::Index row = 0;
  for (std::size_t j = 0; j < observations.size(); ++j) {
    const auto& o = observations[j];
    const auto ctrl = control_covariates(species, o.site_id, reference_date_for(o.year, spec.reference_date), events);
    Covariates x;
    x.ctrl = ctrl.exposed;
    x.duration = ctrl.years;
    x.year_centered = o.year - L.year_center;
    x.forest = o.habitat == Habitat::forest ? 1.0 : 0.0;
    x.log_access = std::log(std::max(o.access_km, kMinAccessKm));
    const Vxd xg = sign * x.vector();

    const int knot = nearest(L.knots, o.location);
    const int time = spec.variant == Variant::M3 ? o.year - L.year_min : 0;
    d.obs_knot.push_back(knot);
    d.obs_time.push_back(time);
    d.obs_covariates.push_back(x);
    d.scores.push_back(o.score);

    const Vxi yj = expand_observation(o.score, spec.scale);
    for (Eigen::Index c = 0; c < yj.size(); ++c, ++row) {
      d.y[row] = yj[c];
      d.X(row, c) = 1.0;
      d.X.row(row).tail(Covariates::size) = xg.transpose();
      if (m > 0) w_entries.emplace_back(static_cast<int>(row), time * L.knot_count() + knot, sign);
      d.row_obs.push_back(static_cast<int>(j));
      d.row_cat.push_back(static_cast<int>(c) + 1);
    }
  }
  d.W.resize(static_cast<Eigen::Index>(n), m);
  d.W.setFromTriplets(w_entries.begin(), w_entries.end());
  return d;
}

Vxd linear_predictor(const ExpandedDesign& design, const Vxd& beta, const Vxd& u) {
  if (beta.size() != design.X.cols() || u.size() != design.W.cols())
    throw std::invalid_argument("linear_predictor: coefficient or latent dimension mismatch");
  Vxd eta = design.X * beta;
  if (u.size() > 0) eta += design.W * u;
  return eta;
}

double ordinal_loglik(const ExpandedDesign& design, const Vxd& beta, const Vxd& u) {
  const Vxd eta = linear_predictor(design, beta, u);
  double total = 0.0;
  Eigen::Index row = 0;
  for (std::size_t j = 0; j < design.scores.size(); ++j) {
    const int zeta = std::min(design.scores[j], design.layout.q());
    total += binary_loglik(design.scores[j], eta.segment(row, zeta), design.layout.link, design.layout.scale);
    row += zeta;
  }
  return total;
}

GompertzDecomposition gompertz_decompose(const Mxd& u, const Mxd& nu, const ARParams<double>& ar, LatentSign sign) {
  if (u.rows() != nu.rows() || u.cols() != nu.cols())
    throw std::invalid_argument("gompertz_decompose: latent and growth inputs must cover the same knots and time steps");
  if (u.cols() < 1) throw std::invalid_argument("gompertz_decompose: missing time steps");
  GompertzDecomposition out;
  out.nu_dot.resize(u.rows(), u.cols());
  for (Eigen::Index t = 0; t < u.cols(); ++t)
    out.nu_dot.col(t) = t == 0 ? Vxd(nu.col(0)) : Vxd(nu.col(t) + ar.rho * out.nu_dot.col(t - 1));
  out.log_xi = (sign == LatentSign::reversed ? Mxd(-u) : u) + out.nu_dot;
  out.density_dependence = ar.rho - 1.0;
  return out;
}

Mxd intrinsic_growth(const Mxd& covariate_effect, const ARParams<double>& ar) {
  if (covariate_effect.cols() < 1) throw std::invalid_argument("intrinsic_growth: missing time steps");
  Mxd nu = covariate_effect;
  for (Eigen::Index t = 1; t < nu.cols(); ++t) nu.col(t) -= ar.rho * covariate_effect.col(t - 1);
  return nu;
}

}  // namespace seqord
