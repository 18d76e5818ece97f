#pragma once
/** \file
 * Model assembly: raw ordinal observations and control-event history are
 * expanded into binary rows with cut dummies, sign-reversed global
 * covariates and a sign-reversed incidence map onto the latent knot field.
 */

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqord/covariance.hpp"
#include "seqord/ordinal.hpp"
#include "seqord/types.hpp"

namespace seqord {

/// Malformed or inconsistent input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; throws DataError on anything else.
Date parse_date(const std::string& iso);
std::string format_date(Date d);

enum class Habitat { grassland, forest };
Habitat parse_habitat(const std::string& name);
const char* to_string(Habitat h);

struct Observation {
  std::string site_id;
  V2d location;  ///< (easting, northing) km
  int year = 0;
  std::string species;
  int score = 0;
  Habitat habitat = Habitat::grassland;
  double access_km = 1.0;
};

struct ControlEvent {
  std::string species;
  std::string site_id;
  Date date;
};

enum class Variant { M1, M2, M3 };
Variant parse_variant(const std::string& name);
const char* to_string(Variant v);

struct PriorSet {
  PCPrior sigma;
  PCPrior range;
  PCPrior rho;
  double coef_variance = 1000.0;

  /// P(sigma > 1/q) = 0.05, P(r < 10 km) = 0.05, P(rho > 0.5) = 2/3.
  static PriorSet defaults(const OrdinalScale& scale);
};

struct ModelSpec {
  OrdinalScale scale{5};
  Link link = Link::cloglog;
  Variant variant = Variant::M3;
  PriorSet priors = PriorSet::defaults(OrdinalScale{5});
  int max_knots = 0;  ///< 0 keeps every distinct site location
  std::chrono::month_day reference_date{std::chrono::July / 1};
  bool negate_globals = true;

  static ModelSpec defaults(int categories);
};

/// Access distances are floored here before the log transform.
inline constexpr double kMinAccessKm = 0.001;

/// Global covariates in column order.
struct Covariates {
  double ctrl = 0.0;
  double duration = 0.0;
  double year_centered = 0.0;
  double forest = 0.0;
  double log_access = 0.0;

  static constexpr int size = 5;
  Vxd vector() const {
    Vxd v(size);
    v << ctrl, duration, year_centered, forest, log_access;
    return v;
  }
};

inline const std::vector<std::string>& global_covariate_names() {
  static const std::vector<std::string> names{"ctrl", "d", "year", "forest", "log_access"};
  return names;
}

struct ControlCovariates {
  int exposed = 0;       ///< E
  double years = 0.0;    ///< d
};

/// Elapsed time is counted in 365-day years.
inline constexpr double kDaysPerYear = 365.0;

/// Exposure and duration since the most recent event strictly before
/// `reference` for this species and site.
ControlCovariates control_covariates(const std::string& species, const std::string& site_id, Date reference,
                                     const std::vector<ControlEvent>& events);

Date reference_date_for(int year, std::chrono::month_day md);

/// Everything about the expanded model that prediction needs besides the data.
struct DesignLayout {
  OrdinalScale scale{2};
  Link link = Link::cloglog;
  Variant variant = Variant::M1;
  bool negate_globals = true;
  Eigen::Matrix<double, Eigen::Dynamic, 2> knots;
  int year_min = 0;
  int year_max = 0;
  double year_center = 0.0;
  int times = 0;  ///< latent time blocks: T for M3, 1 for M2, 0 for M1

  int q() const { return scale.thresholds(); }
  int coef_dim() const { return q() + Covariates::size; }
  int knot_count() const { return static_cast<int>(knots.rows()); }
  int latent_dim() const { return variant == Variant::M1 ? 0 : knot_count() * times; }
  std::vector<std::string> coefficient_names() const;
  double sign() const { return negate_globals ? -1.0 : 1.0; }
};

struct ExpandedDesign {
  Vxd y;
  Mxd X;
  SpMxd W;
  std::vector<int> row_obs;  ///< observation index per binary row
  std::vector<int> row_cat;  ///< category c (1-based) per binary row
  std::vector<int> obs_knot;  ///< knot per observation
  std::vector<int> obs_time;  ///< latent time block per observation (0-based)
  std::vector<Covariates> obs_covariates;
  std::vector<int> scores;
  DesignLayout layout;

  Eigen::Index rows() const { return y.size(); }
  Eigen::Index coef_dim() const { return X.cols(); }
  Eigen::Index latent_dim() const { return W.cols(); }
  Eigen::Index dim() const { return X.cols() + W.cols(); }
};

ExpandedDesign build_design(const std::vector<Observation>& observations, const std::vector<ControlEvent>& events,
                            const ModelSpec& spec);

/// eta = X beta + W u.
Vxd linear_predictor(const ExpandedDesign& design, const Vxd& beta, const Vxd& u);

/// Row-wise binary log-likelihood sum at (beta, u) using binary_loglik per observation.
double ordinal_loglik(const ExpandedDesign& design, const Vxd& beta, const Vxd& u);

enum class LatentSign { population, reversed };

struct GompertzDecomposition {
  Mxd log_xi;   ///< k x T
  Mxd nu_dot;   ///< accumulated covariate input, k x T
  double density_dependence = 0.0;  ///< b = rho - 1
};

/// log xi(t) = u(t) + nu_dot(t), nu_dot(t) = nu(t) + rho nu_dot(t-1), nu_dot(0) = 0.
/// Latent trajectories estimated with un-negated incidence are passed with
/// LatentSign::reversed and flipped first.
GompertzDecomposition gompertz_decompose(const Mxd& u, const Mxd& nu, const ARParams<double>& ar,
                                         LatentSign sign = LatentSign::population);

/// Intrinsic growth nu(t) = g(t) - rho g(t-1) from covariate effects g(t) = x(t)' beta_global.
Mxd intrinsic_growth(const Mxd& covariate_effect, const ARParams<double>& ar);

}  // namespace seqord
