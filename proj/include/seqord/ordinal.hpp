#pragma once
/** \file
 * Sequential (continuation-ratio) ordinal calculus: links, category
 * probabilities, the binary expansion of an ordinal record, and the
 * proportional-hazards threshold maps with category collapsing.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "seqord/types.hpp"

namespace seqord {

/// Ordered scale with C >= 2 categories; categories are indexed 1..C.
class OrdinalScale {
 public:
  explicit OrdinalScale(int categories) : OrdinalScale(default_labels(categories)) {}

  explicit OrdinalScale(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) throw std::invalid_argument("ordinal scale needs at least 2 categories");
    std::unordered_set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw std::invalid_argument("ordinal scale labels must be unique");
  }

  int categories() const { return static_cast<int>(labels_.size()); }
  int thresholds() const { return categories() - 1; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(int z) const { return z >= 1 && z <= categories(); }

  bool operator==(const OrdinalScale&) const = default;

 private:
  static std::vector<std::string> default_labels(int categories) {
    if (categories < 2) throw std::invalid_argument("ordinal scale needs at least 2 categories");
    std::vector<std::string> out;
    for (int c = 1; c <= categories; ++c) out.push_back(std::to_string(c));
    return out;
  }

  std::vector<std::string> labels_;
};

enum class Link { cloglog, logit, probit };

inline const char* to_string(Link link) {
  switch (link) {
    case Link::cloglog: return "cloglog";
    case Link::logit: return "logit";
    case Link::probit: return "probit";
  }
  return "?";
}

inline Link parse_link(const std::string& name) {
  if (name == "cloglog") return Link::cloglog;
  if (name == "logit") return Link::logit;
  if (name == "probit") return Link::probit;
  throw std::invalid_argument("unknown link '" + name + "'");
}

/// Inverse-link outputs are kept inside (kProbFloor, 1 - kProbFloor).
inline constexpr double kProbFloor = 1e-15;

template <typename F>
F link_eval(F p, Link link) {
  using std::log;
  if (!(p > F(0) && p < F(1))) throw std::domain_error("link_eval: probability must lie in (0,1)");
  switch (link) {
    case Link::cloglog: return log(-std::log1p(-p));
    case Link::logit: return log(p) - std::log1p(-p);
    case Link::probit: return -boost::math::erfc_inv(F(2) * p) * std::numbers::sqrt2_v<F>;
  }
  throw std::invalid_argument("link_eval: unknown link");
}

template <typename F>
F link_inverse(F eta, Link link) {
  using std::exp;
  if (!std::isfinite(eta)) throw std::domain_error("link_inverse: linear predictor must be finite");
  F p{};
  switch (link) {
    case Link::cloglog: p = -std::expm1(-exp(eta)); break;
    case Link::logit: p = F(1) / (F(1) + exp(-eta)); break;
    case Link::probit: p = F(0.5) * std::erfc(-eta / std::numbers::sqrt2_v<F>); break;
  }
  return std::clamp(p, F(kProbFloor), F(1) - F(kProbFloor));
}

/// Conditional stopping probabilities delta_c = P(z = c | z >= c), c = 1..q.
template <typename F>
struct SequentialProbs {
  Vx<F> delta;

  explicit SequentialProbs(Vx<F> d) : delta(std::move(d)) {
    if (delta.size() < 1) throw std::invalid_argument("sequential probabilities need at least one level");
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      if (!(delta[i] > F(0) && delta[i] < F(1)))
        throw std::invalid_argument("sequential probabilities must lie strictly inside (0,1)");
  }
};

template <typename F>
struct CategoryProbs {
  Vx<F> pi;
};

/// Contiguous partition of 1..C by cutpoints k_1 < ... < k_{K-1} < C.
class Partition {
 public:
  Partition(std::vector<int> cutpoints, int categories) : cuts_(std::move(cutpoints)), categories_(categories) {
    if (cuts_.empty()) throw std::invalid_argument("partition needs at least one cutpoint (K >= 2)");
    int prev = 0;
    for (int k : cuts_) {
      if (k <= prev || k >= categories_)
        throw std::invalid_argument("partition cutpoints must be strictly increasing inside [1, C-1]");
      prev = k;
    }
  }

  int groups() const { return static_cast<int>(cuts_.size()) + 1; }
  const std::vector<int>& cutpoints() const { return cuts_; }
  int categories() const { return categories_; }

  /// Inclusive category range {first, last} of subset l (1-based).
  std::pair<int, int> subset(int l) const {
    const int lo = l == 1 ? 1 : cuts_[l - 2] + 1;
    const int hi = l == groups() ? categories_ : cuts_[l - 1];
    return {lo, hi};
  }

 private:
  std::vector<int> cuts_;
  int categories_;
};

/// Binary responses y_1..y_zeta for an observed category z; zeta = min(z, q).
inline Vxi expand_observation(int z, const OrdinalScale& scale) {
  if (!scale.contains(z)) throw std::out_of_range("expand_observation: category out of range");
  const int zeta = std::min(z, scale.thresholds());
  Vxi y = Vxi::Zero(zeta);
  if (z <= scale.thresholds()) y[z - 1] = 1;
  return y;
}

template <typename F>
CategoryProbs<F> sequential_to_category_probs(const SequentialProbs<F>& s) {
  const Eigen::Index q = s.delta.size();
  Vx<F> pi(q + 1);
  F survive(1);
  for (Eigen::Index c = 0; c < q; ++c) {
    pi[c] = s.delta[c] * survive;
    survive *= F(1) - s.delta[c];
  }
  pi[q] = survive;
  return {std::move(pi)};
}

/// Log of the truncated-multinomial probability of z via its binary expansion.
template <typename Derived>
typename Derived::Scalar binary_loglik(int z, const Eigen::MatrixBase<Derived>& eta, Link link,
                                       const OrdinalScale& scale) {
  using F = typename Derived::Scalar;
  const Vxi y = expand_observation(z, scale);
  if (eta.size() != y.size()) throw std::invalid_argument("binary_loglik: eta length must equal min(z, q)");
  F total(0);
  for (Eigen::Index c = 0; c < y.size(); ++c) {
    const F delta = link_inverse<F>(eta[c], link);
    total += y[c] ? std::log(delta) : std::log1p(-delta);
  }
  return total;
}

namespace detail {
template <typename F>
F log_add_exp(F a, F b) {
  const F hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}
}  // namespace detail

/// beta_l = log(exp(b_l) - exp(b_{l-1})), with exp(b_0) = 0.
template <typename F>
Vx<F> cumulative_to_sequential_thresholds(const Vx<F>& beta_cum) {
  Vx<F> out(beta_cum.size());
  for (Eigen::Index l = 0; l < beta_cum.size(); ++l) {
    if (l == 0) {
      out[l] = beta_cum[l];
      continue;
    }
    const F gap = beta_cum[l - 1] - beta_cum[l];
    if (!(gap < F(0))) throw std::invalid_argument("cumulative thresholds must be strictly increasing");
    out[l] = beta_cum[l] + std::log(-std::expm1(gap));
  }
  return out;
}

/// Running log-sum-exp; strictly increasing for finite input.
template <typename F>
Vx<F> sequential_to_cumulative_thresholds(const Vx<F>& beta_seq) {
  Vx<F> out(beta_seq.size());
  for (Eigen::Index l = 0; l < beta_seq.size(); ++l)
    out[l] = l == 0 ? beta_seq[0] : detail::log_add_exp(out[l - 1], beta_seq[l]);
  return out;
}

/// P(z <= l) = 1 - exp(-exp(b_l - global_effect)) for l = 1..K-1.
template <typename F>
F ph_cumulative_prob(int l, const Vx<F>& beta_cum, F global_effect) {
  if (l < 1 || l > beta_cum.size()) throw std::out_of_range("ph_cumulative_prob: level out of range");
  return -std::expm1(-std::exp(beta_cum[l - 1] - global_effect));
}

/// Category probabilities of the proportional-hazards (grouped Cox) model.
template <typename F>
CategoryProbs<F> ph_category_probs(const Vx<F>& beta_cum, F global_effect) {
  const Eigen::Index K = beta_cum.size() + 1;
  Vx<F> pi(K);
  // Work with survival S_l = P(z > l) = exp(-exp(b_l - g)) to avoid cancellation.
  F prev_survival(1);
  for (Eigen::Index l = 0; l + 1 < K; ++l) {
    const F survival = std::exp(-std::exp(beta_cum[l] - global_effect));
    pi[l] = prev_survival - survival;
    prev_survival = survival;
  }
  pi[K - 1] = prev_survival;
  return {std::move(pi)};
}

/// Sequential-model category probabilities at thresholds beta and a global effect.
template <typename F>
CategoryProbs<F> sequential_category_probs(const Vx<F>& beta_seq, F global_effect, Link link) {
  Vx<F> delta(beta_seq.size());
  for (Eigen::Index c = 0; c < beta_seq.size(); ++c) delta[c] = link_inverse<F>(beta_seq[c] - global_effect, link);
  return sequential_to_category_probs(SequentialProbs<F>(std::move(delta)));
}

template <typename F>
struct CollapsedScale {
  OrdinalScale scale;
  Vx<F> beta_cum;
};

/// Group categories by `partition`; the cumulative thresholds at subset
/// boundaries carry over unchanged.
template <typename F>
CollapsedScale<F> collapse_scale(const OrdinalScale& scale, const Partition& partition, const Vx<F>& beta_cum) {
  if (partition.categories() != scale.categories())
    throw std::invalid_argument("collapse_scale: partition built for a different number of categories");
  if (beta_cum.size() != scale.thresholds())
    throw std::invalid_argument("collapse_scale: need q cumulative thresholds");
  for (Eigen::Index l = 1; l < beta_cum.size(); ++l)
    if (!(beta_cum[l] > beta_cum[l - 1])) throw std::invalid_argument("cumulative thresholds must be strictly increasing");

  std::vector<std::string> labels;
  for (int l = 1; l <= partition.groups(); ++l) {
    auto [lo, hi] = partition.subset(l);
    std::string label = scale.labels()[lo - 1];
    for (int c = lo + 1; c <= hi; ++c) label += "+" + scale.labels()[c - 1];
    labels.push_back(std::move(label));
  }
  Vx<F> collapsed(partition.groups() - 1);
  for (int l = 0; l < collapsed.size(); ++l) collapsed[l] = beta_cum[partition.cutpoints()[l] - 1];
  return {OrdinalScale(std::move(labels)), std::move(collapsed)};
}

/// Sum category probabilities over each subset of `partition`.
template <typename F>
Vx<F> aggregate_probs(const CategoryProbs<F>& probs, const Partition& partition) {
  Vx<F> out = Vx<F>::Zero(partition.groups());
  for (int l = 1; l <= partition.groups(); ++l) {
    auto [lo, hi] = partition.subset(l);
    for (int c = lo; c <= hi; ++c) out[l - 1] += probs.pi[c - 1];
  }
  return out;
}

}  // namespace seqord
