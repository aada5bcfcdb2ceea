#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "evfuse/error.hpp"

namespace evfuse {

/// Tolerance on the belief/uncertainty simplex constraint and base-rate normalisation.
inline constexpr double kSimplexTolerance = 1e-9;

inline std::vector<double> uniform_base_rate(std::size_t k) {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

/// Multinomial opinion (b, u, a) over K classes: sum(b) + u = 1, a a probability vector.
struct Opinion {
  std::vector<double> belief;
  double uncertainty = 1.0;
  std::vector<double> base_rate;

  std::size_t classes() const { return belief.size(); }

  /// Throws DomainError unless the simplex and base-rate invariants hold.
  void validate() const {
    if (belief.size() < 2) throw DomainError("Opinion: at least two classes are required");
    if (base_rate.size() != belief.size()) {
      throw DomainError("Opinion: base_rate has " + std::to_string(base_rate.size()) +
                        " entries, belief has " + std::to_string(belief.size()));
    }
    double mass = uncertainty;
    double rate = 0.0;
    for (std::size_t k = 0; k < belief.size(); ++k) {
      if (!(belief[k] >= 0.0) || !(base_rate[k] >= 0.0)) {
        throw DomainError("Opinion: negative or NaN belief/base rate");
      }
      mass += belief[k];
      rate += base_rate[k];
    }
    if (!(uncertainty >= 0.0)) throw DomainError("Opinion: negative or NaN uncertainty");
    if (std::abs(mass - 1.0) > kSimplexTolerance) {
      throw DomainError("Opinion: belief + uncertainty sums to " + std::to_string(mass));
    }
    if (std::abs(rate - 1.0) > kSimplexTolerance) {
      throw DomainError("Opinion: base rates sum to " + std::to_string(rate));
    }
  }

  friend bool operator==(const Opinion&, const Opinion&) = default;
};

/// Non-negative per-class evidence e; the Dirichlet parameters are alpha = e + 1.
struct EvidenceVector {
  std::vector<double> evidence;

  std::size_t classes() const { return evidence.size(); }
  std::vector<double> alpha() const {
    std::vector<double> a(evidence);
    for (auto& v : a) v += 1.0;
    return a;
  }
  /// Dirichlet strength S = sum(alpha).
  double strength() const {
    return std::accumulate(evidence.begin(), evidence.end(), 0.0) +
           static_cast<double>(evidence.size());
  }
};

/// q = P (1 - u): the projected probability discounted by the opinion's uncertainty.
struct DiscountedDistribution {
  std::vector<double> q;
};

inline Opinion opinion_from_evidence(const EvidenceVector& e, std::vector<double> base_rate = {}) {
  const std::size_t k = e.classes();
  if (k < 2) throw DomainError("opinion_from_evidence: at least two classes are required");
  for (double v : e.evidence) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("opinion_from_evidence: evidence must be finite and non-negative");
    }
  }
  if (base_rate.empty()) base_rate = uniform_base_rate(k);
  if (base_rate.size() != k) throw ContractError("opinion_from_evidence: base rate length != K");
  const double s = e.strength();
  Opinion w;
  w.belief.resize(k);
  for (std::size_t i = 0; i < k; ++i) w.belief[i] = e.evidence[i] / s;
  w.uncertainty = static_cast<double>(k) / s;
  w.base_rate = std::move(base_rate);
  return w;
}

inline EvidenceVector evidence_from_opinion(const Opinion& w) {
  if (w.uncertainty <= 0.0) {
    throw SingularityError("evidence_from_opinion: zero uncertainty implies infinite evidence");
  }
  const double s = static_cast<double>(w.classes()) / w.uncertainty;
  EvidenceVector e;
  e.evidence.resize(w.classes());
  for (std::size_t i = 0; i < w.classes(); ++i) e.evidence[i] = w.belief[i] * s;
  return e;
}

/// P_k = b_k + a_k u.
inline std::vector<double> project_probability(const Opinion& w) {
  std::vector<double> p(w.classes());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = w.belief[i] + w.base_rate[i] * w.uncertainty;
  return p;
}

inline DiscountedDistribution discount(const Opinion& w) {
  DiscountedDistribution d{project_probability(w)};
  for (auto& v : d.q) v *= 1.0 - w.uncertainty;
  return d;
}

/// Pairwise combination of dependent opinions; equivalent to averaging their evidence.
inline Opinion fuse_pair(const Opinion& a, const Opinion& b) {
  if (a.classes() != b.classes()) throw ContractError("fuse_pair: opinions differ in K");
  const double total = a.uncertainty + b.uncertainty;
  if (total <= 0.0) throw SingularityError("fuse_pair: both opinions have zero uncertainty");
  const double wa = b.uncertainty / total;
  const double wb = a.uncertainty / total;
  Opinion out;
  out.belief.resize(a.classes());
  out.base_rate.resize(a.classes());
  for (std::size_t k = 0; k < a.classes(); ++k) {
    out.belief[k] = a.belief[k] * wa + b.belief[k] * wb;
    out.base_rate[k] = a.base_rate[k] / 2.0 + b.base_rate[k] / 2.0;
  }
  out.uncertainty = 2.0 * (a.uncertainty * b.uncertainty) / total;
  return out;
}

enum class FusionMode { balanced, sequential };

inline std::string_view to_string(FusionMode m) {
  return m == FusionMode::balanced ? "balanced" : "sequential";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
  if (s == "balanced") return FusionMode::balanced;
  if (s == "sequential") return FusionMode::sequential;
  throw ContractError("unknown fusion mode '" + std::string(s) + "'");
}

/// Fuses V view opinions.
///
/// `sequential` is the left fold w1 (+) w2 (+) ... (+) wV, which gives the last view weight
/// 1/2 and the first two 1/2^(V-1). `balanced` maps every opinion to evidence, averages
/// with equal weights and maps back; base rates are averaged likewise. The two agree for V = 2.
inline Opinion fuse_views(std::span<const Opinion> ws, FusionMode mode = FusionMode::balanced) {
  if (ws.empty()) throw ContractError("fuse_views: no opinions");
  const std::size_t k = ws.front().classes();
  for (const auto& w : ws) {
    if (w.classes() != k) throw ContractError("fuse_views: opinions differ in K");
    if (w.uncertainty <= 0.0) throw SingularityError("fuse_views: opinion with zero uncertainty");
  }
  if (ws.size() == 1) return ws.front();

  if (mode == FusionMode::sequential) {
    Opinion acc = ws.front();
    for (std::size_t v = 1; v < ws.size(); ++v) acc = fuse_pair(acc, ws[v]);
    return acc;
  }
  EvidenceVector mean_e{std::vector<double>(k, 0.0)};
  std::vector<double> rate(k, 0.0);
  const double inv = 1.0 / static_cast<double>(ws.size());
  for (const auto& w : ws) {
    const auto e = evidence_from_opinion(w);
    for (std::size_t i = 0; i < k; ++i) {
      mean_e.evidence[i] += e.evidence[i] * inv;
      rate[i] += w.base_rate[i] * inv;
    }
  }
  return opinion_from_evidence(mean_e, std::move(rate));
}

/// Jensen-Shannon divergence in bits between two (possibly sub-normalised) non-negative
/// vectors, with 0 log 0 = 0. Bounded by 1 when both vectors sum to at most one.
inline double js_divergence_bits(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractError("js_divergence_bits: length mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    const double tp = p[k] > 0.0 ? p[k] * std::log2(p[k] / m) : 0.0;
    const double tq = q[k] > 0.0 ? q[k] * std::log2(q[k] / m) : 0.0;
    d += 0.5 * (tp + tq);  // summed pairwise so that swapping p and q is bit-exact
  }
  return d;
}

/// Agreement score in [0, 1]: 1 - JS(q_A || q_B). 1 means the opinions do not conflict,
/// 0 means they are certain and disjoint.
inline double conflict_degree(const Opinion& a, const Opinion& b) {
  if (a.classes() != b.classes()) throw ContractError("conflict_degree: opinions differ in K");
  const auto qa = discount(a);
  const auto qb = discount(b);
  return std::clamp(1.0 - js_divergence_bits(qa.q, qb.q), 0.0, 1.0);
}

/// Symmetric V x V matrix of pairwise conflict degrees, ones on the diagonal.
inline std::vector<std::vector<double>> conflict_matrix(std::span<const Opinion> ws) {
  if (ws.size() < 2) throw ContractError("conflict_matrix: need at least two opinions");
  const std::size_t v = ws.size();
  std::vector<std::vector<double>> c(v, std::vector<double>(v, 1.0));
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = i + 1; j < v; ++j) {
      c[i][j] = c[j][i] = conflict_degree(ws[i], ws[j]);
    }
  }
  return c;
}

inline void to_json(nlohmann::json& j, const Opinion& w) {
  j = nlohmann::json{{"belief", w.belief}, {"uncertainty", w.uncertainty}, {"base_rate", w.base_rate}};
}

/// Reads an opinion; a missing base_rate defaults to uniform. Does not validate.
inline void from_json(const nlohmann::json& j, Opinion& w) {
  j.at("belief").get_to(w.belief);
  j.at("uncertainty").get_to(w.uncertainty);
  if (j.contains("base_rate")) {
    j.at("base_rate").get_to(w.base_rate);
  } else {
    w.base_rate = uniform_base_rate(w.belief.size());
  }
}

}  // namespace evfuse
