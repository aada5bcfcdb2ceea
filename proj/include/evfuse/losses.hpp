#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "evfuse/error.hpp"
#include "evfuse/numerics/autodiff.hpp"
#include "evfuse/subjective_logic.hpp"

// Training objectives. Every loss takes a batch (one row per sample) and returns the
// batch mean as a 1x1 node.

namespace evfuse::loss {

using ad::Var;

namespace detail {

inline void require_one_hot(const Tensor& y, std::size_t k) {
  if (y.cols() != k) throw ContractError("label matrix has " + std::to_string(y.cols()) +
                                         " columns, expected " + std::to_string(k));
  for (std::size_t r = 0; r < y.rows(); ++r) {
    int ones = 0;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      const double v = y(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw ContractError("labels must be one-hot");
      }
    }
    if (ones != 1) throw ContractError("labels must be one-hot");
  }
}

inline void require_alpha(const Var& alpha) {
  for (double v : alpha.value().values()) {
    if (!(v >= 1.0) || !std::isfinite(v)) throw DomainError("Dirichlet parameters must be finite and >= 1");
  }
}

}  // namespace detail

/// alpha = e + 1.
inline Var alpha_from_evidence(const Var& evidence) { return ad::add_scalar(evidence, 1.0); }

/// Expected cross-entropy under Dir(alpha): sum_j y_j (psi(S) - psi(alpha_j)).
inline Var ace(const Var& alpha, const Tensor& y) {
  detail::require_alpha(alpha);
  detail::require_one_hot(y, alpha.cols());
  auto& t = alpha.tape();
  const Var yv = t.constant(y);
  const Var s = ad::row_sum(alpha);
  const Var per_row = ad::sub(ad::digamma(s), ad::row_sum(ad::mul(yv, ad::digamma(alpha))));
  return ad::mean(per_row);
}

/// KL[Dir(alpha_tilde) || Dir(1)] where alpha_tilde = y + (1 - y) * alpha keeps only the
/// evidence placed on wrong classes.
inline Var kl_uniform(const Var& alpha, const Tensor& y) {
  detail::require_alpha(alpha);
  detail::require_one_hot(y, alpha.cols());
  auto& t = alpha.tape();
  const double k = static_cast<double>(alpha.cols());
  Tensor wrong(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) wrong[i] = 1.0 - y[i];
  const Var at = ad::add(t.constant(y), ad::mul(t.constant(wrong), alpha));
  const Var s = ad::row_sum(at);
  const Var log_norm = ad::sub(ad::add_scalar(ad::lgamma(s), -special::lgamma(k)),
                               ad::row_sum(ad::lgamma(at)));
  const Var shape_term =
      ad::row_sum(ad::mul(ad::add_scalar(at, -1.0), ad::sub(ad::digamma(at), ad::digamma(s))));
  return ad::mean(ad::add(log_norm, shape_term));
}

struct AccuracyTerms {
  Var ace;
  Var kl;
  Var total;  ///< ace + lambda * kl
};

inline AccuracyTerms accuracy_terms(const Var& alpha, const Tensor& y, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("lambda_t must be non-negative");
  AccuracyTerms out{ace(alpha, y), kl_uniform(alpha, y), {}};
  out.total = ad::add(out.ace, ad::scale(out.kl, lambda));
  return out;
}

inline Var acc(const Var& alpha, const Tensor& y, double lambda) {
  return accuracy_terms(alpha, y, lambda).total;
}

/// Discounted distribution q = P (1 - u) of the opinion induced by each evidence row,
/// with uniform base rates: P = alpha / S and u = K / S.
inline Var discounted(const Var& evidence) {
  const double k = static_cast<double>(evidence.cols());
  const Var alpha = alpha_from_evidence(evidence);
  const Var s = ad::row_sum(alpha);
  const Var p = ad::div(alpha, s);
  const Var one_minus_u = ad::rsub_scalar(1.0, ad::rdiv_scalar(k, s));
  return ad::mul(p, one_minus_u);
}

/// Row-wise Jensen-Shannon divergence in bits, (n x 1).
inline Var js_bits(const Var& qa, const Var& qb) {
  const Var m = ad::scale(ad::add(qa, qb), 0.5);
  const Var ka = ad::sub(ad::xlogy(qa, qa), ad::xlogy(qa, m));
  const Var kb = ad::sub(ad::xlogy(qb, qb), ad::xlogy(qb, m));
  return ad::scale(ad::row_sum(ad::add(ka, kb)), 0.5 / std::numbers::ln2);
}

/// Conflict-consistency loss: (1/(V-1)) sum_A sum_{B != A} JS(q_A || q_B), batch mean.
///
/// Minimising it pulls view opinions towards agreement. Each unordered pair is counted
/// twice because JS is symmetric.
inline Var conflict(std::span<const Var> evidences) {
  if (evidences.size() < 2) throw ContractError("conflict loss needs at least two views");
  std::vector<Var> q;
  q.reserve(evidences.size());
  for (const auto& e : evidences) q.push_back(discounted(e));
  Var total;
  for (std::size_t a = 0; a < q.size(); ++a) {
    for (std::size_t b = a + 1; b < q.size(); ++b) {
      const Var d = js_bits(q[a], q[b]);
      total = total.valid() ? ad::add(total, d) : d;
    }
  }
  return ad::scale(ad::mean(total), 2.0 / static_cast<double>(evidences.size() - 1));
}

/// The sum of agreement scores exactly as the consistency loss is printed:
/// (1/(V-1)) sum_A sum_{B != A} c(w_A, w_B). Reported for inspection only; it grows with
/// agreement and is therefore never minimised.
inline double literal_agreement_sum(std::span<const Opinion> ws) {
  if (ws.size() < 2) throw ContractError("literal_agreement_sum: need at least two views");
  double s = 0.0;
  for (std::size_t a = 0; a < ws.size(); ++a)
    for (std::size_t b = 0; b < ws.size(); ++b)
      if (a != b) s += conflict_degree(ws[a], ws[b]);
  return s / static_cast<double>(ws.size() - 1);
}

struct ElboTerms {
  Var reconstruction;  ///< 0.5 * masked squared error (unit-variance Gaussian NLL, constant dropped)
  Var kl;              ///< KL(N(mu, sigma^2) || N(0, I))
  Var total;
};

/// Negative ELBO with a single reparameterised sample already decoded into `decoded`.
/// `observed` (same shape as the target, entries in {0,1}) restricts the reconstruction
/// error to entries with ground truth; pass an empty tensor to use every entry.
inline ElboTerms elbo(const Var& mu, const Var& logvar, const Tensor& target, const Var& decoded,
                      const Tensor& observed = {}) {
  if (!mu.value().same_shape(logvar.value())) throw ContractError("elbo: mu/logvar shape mismatch");
  if (!decoded.value().same_shape(target)) {
    throw ContractError("elbo: decoder output " + shape_string(decoded.value()) +
                        " does not match target " + shape_string(target));
  }
  if (decoded.rows() != mu.rows()) throw ContractError("elbo: batch sizes differ");
  auto& t = mu.tape();
  Var diff = ad::sub(decoded, t.constant(target));
  if (!observed.empty()) {
    if (!observed.same_shape(target)) throw ContractError("elbo: observation mask shape mismatch");
    diff = ad::mul(diff, t.constant(observed));
  }
  const double n = static_cast<double>(mu.rows());
  ElboTerms out;
  out.reconstruction = ad::scale(ad::sum(ad::square(diff)), 0.5 / n);
  const Var inner = ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
  out.kl = ad::scale(ad::sum(inner), 0.5 / n);
  out.total = ad::add(out.reconstruction, out.kl);
  return out;
}

/// Scalar loss components of one training step or epoch.
struct LossBundle {
  double ace = 0.0;
  double kl = 0.0;
  double acc = 0.0;
  double con = 0.0;
  double elbo = 0.0;
  double total = 0.0;

  LossBundle& operator+=(const LossBundle& o) {
    ace += o.ace;
    kl += o.kl;
    acc += o.acc;
    con += o.con;
    elbo += o.elbo;
    total += o.total;
    return *this;
  }
  LossBundle scaled(double f) const { return {ace * f, kl * f, acc * f, con * f, elbo * f, total * f}; }
};

inline void to_json(nlohmann::json& j, const LossBundle& b) {
  j = nlohmann::json{{"ace", b.ace}, {"kl", b.kl},     {"acc", b.acc},
                     {"con", b.con}, {"elbo", b.elbo}, {"total", b.total}};
}

}  // namespace evfuse::loss
