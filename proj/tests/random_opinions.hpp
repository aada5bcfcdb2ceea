#pragma once

#include <random>
#include <vector>

#include "evfuse/subjective_logic.hpp"

namespace evfuse::testing {

/// Evidence with a heavy tail so that both near-vacuous and near-certain opinions occur.
inline std::vector<double> random_evidence(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> logmag(-3.0, 4.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> e(k);
  for (auto& x : e) x = u(rng) < 0.2 ? 0.0 : std::pow(10.0, logmag(rng));
  return e;
}

inline std::vector<double> random_base_rate(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> a(k);
  double s = 0.0;
  for (auto& x : a) s += (x = u(rng));
  for (auto& x : a) x /= s;
  return a;
}

inline Opinion random_opinion(std::size_t k, std::mt19937_64& rng) {
  return opinion_from_evidence(EvidenceVector{random_evidence(k, rng)}, random_base_rate(k, rng));
}

}  // namespace evfuse::testing
