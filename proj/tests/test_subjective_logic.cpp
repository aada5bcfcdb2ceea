#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "evfuse/subjective_logic.hpp"
#include "random_opinions.hpp"

using namespace evfuse;
using namespace evfuse::testing;

namespace {

double simplex_residual(const Opinion& w) {
  return std::abs(std::accumulate(w.belief.begin(), w.belief.end(), 0.0) + w.uncertainty - 1.0);
}

// b_k = e_k / S, u = K / S computed directly.
Opinion oracle_opinion(const std::vector<double>& e) {
  const double s = std::accumulate(e.begin(), e.end(), 0.0) + static_cast<double>(e.size());
  Opinion w;
  for (double x : e) w.belief.push_back(x / s);
  w.uncertainty = static_cast<double>(e.size()) / s;
  w.base_rate.assign(e.size(), 1.0 / static_cast<double>(e.size()));
  return w;
}

void expect_opinion_near(const Opinion& a, const Opinion& b, double tol) {
  ASSERT_EQ(a.classes(), b.classes());
  for (std::size_t k = 0; k < a.classes(); ++k) {
    EXPECT_NEAR(a.belief[k], b.belief[k], tol);
    EXPECT_NEAR(a.base_rate[k], b.base_rate[k], tol);
  }
  EXPECT_NEAR(a.uncertainty, b.uncertainty, tol);
}

}  // namespace

TEST(OpinionFromEvidence, Examples) {
  const auto vac = opinion_from_evidence(EvidenceVector{{0, 0, 0}});
  EXPECT_EQ(vac.belief, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(vac.uncertainty, 1.0);
  const auto w = opinion_from_evidence(EvidenceVector{{4, 0, 0}});
  EXPECT_NEAR(w.belief[0], 4.0 / 7.0, 1e-15);
  EXPECT_EQ(w.belief[1], 0.0);
  EXPECT_NEAR(w.uncertainty, 3.0 / 7.0, 1e-15);
}

TEST(OpinionFromEvidence, RejectsNegativeEvidence) {
  EXPECT_THROW(opinion_from_evidence(EvidenceVector{{1, -0.5}}), DomainError);
}

TEST(EvidenceFromOpinion, Examples) {
  Opinion vac{{0, 0, 0}, 1.0, uniform_base_rate(3)};
  EXPECT_EQ(evidence_from_opinion(vac).evidence, (std::vector<double>{0, 0, 0}));
  Opinion w{{4.0 / 7.0, 0, 0}, 3.0 / 7.0, uniform_base_rate(3)};
  const auto e = evidence_from_opinion(w);
  EXPECT_NEAR(e.evidence[0], 4.0, 1e-12);
  EXPECT_NEAR(e.evidence[1], 0.0, 1e-12);
  Opinion dogmatic{{1.0, 0.0}, 0.0, uniform_base_rate(2)};
  EXPECT_THROW(evidence_from_opinion(dogmatic), SingularityError);
}

TEST(ProjectProbability, Examples) {
  Opinion vac{{0, 0, 0, 0}, 1.0, uniform_base_rate(4)};
  for (double p : project_probability(vac)) EXPECT_DOUBLE_EQ(p, 0.25);
  Opinion w{{0.6, 0.2}, 0.2, {0.5, 0.5}};
  const auto p = project_probability(w);
  EXPECT_NEAR(p[0], 0.7, 1e-15);
  EXPECT_NEAR(p[1], 0.3, 1e-15);
  Opinion d{{0.25, 0.75}, 0.0, {0.5, 0.5}};
  EXPECT_EQ(project_probability(d), d.belief);
}

TEST(FusePair, Examples) {
  std::mt19937_64 rng(1);
  const auto w = random_opinion(5, rng);
  expect_opinion_near(fuse_pair(w, w), w, 1e-12);
  const auto f = fuse_pair(opinion_from_evidence(EvidenceVector{{2, 0}}), opinion_from_evidence(EvidenceVector{{0, 2}}));
  expect_opinion_near(f, opinion_from_evidence(EvidenceVector{{1, 1}}), 1e-15);
  Opinion d1{{1, 0}, 0, {0.5, 0.5}}, d2{{0, 1}, 0, {0.5, 0.5}};
  EXPECT_THROW(fuse_pair(d1, d2), SingularityError);
  EXPECT_THROW(fuse_pair(opinion_from_evidence(EvidenceVector{{1, 1}}), opinion_from_evidence(EvidenceVector{{1, 1, 1}})),
               ContractError);
}

TEST(FusePair, AlgebraOverRandomOpinions) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> kd(2, 12);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = kd(rng);
    const auto ea = random_evidence(k, rng), eb = random_evidence(k, rng);
    const auto a = opinion_from_evidence(EvidenceVector{ea}), b = opinion_from_evidence(EvidenceVector{eb});
    const auto ab = fuse_pair(a, b);
    ASSERT_LE(simplex_residual(ab), 1e-9);
    expect_opinion_near(ab, fuse_pair(b, a), 1e-12);
    expect_opinion_near(fuse_pair(a, a), a, 1e-12);
    std::vector<double> mean(k);
    for (std::size_t j = 0; j < k; ++j) mean[j] = 0.5 * (ea[j] + eb[j]);
    expect_opinion_near(ab, oracle_opinion(mean), 1e-9);
    EXPECT_GE(ab.uncertainty, std::min(a.uncertainty, b.uncertainty) - 1e-15);
    EXPECT_LE(ab.uncertainty, std::max(a.uncertainty, b.uncertainty) + 1e-15);
  }
}

TEST(Bijection, RoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto e = random_evidence(6, rng);
    const auto w = opinion_from_evidence(EvidenceVector{e});
    ASSERT_LE(simplex_residual(w), 1e-9);
    const auto back = evidence_from_opinion(w).evidence;
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_LE(std::abs(back[k] - e[k]), 1e-12 * std::max(1.0, e[k]));
    const auto w2 = opinion_from_evidence(EvidenceVector{back});
    expect_opinion_near(w2, w, 1e-12);
  }
}

TEST(FuseViews, Examples) {
  std::mt19937_64 rng(4);
  const auto w = random_opinion(4, rng);
  const std::vector<Opinion> one{w};
  EXPECT_EQ(fuse_views(one, FusionMode::balanced), w);
  EXPECT_EQ(fuse_views(one, FusionMode::sequential), w);

  const std::vector<Opinion> two{random_opinion(4, rng), random_opinion(4, rng)};
  expect_opinion_near(fuse_views(two, FusionMode::balanced), fuse_views(two, FusionMode::sequential), 1e-12);

  const std::vector<Opinion> three{opinion_from_evidence(EvidenceVector{{4, 0}}),
                                   opinion_from_evidence(EvidenceVector{{0, 4}}),
                                   opinion_from_evidence(EvidenceVector{{0, 4}})};
  const auto bal = evidence_from_opinion(fuse_views(three, FusionMode::balanced)).evidence;
  EXPECT_NEAR(bal[0], 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(bal[1], 8.0 / 3.0, 1e-12);
  const auto seq = evidence_from_opinion(fuse_views(three, FusionMode::sequential)).evidence;
  EXPECT_NEAR(seq[0], 1.0, 1e-12);
  EXPECT_NEAR(seq[1], 3.0, 1e-12);
}

TEST(FuseViews, Errors) {
  EXPECT_THROW(fuse_views(std::vector<Opinion>{}), ContractError);
  const std::vector<Opinion> mixed{opinion_from_evidence(EvidenceVector{{1, 1}}),
                                   opinion_from_evidence(EvidenceVector{{1, 1, 1}})};
  EXPECT_THROW(fuse_views(mixed), ContractError);
}

TEST(FuseViews, BalancedIsPermutationInvariantAndSimplexPreserving) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    std::vector<Opinion> ws;
    for (int v = 0; v < 5; ++v) ws.push_back(random_opinion(4, rng));
    const auto f = fuse_views(ws, FusionMode::balanced);
    ASSERT_LE(simplex_residual(f), 1e-9);
    ASSERT_LE(simplex_residual(fuse_views(ws, FusionMode::sequential)), 1e-9);
    std::shuffle(ws.begin(), ws.end(), rng);
    expect_opinion_near(fuse_views(ws, FusionMode::balanced), f, 1e-12);
  }
}

TEST(FuseViews, SequentialWeightsLastViewByHalf) {
  std::mt19937_64 rng(6);
  std::vector<std::vector<double>> es;
  std::vector<Opinion> ws;
  for (int v = 0; v < 4; ++v) {
    es.push_back(random_evidence(3, rng));
    ws.push_back(opinion_from_evidence(EvidenceVector{es.back()}));
  }
  // weights 1/8, 1/8, 1/4, 1/2
  const double wts[] = {0.125, 0.125, 0.25, 0.5};
  std::vector<double> expect(3, 0.0);
  for (int v = 0; v < 4; ++v)
    for (int k = 0; k < 3; ++k) expect[k] += wts[v] * es[v][k];
  const auto got = evidence_from_opinion(fuse_views(ws, FusionMode::sequential)).evidence;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expect[k], 1e-9 * std::max(1.0, expect[k]));
}

TEST(ConflictDegree, Examples) {
  std::mt19937_64 rng(7);
  const auto w = random_opinion(3, rng);
  EXPECT_EQ(conflict_degree(w, w), 1.0);
  const double u = 1e-9;
  Opinion a{{1 - u, 0}, u, {0.5, 0.5}}, b{{0, 1 - u}, u, {0.5, 0.5}};
  EXPECT_LE(conflict_degree(a, b), 0.01);
  Opinion v1{{0, 0}, 1.0, {0.5, 0.5}}, v2{{0, 0}, 1.0, {0.3, 0.7}};
  EXPECT_EQ(conflict_degree(v1, v2), 1.0);
}

TEST(ConflictDegree, RangeAndSymmetry) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_opinion(5, rng), b = random_opinion(5, rng);
    const double c = conflict_degree(a, b);
    ASSERT_GE(c, 0.0);
    ASSERT_LE(c, 1.0);
    ASSERT_EQ(c, conflict_degree(b, a));
  }
}

TEST(ConflictDegree, BelowOneWhenDiscountedDistributionsDiffer) {
  const auto a = opinion_from_evidence(EvidenceVector{{5, 1}});
  const auto b = opinion_from_evidence(EvidenceVector{{1, 5}});
  EXPECT_LT(conflict_degree(a, b), 1.0);
}

// Independent JS evaluation with natural logs converted to bits.
TEST(ConflictDegree, MatchesDirectJensenShannon) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_opinion(4, rng), b = random_opinion(4, rng);
    double js = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const double qa = (a.belief[k] + a.base_rate[k] * a.uncertainty) * (1 - a.uncertainty);
      const double qb = (b.belief[k] + b.base_rate[k] * b.uncertainty) * (1 - b.uncertainty);
      const double m = 0.5 * (qa + qb);
      if (qa > 0) js += 0.5 * qa * std::log(qa / m);
      if (qb > 0) js += 0.5 * qb * std::log(qb / m);
    }
    EXPECT_NEAR(conflict_degree(a, b), std::clamp(1.0 - js / std::log(2.0), 0.0, 1.0), 1e-12);
  }
}

TEST(ConflictMatrix, Properties) {
  std::mt19937_64 rng(10);
  const auto w = random_opinion(3, rng);
  for (const auto& row : conflict_matrix(std::vector<Opinion>{w, w, w}))
    for (double c : row) EXPECT_EQ(c, 1.0);
  const std::vector<Opinion> ws{random_opinion(3, rng), random_opinion(3, rng), random_opinion(3, rng)};
  const auto m = conflict_matrix(ws);
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_EQ(m[a][a], 1.0);
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_EQ(m[a][b], m[b][a]);
      if (a != b) {
        EXPECT_EQ(m[a][b], conflict_degree(ws[a], ws[b]));
      }
    }
  }
}

TEST(OpinionJson, RoundTripAndDefaultBaseRate) {
  const Opinion w{{0.2, 0.3}, 0.5, {0.4, 0.6}};
  EXPECT_EQ(nlohmann::json(w).get<Opinion>(), w);
  const auto j = nlohmann::json::parse(R"({"belief": [0.5, 0.25], "uncertainty": 0.25})");
  EXPECT_EQ(j.get<Opinion>().base_rate, (std::vector<double>{0.5, 0.5}));
}

TEST(OpinionValidate, RejectsBrokenSimplex) {
  Opinion w{{0.5, 0.6}, 0.2, {0.5, 0.5}};
  EXPECT_THROW(w.validate(), DomainError);
}
