#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "evfuse/losses.hpp"
#include "gradcheck.hpp"

using namespace evfuse;
using namespace evfuse::testing;

namespace {

double scalar(const Var& v) { return v.value()[0]; }

double ace_of(const std::vector<double>& alpha, std::size_t y) {
  Tape t(false);
  Tensor oh(1, alpha.size());
  oh(0, y) = 1.0;
  return scalar(loss::ace(t.constant(Tensor::row(alpha)), oh));
}

double kl_of(const std::vector<double>& alpha, std::size_t y) {
  Tape t(false);
  Tensor oh(1, alpha.size());
  oh(0, y) = 1.0;
  return scalar(loss::kl_uniform(t.constant(Tensor::row(alpha)), oh));
}

}  // namespace

TEST(Ace, Examples) {
  EXPECT_NEAR(ace_of({2, 1}, 0), 0.5, 1e-13);
  EXPECT_LT(ace_of({1e7, 1, 1}, 0), 1e-6);
}

TEST(Ace, DecreasesWithTrueClassEvidence) {
  double prev = ace_of({1.0, 2.0, 3.0}, 0);
  for (double a = 1.5; a < 200.0; a *= 1.5) {
    const double cur = ace_of({a, 2.0, 3.0}, 0);
    EXPECT_LT(cur, prev);
    EXPECT_GE(cur, 0.0);
    prev = cur;
  }
}

TEST(Ace, RejectsNonOneHotLabels) {
  Tape t(false);
  const Var a = t.constant(Tensor::row({2.0, 2.0}));
  EXPECT_THROW(loss::ace(a, Tensor::row({0.5, 0.5})), ContractError);
  EXPECT_THROW(loss::ace(a, Tensor::row({1.0, 1.0})), ContractError);
  EXPECT_THROW(loss::ace(a, Tensor::row({1.0, 0.0, 0.0})), ContractError);
}

TEST(KlUniform, ZeroWhenWrongClassesCarryNoEvidence) {
  EXPECT_NEAR(kl_of({7.0, 1.0, 1.0}, 0), 0.0, 1e-13);
  EXPECT_GT(kl_of({7.0, 1.5, 1.0}, 0), 0.0);
}

// KL[Dir(a) || Dir(1)] estimated by sampling p ~ Dir(a) through normalised gamma draws.
TEST(KlUniform, MatchesMonteCarloOnTwoClassExample) {
  const std::vector<double> a{5.0, 1.0};
  std::mt19937_64 rng(11);
  std::gamma_distribution<double> g0(a[0], 1.0), g1(a[1], 1.0);
  const double log_norm = std::lgamma(a[0] + a[1]) - std::lgamma(a[0]) - std::lgamma(a[1]) - std::lgamma(2.0);
  double sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const double x = g0(rng), y = g1(rng);
    const double p0 = x / (x + y), p1 = y / (x + y);
    sum += log_norm + (a[0] - 1.0) * std::log(p0) + (a[1] - 1.0) * std::log(p1);
  }
  EXPECT_NEAR(kl_of(a, 1), sum / n, 1e-2);
}

TEST(KlUniform, GradientIsZeroOnTrueClass) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    Parameter alpha("alpha", random_tensor(4, 5, rng, 1.05, 6.0));
    const Tensor y = random_onehot(4, 5, rng);
    Tape t;
    const auto grads = t.backward(loss::kl_uniform(t.parameter(alpha), y));
    const Tensor& g = grads.at(alpha);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c)
        if (y(r, c) == 1.0) {
          EXPECT_EQ(g(r, c), 0.0);
        }
  }
}

TEST(Acc, Composition) {
  Tape t(false);
  const Var a = t.constant(Tensor::row({5.0, 1.0}));
  const Tensor y = Tensor::row({0.0, 1.0});
  const double ace = scalar(loss::ace(a, y)), kl = scalar(loss::kl_uniform(a, y));
  EXPECT_EQ(scalar(loss::acc(a, y, 0.0)), ace);
  EXPECT_NEAR(scalar(loss::acc(a, y, 0.5)), ace + 0.5 * kl, 1e-12);
  const Var clean = t.constant(Tensor::row({1.0, 4.0}));
  EXPECT_NEAR(scalar(loss::acc(clean, y, 1.0)), scalar(loss::ace(clean, y)), 1e-13);
  EXPECT_THROW(loss::acc(a, y, -0.1), ContractError);
}

namespace {

Var evidence_var(Tape& t, const std::vector<double>& e) { return t.constant(Tensor::row(e)); }

double conflict_of(Tape& t, const std::vector<std::vector<double>>& es) {
  std::vector<Var> vs;
  for (const auto& e : es) vs.push_back(evidence_var(t, e));
  return scalar(loss::conflict(vs));
}

}  // namespace

TEST(ConflictLoss, Examples) {
  Tape t(false);
  EXPECT_NEAR(conflict_of(t, {{3, 1, 0}, {3, 1, 0}, {3, 1, 0}}), 0.0, 1e-15);
  // u = 1e-6 with K = 2 means S = 2e6.
  const double big = 2e6 - 2.0;
  EXPECT_NEAR(conflict_of(t, {{big, 0}, {0, big}}), 2.0, 1e-4);
  EXPECT_GT(conflict_of(t, {{3, 1}, {1, 3}}), 0.0);
  EXPECT_THROW(conflict_of(t, {{1, 1}}), ContractError);
}

// Pairwise 1 - c from the opinion-level measure, averaged over rows.
TEST(ConflictLoss, MatchesOpinionLevelDisagreement) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t v = 2 + trial % 4, n = 3, k = 4;
    Tape t(false);
    std::vector<Var> es;
    for (std::size_t i = 0; i < v; ++i) es.push_back(t.constant(random_tensor(n, k, rng, 0.0, 8.0)));
    double oracle = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<Opinion> ws;
      for (const auto& e : es) {
        const auto row = e.value().row_span(r);
        ws.push_back(opinion_from_evidence(EvidenceVector{{row.begin(), row.end()}}));
      }
      for (std::size_t a = 0; a < v; ++a)
        for (std::size_t b = a + 1; b < v; ++b) oracle += 1.0 - conflict_degree(ws[a], ws[b]);
    }
    oracle *= 2.0 / static_cast<double>(v - 1) / static_cast<double>(n);
    EXPECT_NEAR(scalar(loss::conflict(es)), oracle, 1e-12);
  }
}

TEST(ConflictLoss, PermutationInvariant) {
  std::mt19937_64 rng(14);
  Tape t(false);
  std::vector<Var> es;
  for (int i = 0; i < 5; ++i) es.push_back(t.constant(random_tensor(4, 3, rng, 0.0, 5.0)));
  const double base = scalar(loss::conflict(es));
  for (int i = 0; i < 10; ++i) {
    std::shuffle(es.begin(), es.end(), rng);
    EXPECT_NEAR(scalar(loss::conflict(es)), base, 1e-13);
  }
}

TEST(LiteralAgreementSum, GrowsWithAgreement) {
  const auto a = opinion_from_evidence(EvidenceVector{{6, 0}});
  const auto b = opinion_from_evidence(EvidenceVector{{0, 6}});
  const std::vector<Opinion> agree{a, a}, disagree{a, b};
  EXPECT_EQ(loss::literal_agreement_sum(agree), 2.0);
  EXPECT_LT(loss::literal_agreement_sum(disagree), 2.0);
}

TEST(Elbo, Examples) {
  Tape t(false);
  const Tensor target = Tensor::row({0.3, -0.2, 1.0});
  const auto prior = loss::elbo(t.constant(Tensor::row({0, 0})), t.constant(Tensor::row({0, 0})), target,
                                t.constant(target));
  EXPECT_EQ(scalar(prior.kl), 0.0);
  EXPECT_EQ(scalar(prior.reconstruction), 0.0);
  const auto shifted = loss::elbo(t.constant(Tensor::row({1, 0})), t.constant(Tensor::row({0, 0})), target,
                                  t.constant(Tensor::row({0.3, 0.8, 1.0})));
  EXPECT_NEAR(scalar(shifted.kl), 0.5, 1e-15);
  EXPECT_NEAR(scalar(shifted.reconstruction), 0.5, 1e-15);
  EXPECT_NEAR(scalar(shifted.total), 1.0, 1e-15);
}

TEST(Elbo, ObservedMaskAndShapeErrors) {
  Tape t(false);
  const Var mu = t.constant(Tensor::row({0, 0}));
  const Tensor target = Tensor::row({1.0, 2.0});
  const Var decoded = t.constant(Tensor::row({1.0, 7.0}));
  EXPECT_EQ(scalar(loss::elbo(mu, mu, target, decoded, Tensor::row({1.0, 0.0})).reconstruction), 0.0);
  EXPECT_THROW(loss::elbo(mu, t.constant(Tensor::row({0, 0, 0})), target, decoded), ContractError);
  EXPECT_THROW(loss::elbo(mu, mu, Tensor::row({1.0}), decoded), ContractError);
  EXPECT_THROW(loss::elbo(mu, mu, target, decoded, Tensor::row({1.0})), ContractError);
}

// Finite-difference checks over 100 random instances per loss.
class LossGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{15};
  static constexpr int kTrials = 100;
  static constexpr double kTol = 1e-4;
};

TEST_F(LossGradient, Ace) {
  for (int i = 0; i < kTrials; ++i) {
    std::vector<Parameter> ps{Parameter("alpha", random_tensor(3, 4, rng, 1.05, 6.0))};
    const Tensor y = random_onehot(3, 4, rng);
    const auto r = check_gradient(ps, [&](Tape&, const std::vector<Var>& v) { return loss::ace(v[0], y); });
    ASSERT_LE(r.rel_error, kTol);
  }
}

TEST_F(LossGradient, Kl) {
  for (int i = 0; i < kTrials; ++i) {
    std::vector<Parameter> ps{Parameter("alpha", random_tensor(3, 4, rng, 1.05, 6.0))};
    const Tensor y = random_onehot(3, 4, rng);
    const auto r = check_gradient(ps, [&](Tape&, const std::vector<Var>& v) { return loss::kl_uniform(v[0], y); });
    ASSERT_LE(r.rel_error, kTol);
  }
}

TEST_F(LossGradient, AccOnEvidence) {
  for (int i = 0; i < kTrials; ++i) {
    std::vector<Parameter> ps{Parameter("e", random_tensor(3, 5, rng, 0.0, 6.0))};
    const Tensor y = random_onehot(3, 5, rng);
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto r = check_gradient(
        ps, [&](Tape&, const std::vector<Var>& v) { return loss::acc(loss::alpha_from_evidence(v[0]), y, lambda); });
    ASSERT_LE(r.rel_error, kTol);
  }
}

TEST_F(LossGradient, Conflict) {
  for (int i = 0; i < kTrials; ++i) {
    std::vector<Parameter> ps;
    for (int v = 0; v < 3; ++v) ps.emplace_back("e" + std::to_string(v), random_tensor(3, 4, rng, 0.05, 6.0));
    const auto r = check_gradient(ps, [](Tape&, const std::vector<Var>& v) { return loss::conflict(v); });
    ASSERT_LE(r.rel_error, kTol);
  }
}

TEST_F(LossGradient, Elbo) {
  for (int i = 0; i < kTrials; ++i) {
    std::vector<Parameter> ps{Parameter("mu", random_tensor(3, 2, rng)), Parameter("logvar", random_tensor(3, 2, rng)),
                              Parameter("dec", random_tensor(3, 4, rng))};
    const Tensor target = random_tensor(3, 4, rng);
    Tensor observed(3, 4);
    for (auto& x : observed.values()) x = rng() % 2;
    const auto r = check_gradient(ps, [&](Tape&, const std::vector<Var>& v) {
      return loss::elbo(v[0], v[1], target, v[2], observed).total;
    });
    ASSERT_LE(r.rel_error, kTol);
  }
}

TEST(LossBundle, AccumulateAndJson) {
  loss::LossBundle a{1, 2, 3, 4, 5, 6};
  a += loss::LossBundle{1, 1, 1, 1, 1, 1};
  const auto half = a.scaled(0.5);
  EXPECT_EQ(half.ace, 1.0);
  EXPECT_EQ(half.total, 3.5);
  const nlohmann::json j = half;
  for (const char* key : {"ace", "kl", "acc", "con", "elbo", "total"}) EXPECT_TRUE(j.contains(key)) << key;
}
