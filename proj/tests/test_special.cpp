#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "evfuse/error.hpp"
#include "evfuse/numerics/special.hpp"

namespace sp = evfuse::special;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

double ref_lgamma(double x) { return static_cast<double>(boost::math::lgamma(Big(x))); }
double ref_digamma(double x) { return static_cast<double>(boost::math::digamma(Big(x))); }

// Log-uniform points over [lo, hi].
std::vector<double> log_uniform(std::size_t n, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  std::vector<double> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(std::exp(u(rng)));
  xs.push_back(lo);
  xs.push_back(hi);
  return xs;
}

}  // namespace

TEST(Lgamma, KnownValues) {
  EXPECT_EQ(sp::lgamma(1.0), 0.0);
  EXPECT_EQ(sp::lgamma(2.0), 0.0);
  EXPECT_NEAR(sp::lgamma(0.5), 0.5723649429247001, 1e-12);
  EXPECT_NEAR(sp::lgamma(0.5), 0.5 * std::log(std::acos(-1.0)), 1e-12);
}

// Absolute error 1e-12 is below one ulp once |ln Gamma(x)| exceeds ~4500, so the bound
// is applied relative to max(1, |ln Gamma(x)|).
TEST(Lgamma, MatchesHighPrecisionReference) {
  for (double x : log_uniform(1000, 1e-3, 1e6, 1)) {
    const double ref = ref_lgamma(x);
    EXPECT_LE(std::abs(sp::lgamma(x) - ref), 1e-12 * std::max(1.0, std::abs(ref))) << "x = " << x;
  }
}

TEST(Lgamma, AbsoluteErrorWhereRepresentable) {
  for (double x : log_uniform(500, 1e-3, 100.0, 2)) {
    EXPECT_LE(std::abs(sp::lgamma(x) - ref_lgamma(x)), 1e-12) << "x = " << x;
  }
}

TEST(Lgamma, MidpointConvexity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-3, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_LE(sp::lgamma(0.5 * (a + b)), 0.5 * (sp::lgamma(a) + sp::lgamma(b)) + 1e-12);
  }
}

TEST(Lgamma, RejectsNonPositive) {
  EXPECT_THROW(sp::lgamma(0.0), evfuse::DomainError);
  EXPECT_THROW(sp::lgamma(-1.5), evfuse::DomainError);
  EXPECT_THROW(sp::lgamma(std::nan("")), evfuse::DomainError);
  EXPECT_THROW(sp::lgamma(INFINITY), evfuse::DomainError);
}

TEST(Digamma, KnownValues) {
  EXPECT_NEAR(sp::digamma(1.0), -0.5772156649015329, 1e-12);
  EXPECT_NEAR(sp::digamma(2.0), 0.42278433509846713, 1e-12);
  EXPECT_NEAR(sp::digamma(3.0), sp::digamma(2.0) + 0.5, 1e-10);
}

TEST(Digamma, MatchesHighPrecisionReference) {
  for (double x : log_uniform(1000, 1e-3, 1e6, 4)) {
    EXPECT_LE(std::abs(sp::digamma(x) - ref_digamma(x)), 1e-10) << "x = " << x;
  }
}

TEST(Digamma, RecurrenceOnThousandPoints) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    double x = u(rng);
    if (x == 0.0) x = 1e-3;
    EXPECT_LE(std::abs(sp::digamma(x + 1.0) - sp::digamma(x) - 1.0 / x), 1e-10) << "x = " << x;
  }
}

TEST(Digamma, RejectsNonPositive) {
  EXPECT_THROW(sp::digamma(0.0), evfuse::DomainError);
  EXPECT_THROW(sp::digamma(-2.0), evfuse::DomainError);
}

TEST(Trigamma, MatchesDerivativeOfDigamma) {
  for (double x : log_uniform(200, 1e-2, 1e4, 6)) {
    const double h = 1e-5 * x;
    const double fd = (sp::digamma(x + h) - sp::digamma(x - h)) / (2 * h);
    EXPECT_NEAR(sp::trigamma(x), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "x = " << x;
  }
}

TEST(Softplus, Values) {
  EXPECT_NEAR(sp::softplus(0.0), 0.6931471805599453, 1e-15);
  EXPECT_NEAR(sp::softplus(100.0), 100.0, 1e-12);
  const double tail = sp::softplus(-100.0);
  EXPECT_GT(tail, 0.0);
  EXPECT_LE(tail, 1e-40);
  EXPECT_THROW(sp::softplus(INFINITY), evfuse::DomainError);
}
