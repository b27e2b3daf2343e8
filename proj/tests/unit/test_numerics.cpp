#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "chasedpo/numerics.hpp"

using namespace chasedpo;

TEST(Logsumexp, TwoZerosGiveLn2) {
  EXPECT_NEAR(logsumexp(std::vector<double>{0.0, 0.0}), std::numbers::ln2, 1e-15);
}

TEST(Logsumexp, SingleEntryIsIdentity) {
  for (double x : {-1234.5, -1.0, 0.0, 3.25, 1e5}) {
    EXPECT_EQ(logsumexp(std::vector<double>{x}), x);
  }
}

TEST(Logsumexp, LargeInputsDoNotOverflow) {
  const double v = logsumexp(std::vector<double>{1000.0, 1000.0});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 1000.0 + std::numbers::ln2, 1e-12);
}

TEST(Logsumexp, ShiftEquivariance) {
  Rng rng{3};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(7);
    for (double& x : v) x = 5.0 * rng.gaussian();
    const double c = 20.0 * rng.gaussian();
    auto shifted = v;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(logsumexp(shifted), logsumexp(v) + c, 1e-9);
  }
}

TEST(Logsumexp, EmptyThrows) {
  try {
    logsumexp(std::vector<double>{});
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "empty vector");
  }
}

TEST(Sigmoid, KnownValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  // 1 / (1 + e^-2) to 7 places
  EXPECT_NEAR(sigmoid(2.0), 0.8807971, 5e-8);
  for (double x : {-30.0, -2.5, -0.1, 0.7, 4.0, 40.0}) {
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LE(sigmoid(x), 1.0);
  }
  EXPECT_LT(sigmoid(-1.0), sigmoid(1.0));
}

TEST(Sigmoid, LogSigmoidIsStable) {
  EXPECT_NEAR(-log_sigmoid(2.0), 0.1269280, 5e-8);
  EXPECT_NEAR(log_sigmoid(-800.0), -800.0, 1e-9);
  EXPECT_NEAR(log_sigmoid(800.0), 0.0, 1e-300);
}

TEST(Softmax, SumsToOne) {
  Rng rng{11};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(9);
    for (double& x : v) x = 10.0 * rng.gaussian();
    double s = 0.0;
    for (double p : softmax(v)) s += p;
    EXPECT_NEAR(s, 1.0, 1e-9);
    std::vector<double> lp(v.size());
    log_softmax(v, lp);
    double t = 0.0;
    for (double x : lp) t += std::exp(x);
    EXPECT_NEAR(t, 1.0, 1e-9);
  }
}

TEST(Rng, MatchesSplitmix64Reference) {
  // First outputs of splitmix64 seeded with 0.
  Rng rng{0};
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
  const auto [state, value] = rng_next(0);
  EXPECT_EQ(value, 0xe220a8397b1dcdafULL);
  EXPECT_EQ(state, 0x9e3779b97f4a7c15ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a{42};
  Rng b{42};
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng{5};
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, CategoricalFrequencies) {
  Rng rng{17};
  const std::vector<double> logits{0.0, 0.0};
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += static_cast<int>(rng.categorical(logits));
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.01);
}

TEST(Rng, GaussianMoments) {
  Rng rng{23};
  const int n = 200000;
  double s = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  // 5 standard errors
  EXPECT_NEAR(s / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(Rng, BelowStaysInRange) {
  Rng rng{9};
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) counts[rng.below(7)]++;
  for (int c : counts) EXPECT_NEAR(c / 70000.0, 1.0 / 7.0, 0.01);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Matrix, RejectsBadConstruction) {
  EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
  EXPECT_THROW(Matrix(1, 2, {1.0, NAN}), std::invalid_argument);
  EXPECT_THROW(Matrix(1, 1, {INFINITY}), std::invalid_argument);
  const Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
}

TEST(Matrix, ProductsAgreeWithHandValues) {
  const Matrix a(2, 2, {1, 2, 3, 4});
  const Matrix b(2, 1, {5, 6});
  const auto c = matmul(a, b);
  EXPECT_EQ(c(0, 0), 17.0);
  EXPECT_EQ(c(1, 0), 39.0);
  const auto y = matvec(a, std::vector<double>{1.0, -1.0});
  EXPECT_EQ(y[0], -1.0);
  EXPECT_EQ(y[1], -1.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(a), std::sqrt(30.0));
  EXPECT_DOUBLE_EQ(squared_distance(a, Matrix(2, 2)), 30.0);
}
