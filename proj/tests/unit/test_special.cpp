#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "evfield/special.hpp"

using namespace evfield;

TEST(LogGamma, ExactPoints) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(std::numbers::pi), 1e-13);
  EXPECT_NEAR(log_gamma(0.5), 0.5723649429247001, 1e-13);
}

TEST(LogGamma, AgreesWithLibm) {
  for (double x : {1e-3, 0.1, 0.7, 1.5, 3.25, 10.0, 57.5, 1e3, 1e6}) {
    EXPECT_NEAR(log_gamma(x), std::lgamma(x), 1e-12 * std::max(1.0, std::abs(std::lgamma(x)))) << "x=" << x;
  }
}

TEST(LogGamma, RejectsNonPositive) {
  EXPECT_THROW(log_gamma(0.0), std::domain_error);
  EXPECT_THROW(log_gamma(-1.5), std::domain_error);
}

TEST(Digamma, KnownValues) {
  constexpr double euler = 0.57721566490153286;
  EXPECT_NEAR(digamma(1.0), -euler, 1e-12);
  EXPECT_NEAR(digamma(0.5), -euler - 2.0 * std::numbers::ln2, 1e-12);
  // ψ(x+1) = ψ(x) + 1/x
  for (double x : {0.3, 2.0, 7.5, 40.0}) EXPECT_NEAR(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-12);
}

TEST(Digamma, IsDerivativeOfLogGamma) {
  const double h = 1e-5;
  for (double x : {0.8, 1.0, 4.0, 25.0}) {
    EXPECT_NEAR(digamma(x), (log_gamma(x + h) - log_gamma(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Activations, Softplus) {
  EXPECT_NEAR(softplus(0.0), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12);
  EXPECT_NEAR(softplus(-40.0), std::exp(-40.0), 1e-30);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_TRUE(std::isfinite(softplus(1e308)));
}

TEST(Activations, Sigmoid) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(800.0), 1.0, 1e-15);
  EXPECT_GE(sigmoid(-800.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(Activations, SafeExpClamps) {
  EXPECT_TRUE(std::isfinite(safe_exp(1e4)));
  EXPECT_DOUBLE_EQ(safe_exp(1e4), std::exp(kExpClamp));
  EXPECT_DOUBLE_EQ(safe_exp(1.0), std::exp(1.0));
}
