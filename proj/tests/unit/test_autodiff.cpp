#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "evfield/autodiff.hpp"
#include "evfield/rng.hpp"
#include "evfield/special.hpp"

using namespace evfield;

namespace {

double scalar_grad(const std::function<Var(Tape&, Var)>& f, double x) {
  ParamStore s;
  s.add("x", 1, 1);
  s[0].value[0] = x;
  Tape t;
  const Var v = t.parameter(s, 0);
  t.backward(f(t, v));
  return s[0].grad[0];
}

// Each elementwise op against central differences at 100 random points.
struct UnaryCase {
  const char* name;
  std::function<Var(Tape&, Var)> fn;
  double lo, hi;
};

}  // namespace

TEST(Autodiff, ProductRule) {
  ParamStore s;
  s.add("x", 1, 1);
  s.add("y", 1, 1);
  s[0].value[0] = 2.0;
  s[1].value[0] = 3.0;
  Tape t;
  t.backward(t.parameter(s, 0) * t.parameter(s, 1));
  EXPECT_DOUBLE_EQ(s[0].grad[0], 3.0);
  EXPECT_DOUBLE_EQ(s[1].grad[0], 2.0);
}

TEST(Autodiff, SigmoidAtZero) { EXPECT_DOUBLE_EQ(scalar_grad([](Tape& t, Var x) { return t.sigmoid(x); }, 0.0), 0.25); }

TEST(Autodiff, LogGammaAtOne) {
  EXPECT_NEAR(scalar_grad([](Tape& t, Var x) { return t.log_gamma(x); }, 1.0), -0.5772156649015329, 1e-12);
}

TEST(Autodiff, UnaryOpsMatchFiniteDifferences) {
  const std::vector<UnaryCase> cases = {
      {"exp", [](Tape& t, Var x) { return t.exp(x); }, -3, 3},
      {"log", [](Tape& t, Var x) { return t.log(x); }, 0.1, 5},
      {"sqrt", [](Tape& t, Var x) { return t.sqrt(x); }, 0.1, 5},
      {"abs", [](Tape& t, Var x) { return t.abs(x); }, 0.1, 5},
      {"square", [](Tape& t, Var x) { return t.square(x); }, -3, 3},
      {"sigmoid", [](Tape& t, Var x) { return t.sigmoid(x); }, -6, 6},
      {"softplus", [](Tape& t, Var x) { return t.softplus(x); }, -6, 6},
      {"lgamma", [](Tape& t, Var x) { return t.log_gamma(x); }, 0.2, 20},
      {"neg", [](Tape& t, Var x) { return t.neg(x); }, -3, 3},
      {"add_scalar", [](Tape& t, Var x) { return t.add_scalar(x, 1.5); }, -3, 3},
      {"mul_scalar", [](Tape& t, Var x) { return t.mul_scalar(x, -2.5); }, -3, 3},
      {"scalar_sub", [](Tape& t, Var x) { return t.scalar_sub(1.0, x); }, -3, 3},
      {"scalar_div", [](Tape& t, Var x) { return t.scalar_div(2.0, x); }, 0.2, 3},
      {"clamp_min", [](Tape& t, Var x) { return t.clamp_min(x, -10.0); }, -3, 3},
  };
  Rng rng(11);
  for (const auto& c : cases) {
    ParamStore s;
    s.add("x", 1, 100);
    for (double& v : s[0].value) v = rng.uniform(c.lo, c.hi);
    const auto r = check_gradients(s, [&](Tape& t, ParamStore& st) { return t.sum_all(c.fn(t, t.parameter(st, 0))); }, 1e-6);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name;
  }
}

TEST(Autodiff, BinaryOpsAndBroadcasting) {
  Rng rng(12);
  const std::vector<std::pair<std::size_t, std::size_t>> shapes = {{4, 3}, {1, 1}, {1, 3}, {4, 1}};
  for (const auto& [br, bc] : shapes) {
    ParamStore s;
    s.add("a", 4, 3);
    s.add("b", br, bc);
    for (auto& e : s.entries()) {
      for (double& v : e.value) v = rng.uniform(0.5, 2.0);
    }
    const auto r = check_gradients(
        s,
        [](Tape& t, ParamStore& st) {
          const Var a = t.parameter(st, 0), b = t.parameter(st, 1);
          return t.sum_all((a + b) * (a - b) / b + a * b);
        },
        1e-6);
    EXPECT_LT(r.max_rel_error, 1e-6) << br << "x" << bc;
  }
}

TEST(Autodiff, StructuralOps) {
  Rng rng(13);
  ParamStore s;
  s.add("a", 3, 4);
  s.add("b", 4, 2);
  for (auto& e : s.entries()) {
    for (double& v : e.value) v = rng.uniform(-1, 1);
  }
  const auto r = check_gradients(
      s,
      [](Tape& t, ParamStore& st) {
        const Var a = t.parameter(st, 0), b = t.parameter(st, 1);
        const Var m = t.matmul(a, b);                                     // 3x2
        const Var c = t.concat_cols(m, t.slice_cols(a, 1, 2));            // 3x4
        const Var cs = t.exclusive_cumsum_cols(t.reshape(c, 2, 6));       // 2x6
        return t.sum_all(t.square(t.sum_cols(cs)) + t.sum_all(t.exp(c)));
      },
      1e-6);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Autodiff, QuadraticIsExact) {
  ParamStore s;
  s.add("p", 1, 5);
  for (std::size_t i = 0; i < 5; ++i) s[0].value[i] = 0.3 * static_cast<double>(i) - 0.6;
  const auto r = check_gradients(s, [](Tape& t, ParamStore& st) { return t.sum_all(t.square(t.parameter(st, 0))); }, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-10);
}

TEST(Autodiff, ConstantFunctionHasZeroGradient) {
  ParamStore s;
  s.add("p", 2, 2);
  const auto r = check_gradients(s, [](Tape& t, ParamStore& st) {
    t.parameter(st, 0);
    return t.scalar(4.0);
  }, 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
  for (double g : s[0].grad) EXPECT_EQ(g, 0.0);
}

TEST(Autodiff, SelectRowsBlocksGradient) {
  ParamStore s;
  s.add("a", 3, 1);
  s[0].value = {1.0, 2.0, 3.0};
  Tape t;
  const std::vector<std::uint8_t> fallback = {0, 1, 0};
  const Var out = t.select_rows(t.square(t.parameter(s, 0)), fallback, 7.0);
  EXPECT_EQ(out.value(1), 7.0);
  t.backward(t.sum_all(out));
  EXPECT_DOUBLE_EQ(s[0].grad[0], 2.0);
  EXPECT_DOUBLE_EQ(s[0].grad[1], 0.0);
  EXPECT_DOUBLE_EQ(s[0].grad[2], 6.0);
}

TEST(Autodiff, ExpAndSoftplusGuards) {
  Tape t;
  const Var big = t.constant(1, 2, std::vector<double>{1e4, 100.0});
  EXPECT_TRUE(std::isfinite(t.exp(big).value(0, 0)));
  EXPECT_NEAR(t.softplus(big).value(0, 1), 100.0, 1e-12);
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
  Tape t;
  const Var v = t.constant(2, 2, 1.0);
  EXPECT_THROW(t.backward(v), std::invalid_argument);
}

TEST(Autodiff, NonFiniteAdjointIsReported) {
  ParamStore s;
  s.add("x", 1, 1);
  s[0].value[0] = 0.0;
  Tape t;
  EXPECT_THROW(t.backward(t.sqrt(t.parameter(s, 0))), NumericError);
}

TEST(Autodiff, GradientsAccumulateAndBuffersMerge) {
  ParamStore s;
  s.add("x", 1, 1);
  s[0].value[0] = 3.0;
  GradBuffer buf(s);
  Tape t;
  t.backward(t.square(t.parameter(s, 0, buf)));
  EXPECT_EQ(s[0].grad[0], 0.0);
  buf.accumulate_into(s, 0.5);
  buf.accumulate_into(s, 0.5);
  EXPECT_DOUBLE_EQ(s[0].grad[0], 6.0);
  s.zero_grad();
  EXPECT_EQ(s[0].grad[0], 0.0);
}

TEST(Autodiff, ResetReusesTape) {
  Tape t;
  for (int i = 0; i < 3; ++i) {
    t.reset();
    const Var a = t.constant(2, 2, static_cast<double>(i));
    EXPECT_EQ(t.sum_all(a).value(), 4.0 * i);
  }
}

TEST(Autodiff, ParamStoreChecksFiniteness) {
  ParamStore s;
  s.add("w", 1, 2);
  s.check_finite();
  s[0].value[1] = std::nan("");
  EXPECT_THROW(s.check_finite(), NumericError);
  EXPECT_THROW(s.at("missing"), std::out_of_range);
}
