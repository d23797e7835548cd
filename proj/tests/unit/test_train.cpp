#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "evfield/config.hpp"
#include "evfield/parallel.hpp"
#include "evfield/train.hpp"

using namespace evfield;

namespace {

RunConfig tiny_run() {
  RunConfig rc;
  rc.train_views = 4;
  rc.test_views = 1;
  rc.train_arc.width = rc.train_arc.height = 12;
  rc.test_arc.width = rc.test_arc.height = 12;
  rc.quadrature = 256;
  rc.field.trunk_depth = 2;
  rc.field.trunk_width = 16;
  rc.field.pos_frequencies = 3;
  rc.train.batch_rays = 32;
  rc.train.samples_per_ray = 8;
  rc.train.chunk_rays = 8;
  rc.train.iterations = 20;
  rc.train.log_interval = 5;
  rc.train.learning_rate = 2e-3;
  return rc;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore s;
  s.add("p", 1, 3);
  s[0].value = {1.0, -2.0, 0.5};
  OptimState st(s);
  adam_step(s, st, TrainConfig{}, 1);
  EXPECT_EQ(s[0].value, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore s;
  s.add("p", 1, 2);
  s[0].grad = {3.0, -0.02};
  OptimState st(s);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  adam_step(s, st, tc, 1);
  EXPECT_NEAR(s[0].value[0], -1e-3, 1e-9);
  EXPECT_NEAR(s[0].value[1], 1e-3, 1e-9);
}

TEST(Adam, QuadraticBowlConverges) {
  ParamStore s;
  s.add("p", 1, 4);
  s[0].value = {1.0, -0.5, 2.0, 0.25};
  OptimState st(s);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  double loss = 1.0;
  std::size_t step = 0;
  while (loss >= 1e-6 && step < 2000) {
    ++step;
    loss = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      loss += s[0].value[i] * s[0].value[i];
      s[0].grad[i] = 2.0 * s[0].value[i];
    }
    adam_step(s, st, tc, step);
  }
  EXPECT_LT(loss, 1e-6);
  EXPECT_LE(step, 2000u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore s;
  s.add("head.bias", 1, 1);
  s[0].grad[0] = std::nan("");
  OptimState st(s);
  try {
    adam_step(s, st, TrainConfig{}, 7);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig tc;
  tc.validate();
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.background_au = 0.0;
  EXPECT_THROW(tc.validate(), std::invalid_argument);
  tc.background_eu = 0.0;
  tc.validate();
}

TEST(Train, ZeroIterationsReturnsInitialField) {
  RunConfig rc = tiny_run();
  rc.train.iterations = 0;
  const Dataset d = make_dataset(rc);
  Rng rng(3);
  const Field init = Field::initialized(rc.field, rng);
  const TrainResult r = train(d.train, d.scene, rc.train, rc.field, nullptr, &init);
  EXPECT_TRUE(r.trace.empty());
  for (std::size_t i = 0; i < init.params().size(); ++i) EXPECT_EQ(r.field.params()[i].value, init.params()[i].value);
}

TEST(Train, EvidentialTraceIsFiniteAndDecreases) {
  RunConfig rc = tiny_run();
  rc.train.iterations = 60;
  rc.train.log_interval = 10;
  const Dataset d = make_dataset(rc);
  const TrainResult r = train(d.train, d.scene, rc.train, rc.field);
  ASSERT_FALSE(r.trace.empty());
  EXPECT_EQ(r.trace.front().iteration, 1u);
  EXPECT_EQ(r.trace.back().iteration, 60u);
  for (const auto& row : r.trace) {
    EXPECT_TRUE(std::isfinite(row.total));
    EXPECT_NEAR(row.total, row.nll + rc.train.lambda_reg * row.reg, 1e-9 * std::max(1.0, std::abs(row.total)));
  }
  EXPECT_LT(r.trace.back().total, r.trace.front().total);
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  RunConfig rc = tiny_run();
  rc.train.seed = 5;
  const Dataset d = make_dataset(rc);
  set_thread_count(1);
  const TrainResult a = train(d.train, d.scene, rc.train, rc.field);
  set_thread_count(3);
  const TrainResult b = train(d.train, d.scene, rc.train, rc.field);
  set_thread_count(0);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].total, b.trace[i].total);
  for (std::size_t i = 0; i < a.field.params().size(); ++i) EXPECT_EQ(a.field.params()[i].value, b.field.params()[i].value);
}

TEST(Train, BaselineObjectives) {
  RunConfig rc = tiny_run();
  const Dataset d = make_dataset(rc);
  for (const Objective o : {Objective::kNormal, Objective::kVanilla}) {
    rc.train.objective = o;
    const TrainResult r = train(d.train, d.scene, rc.train, rc.field);
    ASSERT_FALSE(r.trace.empty());
    EXPECT_EQ(r.trace.back().reg, 0.0);
    EXPECT_EQ(r.trace.back().total, r.trace.back().nll);
  }
  EXPECT_EQ(parse_objective("normal"), Objective::kNormal);
  EXPECT_STREQ(objective_name(Objective::kEvidential), "evidential");
  EXPECT_THROW(parse_objective("bayes"), std::invalid_argument);
}

TEST(Train, BatchLossGradientCheck) {
  RunConfig rc = tiny_run();
  const Dataset d = make_dataset(rc);
  Rng rng(8);
  Field f = Field::initialized(rc.field, rng);
  const TrainingPixels px = collect_training_pixels(d.train, d.scene.bounds);
  const std::vector<Ray> rays(px.rays.begin(), px.rays.begin() + 3);
  const std::vector<double> targets(px.colors.begin(), px.colors.begin() + 9);
  const SampleBatch batch = sample_batch(rays, 6, &rng);
  rc.train.lambda_reg = 0.1;
  const RenderSettings rs = render_settings_for(d.scene, rc.train);
  const auto r = check_gradients(
      f.params(),
      [&](Tape& t, ParamStore&) {
        const auto leaves = f.bind(t);
        return batch_loss(t, f, leaves, batch, targets, rc.train, rs).total;
      },
      1e-6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Train, TraceCsv) {
  std::ostringstream out;
  write_trace_csv(out, {{1, -1.5, -1.6, 10.0, std::nullopt}, {2, 0.5, 0.5, 0.0, 1e9}});
  const std::string s = out.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "iteration,total,nll,reg,psnr_eval");
  EXPECT_NE(s.find(",99"), std::string::npos);
}

TEST(Evaluate, GroundTruthFieldFreeMetrics) {
  RunConfig rc = tiny_run();
  rc.test_arc.width = rc.test_arc.height = 16;
  const Dataset d = make_dataset(rc);
  Rng rng(4);
  const Field f = Field::initialized(rc.field, rng);
  const ViewMetrics m = evaluate_views(f, d.test, d.scene, render_settings_for(d.scene, rc.train));
  EXPECT_TRUE(std::isfinite(m.psnr));
  EXPECT_GT(m.mean_au, 0.0);
  EXPECT_GT(m.mean_eu, 0.0);
  EXPECT_GE(m.ause_rmse, 0.0);
}
