#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "evfield/apps.hpp"
#include "evfield/config.hpp"

using namespace evfield;

namespace {

RunConfig small() {
  RunConfig rc;
  rc.train_views = 12;
  rc.test_views = 2;
  rc.train_arc.width = rc.train_arc.height = 8;
  rc.test_arc.width = rc.test_arc.height = 12;
  rc.quadrature = 256;
  rc.field.trunk_depth = 2;
  rc.field.trunk_width = 8;
  rc.field.pos_frequencies = 2;
  rc.train.batch_rays = 32;
  rc.train.samples_per_ray = 6;
  return rc;
}

}  // namespace

TEST(Cleaning, InfiniteThresholdIsPlainRender) {
  const RunConfig rc = small();
  const Dataset d = make_dataset(rc);
  Rng rng(1);
  const Field f = Field::initialized(rc.field, rng);
  const RenderSettings rs = render_settings_for(d.scene, rc.train);
  const auto plain = render_view(f, d.test.cameras[0], d.scene.bounds, rs);
  const auto cleaned = clean_render(f, d.test.cameras[0], d.scene.bounds, rs,
                                    {std::numeric_limits<double>::infinity(), 0.0});
  ASSERT_EQ(plain.pixels.size(), cleaned.pixels.size());
  for (std::size_t i = 0; i < plain.pixels.size(); ++i) {
    EXPECT_EQ(plain.pixels[i].mean_color, cleaned.pixels[i].mean_color);
    EXPECT_EQ(plain.pixels[i].au, cleaned.pixels[i].au);
  }
}

TEST(Cleaning, TinyThresholdGivesBackground) {
  const RunConfig rc = small();
  const Dataset d = make_dataset(rc);
  Rng rng(2);
  const Field f = Field::initialized(rc.field, rng);
  for (const bool bg_terms : {false, true}) {
    RenderSettings rs = render_settings_for(d.scene, rc.train);
    if (!bg_terms) rs.background_au = rs.background_eu = 0.0;
    const auto img = clean_render(f, d.test.cameras[0], d.scene.bounds, rs, {1e-300, 0.0}).mean_color();
    for (std::size_t i = 0; i < img.rgb.size(); ++i) EXPECT_NEAR(img.rgb[i], d.scene.background[i % 3], 1e-12);
  }
}

TEST(Cleaning, ConfigValidation) {
  CleaningConfig c;
  c.validate();
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.attenuation = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Cleaning, TauSweepDescends) {
  std::vector<double> au(1000);
  for (std::size_t i = 0; i < au.size(); ++i) au[i] = static_cast<double>(i);
  const std::vector<double> q = {0.02, 0.5, 0.1};
  const auto taus = tau_sweep(au, q);
  ASSERT_EQ(taus.size(), 3u);
  EXPECT_GT(taus[0], taus[1]);
  EXPECT_GT(taus[1], taus[2]);
  EXPECT_NEAR(taus[2], 499.0, 1.0);
  const std::vector<double> bad = {1.5};
  EXPECT_THROW(tau_sweep(au, bad), std::invalid_argument);
  EXPECT_THROW(tau_sweep({}, q), std::invalid_argument);
}

TEST(ActiveLearning, ZeroRoundsReportsInitialModelOnly) {
  const RunConfig rc = small();
  const Dataset d = make_dataset(rc);
  ActiveLearnConfig ac;
  ac.train = rc.train;
  ac.field = rc.field;
  ac.rounds = 0;
  ac.epochs_per_round = 1;
  ac.seeds = {0, 1};
  const auto rows = active_learn(d.train, d.test, d.scene, ac);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.round, 0u);
    EXPECT_EQ(r.n_views, ac.initial_views);
  }
}

TEST(ActiveLearning, RandomSelectionIsReproducible) {
  const RunConfig rc = small();
  const Dataset d = make_dataset(rc);
  ActiveLearnConfig ac;
  ac.train = rc.train;
  ac.field = rc.field;
  ac.initial_views = 2;
  ac.rounds = 2;
  ac.views_per_round = 2;
  ac.epochs_per_round = 1;
  ac.strategy = SelectionStrategy::kRandom;
  const auto a = active_learn(d.train, d.test, d.scene, ac);
  const auto b = active_learn(d.train, d.test, d.scene, ac);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].psnr, b[i].psnr);
    EXPECT_EQ(a[i].n_views, 2 + 2 * i);
  }
}

TEST(ActiveLearning, PoolTooSmall) {
  const RunConfig rc = small();
  const Dataset d = make_dataset(rc);
  ActiveLearnConfig ac;
  ac.train = rc.train;
  ac.field = rc.field;
  ac.initial_views = 10;
  ac.rounds = 1;
  ac.views_per_round = 5;
  EXPECT_THROW(active_learn(d.train, d.test, d.scene, ac), std::invalid_argument);
  EXPECT_EQ(parse_strategy("eu"), SelectionStrategy::kEpistemic);
  EXPECT_THROW(parse_strategy("greedy"), std::invalid_argument);
}
