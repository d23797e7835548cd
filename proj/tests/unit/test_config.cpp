#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "evfield/config.hpp"

using namespace evfield;

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig rc;
  EXPECT_THROW(rc.set("no_such_key", "1"), std::invalid_argument);
  EXPECT_THROW(rc.set("iterations", "many"), std::invalid_argument);
  EXPECT_THROW(rc.set("objective", "bayes"), std::invalid_argument);
  EXPECT_THROW(RunConfig::parse("iterations 5\n"), std::invalid_argument);
}

TEST(RunConfig, ParseAndRoundTrip) {
  const RunConfig rc = RunConfig::parse(
      "# comment\n"
      "objective = vanilla\n"
      "iterations = 123\n"
      "learning_rate = 1e-3\n"
      "tau_quantiles = 0.4, 0.2\n"
      "noise_region = all\n");
  EXPECT_EQ(rc.train.objective, Objective::kVanilla);
  EXPECT_EQ(rc.train.iterations, 123u);
  EXPECT_DOUBLE_EQ(rc.train.learning_rate, 1e-3);
  EXPECT_EQ(rc.tau_quantiles, (std::vector<double>{0.4, 0.2}));
  const RunConfig again = RunConfig::parse(rc.to_text());
  EXPECT_EQ(again.to_text(), rc.to_text());
  for (const auto& key : RunConfig::keys()) EXPECT_NE(rc.to_text().find(key + " ="), std::string::npos) << key;
}

TEST(RunConfig, Validation) {
  RunConfig rc;
  rc.validate();
  rc.scene_path = "/definitely/missing/scene.txt";
  EXPECT_ANY_THROW(rc.validate());
  rc = RunConfig{};
  EXPECT_THROW(rc.set("noise_region", "top"), std::invalid_argument);
}

TEST(Dataset, SplitsAndCorruption) {
  RunConfig rc;
  rc.train_views = 3;
  rc.test_views = 2;
  rc.train_arc.width = rc.train_arc.height = 8;
  rc.test_arc.width = rc.test_arc.height = 8;
  rc.quadrature = 256;
  rc.noise_sigma = 0.1;
  const Dataset d = make_dataset(rc);
  EXPECT_EQ(d.train.size(), 3u);
  EXPECT_EQ(d.test.size(), 2u);
  std::size_t noisy = 0;
  for (auto m : d.train.noise_masks[0]) noisy += m;
  EXPECT_EQ(noisy, 32u);
  for (auto m : d.test.noise_masks[0]) EXPECT_EQ(m, 0);
  const Dataset e = make_dataset(rc);
  EXPECT_EQ(d.train.images[1].rgb, e.train.images[1].rgb);
}

TEST(Uncertainty, Names) {
  EXPECT_EQ(parse_uncertainty("epistemic"), UncertaintyKind::kEpistemic);
  EXPECT_STREQ(uncertainty_name(UncertaintyKind::kAleatoric), "aleatoric");
  EXPECT_THROW(parse_uncertainty("both"), std::invalid_argument);
}
