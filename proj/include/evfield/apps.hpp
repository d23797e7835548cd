#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "evfield/field.hpp"
#include "evfield/render.hpp"
#include "evfield/scene.hpp"
#include "evfield/train.hpp"

namespace evfield {

// Scene cleaning: samples whose point AU exceeds τ have their density scaled
// by `attenuation` before the weights are computed.
struct CleaningConfig {
  double tau = 1.0;
  double attenuation = 0.0;

  void validate() const;  // τ > 0 (may be +inf), attenuation in [0, 1]
};

std::vector<PixelEvidential> clean_render(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                          const CleaningConfig& config);
RenderedView clean_render(const Field& field, const Camera& camera, const Aabb& bounds,
                          const RenderSettings& settings, const CleaningConfig& config);

// Point AU of the samples (midpoint sampling) whose rendering weight reaches
// min_weight, used to place a τ sweep. Samples in empty space are skipped
// because their AU never reaches a pixel.
std::vector<double> sample_point_au(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                    double min_weight = 1e-3);
// Descending thresholds at the given upper quantiles of the samples' AU.
std::vector<double> tau_sweep(std::vector<double> point_au, std::span<const double> quantiles);

enum class SelectionStrategy { kEpistemic, kRandom };
const char* strategy_name(SelectionStrategy s);
SelectionStrategy parse_strategy(const std::string& name);

struct ActiveLearnConfig {
  std::size_t initial_views = 5;
  std::size_t rounds = 5;
  std::size_t views_per_round = 5;
  // One epoch is one pass over the current training pixels, i.e.
  // ceil(pixels / batch_rays) iterations.
  std::size_t epochs_per_round = 5;
  SelectionStrategy strategy = SelectionStrategy::kEpistemic;
  std::vector<std::uint64_t> seeds{0};
  int score_downscale = 4;  // candidate EU is scored on a render at 1/score_downscale resolution
  TrainConfig train;        // objective, optimizer and batch settings; seed/iterations are set per round
  FieldConfig field;

  void validate() const;
};

struct ActiveLearnRow {
  std::size_t round = 0;
  SelectionStrategy strategy = SelectionStrategy::kEpistemic;
  std::uint64_t seed = 0;
  std::size_t n_views = 0;
  double psnr = 0.0;
};

// Mean pixel EU of a reduced-resolution render from the camera.
double view_eu_score(const Field& field, const Camera& camera, const SceneSpec& scene, const RenderSettings& settings,
                     int downscale);

// Throws std::invalid_argument when the pool cannot supply
// initial + rounds * views_per_round views.
std::vector<ActiveLearnRow> active_learn(const ViewSet& pool, const ViewSet& test_views, const SceneSpec& scene,
                                         const ActiveLearnConfig& config);

// round,strategy,seed,n_views,psnr
void write_active_csv(std::ostream& out, const std::vector<ActiveLearnRow>& rows);

}  // namespace evfield
