#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evfield/autodiff.hpp"
#include "evfield/field.hpp"
#include "evfield/metrics.hpp"
#include "evfield/render.hpp"
#include "evfield/scene.hpp"

namespace evfield {

enum class Objective { kEvidential, kNormal, kVanilla };

const char* objective_name(Objective objective);
Objective parse_objective(const std::string& name);

struct TrainConfig {
  Objective objective = Objective::kEvidential;
  double lambda_reg = 1e-2;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_rays = 1024;
  std::size_t iterations = 0;
  std::size_t samples_per_ray = 64;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 0;  // 0: never
  std::size_t log_interval = 100;
  double eu_max = 1.0;
  // Background share of the pixel uncertainties (see RenderSettings). With
  // background_au = 0 the optimizer can drive AU of background rays to zero by
  // emptying the scene, so training enables it by default.
  double background_au = 1e-5;
  double background_eu = 1e-5;
  double background_shape = 1.0;
  // Rays per gradient chunk; chunk gradients are merged in chunk order so the
  // result does not depend on the number of worker threads.
  std::size_t chunk_rays = 64;
  std::filesystem::path checkpoint_path;  // empty: no checkpoints
  std::size_t checkpoint_interval = 0;

  void validate() const;
};

struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;

  OptimState() = default;
  explicit OptimState(const ParamStore& params);
};

// Bias-corrected Adam using params[i].grad. Throws NumericError naming the
// parameter (and `iteration`, for diagnostics) on a non-finite gradient.
void adam_step(ParamStore& params, OptimState& state, const TrainConfig& config, std::size_t iteration = 0);

struct TraceRow {
  std::size_t iteration = 0;
  double total = 0.0;
  double nll = 0.0;  // data term: evidential or Gaussian NLL, or MSE for vanilla
  double reg = 0.0;
  std::optional<double> psnr_eval;
};

// iteration,total,nll,reg,psnr_eval
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

struct TrainingPixels {
  std::vector<Ray> rays;
  std::vector<double> colors;  // rays x 3
};

// Rays (clipped to the bounds) and target colors of every pixel whose ray
// enters the scene bounds.
TrainingPixels collect_training_pixels(const ViewSet& views, const Aabb& bounds);

struct TrainResult {
  Field field;
  std::vector<TraceRow> trace;
};

// Starts from `initial` when given (warm start), otherwise from a fresh
// initialization seeded by config.seed.
TrainResult train(const ViewSet& train_views, const SceneSpec& scene, const TrainConfig& config,
                  const FieldConfig& field_config, const ViewSet* eval_views = nullptr,
                  const Field* initial = nullptr);

// Single optimization objective on a batch; exposed for gradient checks.
struct BatchLoss {
  Var total;
  Var nll;
  Var reg;
};
BatchLoss batch_loss(Tape& tape, const Field& field, std::span<const Var> leaves, const SampleBatch& batch,
                     std::span<const double> target_colors, const TrainConfig& config, const RenderSettings& settings);

RenderSettings render_settings_for(const SceneSpec& scene, const TrainConfig& config);

// ---------------------------------------------------------------- evaluation

struct RenderedView {
  int width = 0;
  int height = 0;
  std::vector<PixelEvidential> pixels;

  Image mean_color() const;
  std::vector<double> au() const;
  std::vector<double> eu() const;
  std::vector<double> total_uncertainty() const;
};

RenderedView render_view(const Field& field, const Camera& camera, const Aabb& bounds, const RenderSettings& settings,
                         const DensityAttenuation* attenuation = nullptr);

struct ViewMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double nll = 0.0;
  double ause_rmse = 0.0;
  double ause_mae = 0.0;
  double mean_au = 0.0;
  double mean_eu = 0.0;
  double mse = 0.0;
};

enum class UncertaintyKind { kTotal, kAleatoric, kEpistemic };

ViewMetrics evaluate_view(const RenderedView& view, const Image& gt, UncertaintyKind kind = UncertaintyKind::kTotal);
// Averages per-view metrics (PSNR from the pooled MSE).
ViewMetrics evaluate_views(const Field& field, const ViewSet& views, const SceneSpec& scene,
                           const RenderSettings& settings, UncertaintyKind kind = UncertaintyKind::kTotal);

}  // namespace evfield
