#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "evfield/autodiff.hpp"
#include "evfield/field.hpp"
#include "evfield/rng.hpp"

namespace evfield {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0.0;
  double far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
  // Throws std::invalid_argument unless near < far and |direction| = 1.
  void validate() const;
};

struct RaySamples {
  std::vector<double> depths;
  std::vector<double> intervals;
  std::vector<double> weights;
  std::optional<std::vector<double>> normalized_weights;
};

// Pixel-level evidential prediction. Uncertainties are shared by the three
// color channels.
struct PixelEvidential {
  std::array<double, 3> mean_color{};
  double u = 0.0;
  double au = 0.0;
  double eu = 0.0;
  std::array<double, 3> gamma{};
  double nu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double opacity = 0.0;
  bool empty = false;  // sum of weights fell below the weight floor
};

struct RenderSettings {
  std::size_t samples_per_ray = 64;
  Vec3 background = Vec3::Constant(0.5);
  double eu_max = 1.0;
  double uncertainty_floor = kUncertaintyFloor;
  double weight_floor = kWeightFloor;
  // Background as an extra composited point with weight 1 - Σw. Zero (the
  // default) leaves the uncertainty terms without any background share and
  // keeps the empty-ray fallback. When positive, both must be positive and the
  // fallback is not applied, so gradients reach rays of any opacity.
  double background_au = 0.0;
  double background_eu = 0.0;
  double background_shape = 1.0;

  bool background_uncertainty() const { return background_au > 0.0; }
};

// Samples whose point AU exceeds the threshold get density * factor before
// the weights are computed.
struct DensityAttenuation {
  double au_threshold = 0.0;
  double factor = 0.0;
};

// One uniform draw per equal-width bin of [near, far].
std::vector<double> sample_stratified(const Ray& ray, std::size_t count, Rng& rng);
// Same, with the in-bin offsets (each in [0, 1)) supplied by the caller.
std::vector<double> sample_stratified(const Ray& ray, std::span<const double> offsets);

// δ_i = t_{i+1} - t_i, and δ_N = far - t_N.
std::vector<double> intervals_from_depths(std::span<const double> depths, double far);

// w_i = exp(-Σ_{j<i} ρ_j δ_j) (1 - exp(-ρ_i δ_i)). Throws on negative density
// or non-positive interval.
std::vector<double> compute_weights(std::span<const double> densities, std::span<const double> intervals);

// Point-to-pixel propagation and NIG assembly for one ray.
PixelEvidential composite(std::span<const double> weights, std::span<const PointPrediction> points,
                          const RenderSettings& settings = {});

// Pixel for rays that miss the bounds, and for rays below the weight floor
// when the background carries no uncertainty.
PixelEvidential empty_pixel(const RenderSettings& settings);

// ---------------------------------------------------------------- batched graph

struct SampleBatch {
  std::size_t rays = 0;
  std::size_t samples = 0;
  std::vector<double> positions;   // (rays*samples) x 3
  std::vector<double> directions;  // (rays*samples) x 3
  std::vector<double> depths;      // rays x samples
  std::vector<double> intervals;   // rays x samples
};

// Stratified samples when rng is non-null, bin midpoints otherwise.
SampleBatch sample_batch(std::span<const Ray> rays, std::size_t samples, Rng* rng);

// Differentiable pixel quantities for a batch of R rays. All R x 1 except
// `color` (R x 3) and `weights` (R x N).
struct PixelGraph {
  Var color;
  Var au;
  Var eu;
  Var alpha;
  Var nu;
  Var beta;
  Var weights;
  Var point_au;  // rays x samples
  Var opacity;
  std::vector<std::uint8_t> empty;
};

PixelGraph render_graph(Tape& tape, const Field& field, std::span<const Var> leaves, const SampleBatch& batch,
                        const RenderSettings& settings, const DensityAttenuation* attenuation = nullptr);

// Inference over many rays in chunks (parallel over chunks).
std::vector<PixelEvidential> render_rays(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                         const DensityAttenuation* attenuation = nullptr, std::size_t chunk = 1024);

}  // namespace evfield
