#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "evfield/autodiff.hpp"
#include "evfield/rng.hpp"

namespace evfield {

using Vec3 = Eigen::Vector3d;

// Floors shared by the field and the compositor.
inline constexpr double kUncertaintyFloor = 1e-6;  // added to point AU, EU and shape score
inline constexpr double kWeightFloor = 1e-8;       // below this a ray counts as empty

struct FieldConfig {
  int pos_frequencies = 6;
  int dir_frequencies = 2;
  int trunk_depth = 4;
  int trunk_width = 64;
  double uncertainty_floor = kUncertaintyFloor;

  std::size_t pos_encoding_size() const { return 3 + 6 * static_cast<std::size_t>(pos_frequencies); }
  std::size_t dir_encoding_size() const { return 3 + 6 * static_cast<std::size_t>(dir_frequencies); }
};

// Columns of the color/uncertainty head.
inline constexpr std::size_t kHeadWidth = 6;  // r, g, b, AU, EU, shape score

struct PointPrediction {
  std::array<double, 3> mean_color{};
  double au = 0.0;
  double eu = 0.0;
  double shape_score = 0.0;
  double density = 0.0;
};

// [p, sin(2^k π p), cos(2^k π p) for k = 0..L-1], length 3 + 6L.
std::vector<double> positional_encode(const Vec3& p, int frequencies);
// Row-wise encoding of an Nx3 row-major array into N x (3 + 6L).
void positional_encode(std::span<const double> points, int frequencies, std::vector<double>& out);

// Differentiable per-point outputs for a batch of P samples.
struct FieldOutputs {
  Var color;        // P x 3, sigmoid
  Var au;           // P x 1, softplus + floor
  Var eu;           // P x 1, softplus + floor
  Var shape_score;  // P x 1, softplus + floor
  Var density;      // P x 1, softplus
};

// Positional encoding + MLP trunk; density is read off the trunk (position
// only), the color/uncertainty head also sees the encoded view direction.
class Field {
 public:
  explicit Field(const FieldConfig& config);

  // Weights and biases uniform in ±1/sqrt(fan_in).
  static Field initialized(const FieldConfig& config, Rng& rng);

  const FieldConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Parameter leaves: constants (inference), store gradients, or a private buffer.
  std::vector<Var> bind_constants(Tape& tape) const;
  std::vector<Var> bind(Tape& tape);
  std::vector<Var> bind(Tape& tape, GradBuffer& buffer) const;

  // positions/directions are P x 3 row-major.
  FieldOutputs forward(Tape& tape, std::span<const Var> leaves, std::span<const double> positions,
                       std::span<const double> directions) const;

  // Single-point evaluation. Throws std::invalid_argument for a non-unit or
  // non-finite input.
  PointPrediction evaluate_point(const Vec3& x, const Vec3& d) const;

  void save(const std::filesystem::path& path) const;
  static Field load(const std::filesystem::path& path);

 private:
  FieldConfig config_;
  ParamStore params_;
  std::size_t first_trunk_ = 0;
  std::size_t density_weight_ = 0;
  std::size_t head_weight_ = 0;
};

}  // namespace evfield
