#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evfield/apps.hpp"
#include "evfield/field.hpp"
#include "evfield/scene.hpp"
#include "evfield/train.hpp"

namespace evfield {

// Options shared by the command-line tools. Text form is one `key = value`
// per line; `#` starts a comment; list values are comma separated.
struct RunConfig {
  std::filesystem::path scene_path;  // empty: built-in default scene
  std::filesystem::path output_dir = "out";
  std::size_t threads = 0;

  // Synthetic data set.
  std::uint64_t data_seed = 0;
  std::size_t train_views = 20;
  std::size_t test_views = 8;
  CameraArc train_arc;
  CameraArc test_arc;
  std::size_t quadrature = 512;
  double noise_sigma = 0.0;
  std::string noise_region = "left";  // left | all
  std::size_t transients = 0;

  TrainConfig train;
  FieldConfig field;
  UncertaintyKind uncertainty = UncertaintyKind::kTotal;

  // clean
  std::vector<double> tau_quantiles{0.5, 0.25, 0.1, 0.05, 0.02};
  double attenuation = 0.0;
  // sweep-lambda
  std::vector<double> lambdas{1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 5.0};
  // active
  std::size_t pool_views = 30;
  ActiveLearnConfig active;

  // Applies one key; throws std::invalid_argument for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // Checks invariants, including that referenced paths exist.
  void validate() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  // Every key with its current value, in a form parse() accepts.
  std::string to_text() const;
  static std::vector<std::string> keys();

  SceneSpec scene() const;
};

struct Dataset {
  SceneSpec scene;
  ViewSet train;  // with any configured corruption
  ViewSet test;   // clean
};

// Renders ground-truth views and applies the configured noise/transients.
Dataset make_dataset(const RunConfig& config);

const char* uncertainty_name(UncertaintyKind kind);
UncertaintyKind parse_uncertainty(const std::string& name);

struct MetricsRow {
  std::string scene;
  std::string method;
  ViewMetrics metrics;
};

// scene,method,psnr,ssim,nll,ause_rmse,ause_mae
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

}  // namespace evfield
