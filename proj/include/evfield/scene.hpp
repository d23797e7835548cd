#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evfield/render.hpp"
#include "evfield/rng.hpp"

namespace evfield {

enum class PrimitiveShape { kSphere, kBox };

struct Primitive {
  PrimitiveShape shape = PrimitiveShape::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.5);  // sphere: size.x() is the radius; box: half extents
  double density = 1.0;
  Vec3 albedo = Vec3::Constant(0.5);

  bool contains(const Vec3& x) const;
  // Entry/exit depths along the ray, if it hits.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const;
};

struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& x, double slack = 0.0) const;
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Constant(0.5);
  Aabb bounds;

  // Densities >= 0, albedos in [0,1], primitives inside the bounds.
  void validate() const;

  double density_at(const Vec3& x) const;
  // Density-weighted albedo of the primitives containing x (zero if none).
  Vec3 albedo_at(const Vec3& x) const;

  // Two spheres and a box in [-1,1]^3 over a mid-gray background.
  static SceneSpec default_scene();

  // Line-oriented text format, see README.
  static SceneSpec parse(const std::string& text);
  static SceneSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

// Pinhole camera; `rotation` maps camera axes (x right, y down, z forward)
// to world axes, `position` is the camera center in world coordinates.
struct Camera {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 position = Vec3::Zero();
  double focal = 1.0;  // pixels
  int width = 1;
  int height = 1;

  void validate() const;
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height);
  // Same pose with intrinsics scaled to a new resolution.
  Camera resized(int new_width, int new_height) const;
  Ray pixel_ray(double px, double py) const;
};

// One ray per pixel (row-major, y down) clipped to the bounds. Rays that miss
// the bounds get near == far == 0.
std::vector<Ray> camera_rays(const Camera& camera, const Aabb& bounds);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // row-major, interleaved

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), rgb(3 * static_cast<std::size_t>(w) * h, fill) {}
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double& at(int x, int y, int c) { return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c]; }
  double at(int x, int y, int c) const { return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c]; }
};

// Boolean per-pixel mask stored as bytes.
using PixelMask = std::vector<std::uint8_t>;

struct ViewSet {
  std::vector<Camera> cameras;
  std::vector<Image> images;
  std::vector<PixelMask> noise_masks;
  std::vector<PixelMask> transient_masks;

  std::size_t size() const { return cameras.size(); }
  // Throws unless every image/mask matches its camera's resolution.
  void validate() const;
  ViewSet subset(const std::vector<std::size_t>& indices) const;
};

// Cameras evenly spaced in azimuth over [begin, end) on a circle around the
// scene center, elevation drawn uniformly from [min, max]. Azimuth 0 looks
// from +z; positive elevation is above the x-z plane.
struct CameraArc {
  double radius = 3.0;
  double azimuth_begin_deg = 0.0;
  double azimuth_end_deg = 360.0;
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 30.0;
  double focal_scale = 1.2;  // focal = focal_scale * width
  int width = 64;
  int height = 64;
  double azimuth_offset_deg = 0.0;  // shifts all views, used to interleave train/test arcs
};

// Piecewise-constant quadrature that splits [near, far] at every primitive
// boundary, so the discrete compositing is exact within each segment.
Vec3 ground_truth_pixel(const SceneSpec& scene, const Ray& ray, std::size_t quadrature = 512);
Image render_ground_truth(const SceneSpec& scene, const Camera& camera, std::size_t quadrature = 512);

std::vector<Camera> arc_cameras(const CameraArc& arc, std::size_t count, Rng& rng);
ViewSet generate_views(const SceneSpec& scene, const CameraArc& arc, std::size_t count, Rng& rng,
                       std::size_t quadrature = 512);
ViewSet render_views(const SceneSpec& scene, const std::vector<Camera>& cameras, std::size_t quadrature = 512);

// Axis-aligned image rectangle in fractional coordinates.
struct ImageRegion {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;

  static ImageRegion left_half() { return {0.0, 0.0, 0.5, 1.0}; }
  bool contains(int px, int py, int width, int height) const;
};

// Gaussian noise inside the region, clamped to [0, 1]; sets noise masks.
ViewSet inject_aleatoric(const ViewSet& views, const ImageRegion& region, double sigma, Rng& rng);
// `count` random solid rectangles per view; never covers noise-masked pixels.
ViewSet inject_transients(const ViewSet& views, std::size_t count, Rng& rng, double min_size = 0.1,
                          double max_size = 0.3);

}  // namespace evfield
