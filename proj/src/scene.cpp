#include "evfield/scene.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "evfield/parallel.hpp"

namespace evfield {

// ---------------------------------------------------------------- geometry

bool Primitive::contains(const Vec3& x) const {
  if (shape == PrimitiveShape::kSphere) return (x - center).squaredNorm() <= size.x() * size.x();
  return ((x - center).cwiseAbs().array() <= size.array()).all();
}

std::optional<std::pair<double, double>> Primitive::intersect(const Vec3& origin, const Vec3& dir) const {
  if (shape == PrimitiveShape::kSphere) {
    const Vec3 oc = origin - center;
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - size.x() * size.x();
    const double disc = b * b - c;
    if (disc <= 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    return std::make_pair(-b - s, -b + s);
  }
  return Aabb{center - size, center + size}.intersect(origin, dir);
}

bool Aabb::contains(const Vec3& x, double slack) const {
  return ((x.array() >= lo.array() - slack) && (x.array() <= hi.array() + slack)).all();
}

std::optional<std::pair<double, double>> Aabb::intersect(const Vec3& origin, const Vec3& dir) const {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-300) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - origin[a]) / dir[a];
    double tb = (hi[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

// ---------------------------------------------------------------- scene

void SceneSpec::validate() const {
  if (!(bounds.lo.array() < bounds.hi.array()).all()) throw std::invalid_argument("scene: bounds are empty");
  if (!(background.array() >= 0.0).all() || !(background.array() <= 1.0).all()) {
    throw std::invalid_argument("scene: background must lie in [0,1]^3");
  }
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& p = primitives[i];
    const std::string tag = "scene primitive " + std::to_string(i);
    if (!(p.density >= 0.0) || !std::isfinite(p.density)) throw std::invalid_argument(tag + ": density must be >= 0");
    if (!(p.albedo.array() >= 0.0).all() || !(p.albedo.array() <= 1.0).all()) {
      throw std::invalid_argument(tag + ": albedo must lie in [0,1]^3");
    }
    const Vec3 extent = p.shape == PrimitiveShape::kSphere ? Vec3::Constant(p.size.x()) : p.size;
    if (!(extent.array() > 0.0).all()) throw std::invalid_argument(tag + ": size must be positive");
    if (!bounds.contains(p.center - extent, 1e-12) || !bounds.contains(p.center + extent, 1e-12)) {
      throw std::invalid_argument(tag + ": lies outside the scene bounds");
    }
  }
}

double SceneSpec::density_at(const Vec3& x) const {
  double d = 0.0;
  for (const auto& p : primitives) {
    if (p.contains(x)) d += p.density;
  }
  return d;
}

Vec3 SceneSpec::albedo_at(const Vec3& x) const {
  Vec3 c = Vec3::Zero();
  double d = 0.0;
  for (const auto& p : primitives) {
    if (p.contains(x)) {
      c += p.density * p.albedo;
      d += p.density;
    }
  }
  return d > 0.0 ? Vec3(c / d) : Vec3(Vec3::Zero());
}

SceneSpec SceneSpec::default_scene() {
  SceneSpec s;
  s.background = Vec3::Constant(0.5);
  s.bounds = Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  s.primitives.push_back({PrimitiveShape::kSphere, Vec3(-0.4, 0.1, 0.0), Vec3(0.45, 0.0, 0.0), 8.0, Vec3(0.9, 0.25, 0.2)});
  s.primitives.push_back({PrimitiveShape::kSphere, Vec3(0.45, -0.1, 0.3), Vec3(0.35, 0.0, 0.0), 8.0, Vec3(0.2, 0.45, 0.9)});
  s.primitives.push_back({PrimitiveShape::kBox, Vec3(0.15, -0.55, -0.35), Vec3(0.5, 0.2, 0.3), 6.0, Vec3(0.3, 0.85, 0.35)});
  return s;
}

namespace {

Vec3 read_vec3(std::istringstream& in, const std::string& what, int line) {
  Vec3 v;
  if (!(in >> v.x() >> v.y() >> v.z())) {
    throw std::invalid_argument("scene line " + std::to_string(line) + ": expected three numbers for " + what);
  }
  return v;
}

double read_number(std::istringstream& in, const std::string& what, int line) {
  double v;
  if (!(in >> v)) throw std::invalid_argument("scene line " + std::to_string(line) + ": expected a number for " + what);
  return v;
}

}  // namespace

SceneSpec SceneSpec::parse(const std::string& text) {
  SceneSpec s;
  s.primitives.clear();
  std::istringstream lines(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(lines, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream in(raw);
    std::string key;
    if (!(in >> key)) continue;
    if (key == "background") {
      s.background = read_vec3(in, key, line_no);
    } else if (key == "bounds") {
      s.bounds.lo = read_vec3(in, "bounds min", line_no);
      s.bounds.hi = read_vec3(in, "bounds max", line_no);
    } else if (key == "sphere" || key == "box") {
      Primitive p;
      p.shape = key == "sphere" ? PrimitiveShape::kSphere : PrimitiveShape::kBox;
      bool has_center = false, has_size = false, has_density = false, has_albedo = false;
      std::string field;
      while (in >> field) {
        if (field == "center") {
          p.center = read_vec3(in, field, line_no);
          has_center = true;
        } else if (field == "radius" && p.shape == PrimitiveShape::kSphere) {
          p.size = Vec3(read_number(in, field, line_no), 0.0, 0.0);
          has_size = true;
        } else if (field == "half" && p.shape == PrimitiveShape::kBox) {
          p.size = read_vec3(in, field, line_no);
          has_size = true;
        } else if (field == "density") {
          p.density = read_number(in, field, line_no);
          has_density = true;
        } else if (field == "albedo") {
          p.albedo = read_vec3(in, field, line_no);
          has_albedo = true;
        } else {
          throw std::invalid_argument("scene line " + std::to_string(line_no) + ": unknown " + key + " field '" + field + "'");
        }
      }
      if (!(has_center && has_size && has_density && has_albedo)) {
        throw std::invalid_argument("scene line " + std::to_string(line_no) + ": " + key +
                                    " needs center, " + (key == "sphere" ? "radius" : "half") + ", density and albedo");
      }
      s.primitives.push_back(p);
      continue;
    } else {
      throw std::invalid_argument("scene line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    std::string extra;
    if (in >> extra) throw std::invalid_argument("scene line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
  }
  s.validate();
  return s;
}

SceneSpec SceneSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::string SceneSpec::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "background " << background.x() << ' ' << background.y() << ' ' << background.z() << '\n';
  out << "bounds " << bounds.lo.x() << ' ' << bounds.lo.y() << ' ' << bounds.lo.z() << ' ' << bounds.hi.x() << ' '
      << bounds.hi.y() << ' ' << bounds.hi.z() << '\n';
  for (const auto& p : primitives) {
    out << (p.shape == PrimitiveShape::kSphere ? "sphere" : "box") << " center " << p.center.x() << ' ' << p.center.y()
        << ' ' << p.center.z();
    if (p.shape == PrimitiveShape::kSphere) {
      out << " radius " << p.size.x();
    } else {
      out << " half " << p.size.x() << ' ' << p.size.y() << ' ' << p.size.z();
    }
    out << " density " << p.density << " albedo " << p.albedo.x() << ' ' << p.albedo.y() << ' ' << p.albedo.z() << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- cameras

void Camera::validate() const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("Camera: rotation is not orthonormal");
  }
  if (!(focal > 0.0)) throw std::invalid_argument("Camera: focal length must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("Camera: resolution must be positive");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) throw std::invalid_argument("Camera::look_at: up is parallel to the view direction");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.position = eye;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

Camera Camera::resized(int new_width, int new_height) const {
  Camera c = *this;
  c.focal = focal * static_cast<double>(new_width) / static_cast<double>(width);
  c.width = new_width;
  c.height = new_height;
  c.validate();
  return c;
}

Ray Camera::pixel_ray(double px, double py) const {
  const Vec3 local((px - 0.5 * width) / focal, (py - 0.5 * height) / focal, 1.0);
  Ray r;
  r.origin = position;
  r.direction = (rotation * local).normalized();
  return r;
}

std::vector<Ray> camera_rays(const Camera& camera, const Aabb& bounds) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height));
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      Ray r = camera.pixel_ray(x + 0.5, y + 0.5);
      const auto hit = bounds.intersect(r.origin, r.direction);
      if (hit && hit->second > 0.0) {
        r.near = std::max(hit->first, 0.0);
        r.far = hit->second;
      } else {
        r.near = r.far = 0.0;
      }
      rays.push_back(r);
    }
  }
  return rays;
}

// ---------------------------------------------------------------- ground truth

Vec3 ground_truth_pixel(const SceneSpec& scene, const Ray& ray, std::size_t quadrature) {
  if (quadrature < 256) throw std::invalid_argument("ground_truth_pixel: quadrature must be >= 256");
  const auto hit = scene.bounds.intersect(ray.origin, ray.direction);
  if (!hit || hit->second <= 0.0) return scene.background;
  const double t0 = std::max(hit->first, 0.0), t1 = hit->second;

  std::vector<double> knots;
  knots.reserve(quadrature + 2 * scene.primitives.size() + 1);
  for (std::size_t i = 0; i <= quadrature; ++i) {
    knots.push_back(t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(quadrature));
  }
  for (const auto& p : scene.primitives) {
    if (const auto span = p.intersect(ray.origin, ray.direction)) {
      for (double t : {span->first, span->second}) {
        if (t > t0 && t < t1) knots.push_back(t);
      }
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end(), [](double a, double b) { return b - a < 1e-12; }), knots.end());

  std::vector<double> densities, intervals;
  std::vector<Vec3> colors;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double mid = 0.5 * (knots[i] + knots[i + 1]);
    const Vec3 x = ray.at(mid);
    densities.push_back(scene.density_at(x));
    colors.push_back(scene.albedo_at(x));
    intervals.push_back(knots[i + 1] - knots[i]);
  }
  const auto w = compute_weights(densities, intervals);
  Vec3 c = Vec3::Zero();
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    c += w[i] * colors[i];
    acc += w[i];
  }
  return c + (1.0 - acc) * scene.background;
}

Image render_ground_truth(const SceneSpec& scene, const Camera& camera, std::size_t quadrature) {
  camera.validate();
  Image img(camera.width, camera.height);
  parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < camera.width; ++x) {
      const Vec3 c = ground_truth_pixel(scene, camera.pixel_ray(x + 0.5, y + 0.5), quadrature);
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  });
  return img;
}

// ---------------------------------------------------------------- views

void ViewSet::validate() const {
  if (images.size() != cameras.size() || noise_masks.size() != cameras.size() || transient_masks.size() != cameras.size()) {
    throw std::invalid_argument("ViewSet: cameras, images and masks differ in count");
  }
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& cam = cameras[i];
    const auto& img = images[i];
    const std::size_t pixels = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
    if (img.width != cam.width || img.height != cam.height || img.rgb.size() != 3 * pixels) {
      throw std::invalid_argument("ViewSet: image " + std::to_string(i) + " does not match its camera");
    }
    if (noise_masks[i].size() != pixels || transient_masks[i].size() != pixels) {
      throw std::invalid_argument("ViewSet: mask " + std::to_string(i) + " does not match its camera");
    }
  }
}

ViewSet ViewSet::subset(const std::vector<std::size_t>& indices) const {
  ViewSet out;
  for (std::size_t i : indices) {
    out.cameras.push_back(cameras.at(i));
    out.images.push_back(images.at(i));
    out.noise_masks.push_back(noise_masks.at(i));
    out.transient_masks.push_back(transient_masks.at(i));
  }
  return out;
}

std::vector<Camera> arc_cameras(const CameraArc& arc, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("arc_cameras: need at least one view");
  constexpr double kDeg = std::numbers::pi / 180.0;
  std::vector<Camera> cams;
  cams.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    const double az =
        (arc.azimuth_begin_deg + frac * (arc.azimuth_end_deg - arc.azimuth_begin_deg) + arc.azimuth_offset_deg) * kDeg;
    const double el = rng.uniform(arc.elevation_min_deg, arc.elevation_max_deg) * kDeg;
    const Vec3 eye = arc.radius * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), arc.focal_scale * arc.width, arc.width, arc.height));
  }
  return cams;
}

ViewSet render_views(const SceneSpec& scene, const std::vector<Camera>& cameras, std::size_t quadrature) {
  ViewSet views;
  views.cameras = cameras;
  for (const auto& cam : cameras) {
    views.images.push_back(render_ground_truth(scene, cam, quadrature));
    views.noise_masks.emplace_back(views.images.back().pixel_count(), 0);
    views.transient_masks.emplace_back(views.images.back().pixel_count(), 0);
  }
  return views;
}

ViewSet generate_views(const SceneSpec& scene, const CameraArc& arc, std::size_t count, Rng& rng,
                       std::size_t quadrature) {
  scene.validate();
  return render_views(scene, arc_cameras(arc, count, rng), quadrature);
}

bool ImageRegion::contains(int px, int py, int width, int height) const {
  const double u = (px + 0.5) / width;
  const double v = (py + 0.5) / height;
  return u >= x0 && u < x1 && v >= y0 && v < y1;
}

ViewSet inject_aleatoric(const ViewSet& views, const ImageRegion& region, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("inject_aleatoric: sigma must be >= 0");
  views.validate();
  ViewSet out = views;
  if (sigma == 0.0) return out;
  for (std::size_t v = 0; v < out.size(); ++v) {
    auto& img = out.images[v];
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        if (!region.contains(x, y, img.width, img.height)) continue;
        const std::size_t k = static_cast<std::size_t>(y) * img.width + x;
        if (out.transient_masks[v][k]) continue;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(img.at(x, y, c) + rng.normal(0.0, sigma), 0.0, 1.0);
        out.noise_masks[v][k] = 1;
      }
    }
  }
  return out;
}

ViewSet inject_transients(const ViewSet& views, std::size_t count, Rng& rng, double min_size, double max_size) {
  if (!(min_size > 0.0 && min_size <= max_size && max_size <= 1.0)) {
    throw std::invalid_argument("inject_transients: need 0 < min_size <= max_size <= 1");
  }
  views.validate();
  ViewSet out = views;
  for (std::size_t v = 0; v < out.size(); ++v) {
    auto& img = out.images[v];
    for (std::size_t t = 0; t < count; ++t) {
      const int w = std::max(1, static_cast<int>(std::lround(rng.uniform(min_size, max_size) * img.width)));
      const int h = std::max(1, static_cast<int>(std::lround(rng.uniform(min_size, max_size) * img.height)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.width - w + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(img.height - h + 1)));
      const Vec3 color(rng.uniform(), rng.uniform(), rng.uniform());
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          const std::size_t k = static_cast<std::size_t>(y) * img.width + x;
          if (out.noise_masks[v][k]) continue;
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
          out.transient_masks[v][k] = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace evfield
