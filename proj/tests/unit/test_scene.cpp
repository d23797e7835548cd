#include <gtest/gtest.h>

#include <cmath>

#include "evfield/scene.hpp"

using namespace evfield;

namespace {
SceneSpec single_sphere(double density) {
  SceneSpec s;
  s.primitives.clear();
  Primitive p;
  p.shape = PrimitiveShape::kSphere;
  p.center = Vec3::Zero();
  p.size = Vec3::Constant(0.5);
  p.density = density;
  p.albedo = Vec3(0.9, 0.2, 0.1);
  s.primitives.push_back(p);
  return s;
}

Ray clipped(const SceneSpec& s, const Vec3& o, const Vec3& d) {
  Ray r;
  r.origin = o;
  r.direction = d.normalized();
  const auto hit = s.bounds.intersect(o, r.direction);
  if (hit) {
    r.near = hit->first;
    r.far = hit->second;
  } else {
    r.near = r.far = 0.0;
  }
  return r;
}
}  // namespace

TEST(GroundTruth, MissIsBackground) {
  const SceneSpec s = single_sphere(5.0);
  const Vec3 c = ground_truth_pixel(s, clipped(s, Vec3(0.9, 0.9, -3), Vec3::UnitZ()));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(c[i], s.background[i]);
}

TEST(GroundTruth, OpaqueSphereShowsAlbedo) {
  const SceneSpec s = single_sphere(1e6);
  const Vec3 c = ground_truth_pixel(s, clipped(s, Vec3(0, 0, -3), Vec3::UnitZ()));
  EXPECT_NEAR((c - s.primitives[0].albedo).cwiseAbs().maxCoeff(), 0.0, 1e-6);
}

TEST(GroundTruth, SemiTransparentSphere) {
  const SceneSpec s = single_sphere(2.0);
  const Vec3 c = ground_truth_pixel(s, clipped(s, Vec3(0, 0, -3), Vec3::UnitZ()));
  const double t = std::exp(-2.0 * 1.0);
  const Vec3 expected = (1 - t) * s.primitives[0].albedo + t * s.background;
  EXPECT_NEAR((c - expected).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(GroundTruth, QuadratureConverged) {
  const SceneSpec s = SceneSpec::default_scene();
  const Ray r = clipped(s, Vec3(0.1, 0.2, -3), Vec3(0.05, -0.1, 1));
  EXPECT_LT((ground_truth_pixel(s, r, 256) - ground_truth_pixel(s, r, 512)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(SceneSpec, TextRoundTrip) {
  const SceneSpec a = SceneSpec::default_scene();
  const SceneSpec b = SceneSpec::parse(a.to_text());
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(b.primitives.size(), 3u);
}

TEST(SceneSpec, RejectsBadInput) {
  EXPECT_ANY_THROW(SceneSpec::parse("cone center 0 0 0\n"));
  EXPECT_ANY_THROW(SceneSpec::parse("sphere center 0 0 0 radius 0.5 density -1 albedo 1 1 1\n"));
  EXPECT_ANY_THROW(SceneSpec::parse("sphere center 5 0 0 radius 0.5 density 1 albedo 1 1 1\n"));
}

TEST(Cameras, FrontArcStaysInFront) {
  CameraArc arc;
  arc.azimuth_begin_deg = -80;
  arc.azimuth_end_deg = 80;
  Rng rng(1);
  for (const Camera& c : arc_cameras(arc, 12, rng)) EXPECT_GT(c.position.z(), 0.0);
}

TEST(Cameras, LookAtCentersTarget) {
  const Camera c = Camera::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 40, 32, 32);
  c.validate();
  const Ray r = c.pixel_ray(16.0, 16.0);
  EXPECT_NEAR((r.direction - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(Views, SingleViewMatchesGroundTruth) {
  const SceneSpec s = SceneSpec::default_scene();
  CameraArc arc;
  arc.width = arc.height = 8;
  Rng rng(2);
  const ViewSet v = generate_views(s, arc, 1, rng, 256);
  ASSERT_EQ(v.size(), 1u);
  const auto rays = camera_rays(v.cameras[0], s.bounds);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Vec3 c = rays[i].near < rays[i].far ? ground_truth_pixel(s, rays[i], 256) : s.background;
    for (int ch = 0; ch < 3; ++ch) EXPECT_DOUBLE_EQ(v.images[0].rgb[3 * i + ch], c[ch]);
  }
}

TEST(Views, SeededGenerationIsIdentical) {
  const SceneSpec s = SceneSpec::default_scene();
  CameraArc arc;
  arc.width = arc.height = 8;
  Rng a(9), b(9);
  const ViewSet x = generate_views(s, arc, 3, a, 256);
  const ViewSet y = generate_views(s, arc, 3, b, 256);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.images[i].rgb, y.images[i].rgb);
}

TEST(Corruption, ZeroNoiseAndZeroTransientsAreIdentity) {
  const SceneSpec s = SceneSpec::default_scene();
  CameraArc arc;
  arc.width = arc.height = 8;
  Rng rng(3);
  const ViewSet v = generate_views(s, arc, 2, rng, 256);
  EXPECT_EQ(inject_aleatoric(v, ImageRegion::left_half(), 0.0, rng).images[1].rgb, v.images[1].rgb);
  EXPECT_EQ(inject_transients(v, 0, rng).images[0].rgb, v.images[0].rgb);
}

TEST(Corruption, NoiseVarianceInRegion) {
  // Flat mid-gray images, so clamping to [0, 1] is negligible at σ = 0.1.
  ViewSet v;
  const Camera cam = Camera::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 20, 16, 16);
  for (int i = 0; i < 24; ++i) {
    v.cameras.push_back(cam);
    v.images.emplace_back(16, 16, 0.5);
    v.noise_masks.emplace_back(16 * 16, 0);
    v.transient_masks.emplace_back(16 * 16, 0);
  }
  Rng rng(4);
  const ViewSet n = inject_aleatoric(v, ImageRegion::left_half(), 0.1, rng);
  double s = 0.0, s_out = 0.0;
  std::size_t k = 0, masked = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        const double d = n.images[i].at(x, y, 0) - 0.5;
        if (x < 8) {
          s += d * d;
          ++k;
          masked += n.noise_masks[i][static_cast<std::size_t>(y) * 16 + x];
        } else {
          s_out += d * d;
        }
      }
    }
  }
  EXPECT_NEAR(s / static_cast<double>(k), 0.01, 0.002);
  EXPECT_EQ(s_out, 0.0);
  EXPECT_EQ(masked, k);
}

TEST(Corruption, TransientsAreMasked) {
  ViewSet v;
  const Camera cam = Camera::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 20, 32, 32);
  v.cameras.push_back(cam);
  v.images.emplace_back(32, 32, 0.5);
  v.noise_masks.emplace_back(32 * 32, 0);
  v.transient_masks.emplace_back(32 * 32, 0);
  Rng rng(5);
  const ViewSet t = inject_transients(v, 2, rng);
  std::size_t changed = 0, masked = 0;
  for (std::size_t i = 0; i < 32 * 32; ++i) {
    const bool diff = t.images[0].rgb[3 * i] != 0.5 || t.images[0].rgb[3 * i + 1] != 0.5 || t.images[0].rgb[3 * i + 2] != 0.5;
    changed += diff;
    masked += t.transient_masks[0][i];
    if (diff) EXPECT_TRUE(t.transient_masks[0][i]);
  }
  EXPECT_GT(masked, 0u);
  EXPECT_LE(changed, masked);
}
