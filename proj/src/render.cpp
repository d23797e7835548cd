#include "evfield/render.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "evfield/parallel.hpp"

namespace evfield {

void Ray::validate() const {
  if (!origin.allFinite() || !direction.allFinite() || !std::isfinite(near) || !std::isfinite(far)) {
    throw std::invalid_argument("Ray: non-finite component");
  }
  if (!(near < far)) throw std::invalid_argument("Ray: near must be less than far");
  if (std::abs(direction.norm() - 1.0) > 1e-6) throw std::invalid_argument("Ray: direction must be unit length");
}

std::vector<double> sample_stratified(const Ray& ray, std::span<const double> offsets) {
  ray.validate();
  if (offsets.empty()) throw std::invalid_argument("sample_stratified: need at least one sample");
  const double width = (ray.far - ray.near) / static_cast<double>(offsets.size());
  std::vector<double> depths(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const double u = offsets[i];
    if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("sample_stratified: offsets must lie in [0, 1)");
    depths[i] = ray.near + (static_cast<double>(i) + u) * width;
  }
  return depths;
}

std::vector<double> sample_stratified(const Ray& ray, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("sample_stratified: need at least one sample");
  std::vector<double> offsets(count);
  for (double& u : offsets) u = rng.uniform();
  return sample_stratified(ray, offsets);
}

std::vector<double> intervals_from_depths(std::span<const double> depths, double far) {
  std::vector<double> deltas(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    deltas[i] = (i + 1 < depths.size() ? depths[i + 1] : far) - depths[i];
  }
  return deltas;
}

std::vector<double> compute_weights(std::span<const double> densities, std::span<const double> intervals) {
  if (densities.size() != intervals.size()) throw std::invalid_argument("compute_weights: length mismatch");
  std::vector<double> w(densities.size());
  double optical = 0.0;
  for (std::size_t i = 0; i < densities.size(); ++i) {
    if (!(densities[i] >= 0.0)) throw std::invalid_argument("compute_weights: negative density at sample " + std::to_string(i));
    if (!(intervals[i] > 0.0)) throw std::invalid_argument("compute_weights: non-positive interval at sample " + std::to_string(i));
    const double step = densities[i] * intervals[i];
    w[i] = std::exp(-optical) * -std::expm1(-step);
    optical += step;
  }
  return w;
}

PixelEvidential empty_pixel(const RenderSettings& settings) {
  PixelEvidential px;
  for (int c = 0; c < 3; ++c) px.mean_color[c] = px.gamma[c] = settings.background[c];
  if (settings.background_uncertainty()) {
    // Only the background point remains.
    px.au = settings.background_au;
    px.eu = settings.background_eu;
    px.alpha = 1.0 + settings.background_shape;
  } else {
    px.au = settings.uncertainty_floor;
    px.eu = settings.eu_max;
    px.alpha = 2.0;
  }
  px.u = px.au + px.eu;
  px.nu = px.au / px.eu;
  px.beta = px.au * (px.alpha - 1.0);
  px.opacity = 0.0;
  px.empty = true;
  return px;
}

PixelEvidential composite(std::span<const double> weights, std::span<const PointPrediction> points,
                          const RenderSettings& settings) {
  if (weights.size() != points.size()) throw std::invalid_argument("composite: weights and points differ in length");
  double acc = 0.0;
  for (double w : weights) acc += w;
  const bool bg_terms = settings.background_uncertainty();
  if (acc < settings.weight_floor && !bg_terms) {
    PixelEvidential px = empty_pixel(settings);
    px.opacity = acc;
    return px;
  }
  PixelEvidential px;
  double shape = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    const auto& p = points[i];
    for (int c = 0; c < 3; ++c) px.mean_color[c] += w * p.mean_color[c];
    px.au += w * w * p.au;
    px.eu += w * w * p.eu;
    shape += (bg_terms ? w : w / acc) * p.shape_score;
  }
  if (bg_terms) {
    const double t = 1.0 - acc;
    px.au += t * t * settings.background_au;
    px.eu += t * t * settings.background_eu;
    shape += t * settings.background_shape;
  }
  for (int c = 0; c < 3; ++c) {
    px.mean_color[c] += (1.0 - acc) * settings.background[c];
    px.gamma[c] = px.mean_color[c];
  }
  px.u = px.au + px.eu;
  px.alpha = 1.0 + shape;
  px.nu = px.au / px.eu;
  px.beta = px.au * (px.alpha - 1.0);
  px.opacity = acc;
  px.empty = acc < settings.weight_floor;
  return px;
}

SampleBatch sample_batch(std::span<const Ray> rays, std::size_t samples, Rng* rng) {
  if (samples == 0) throw std::invalid_argument("sample_batch: need at least one sample per ray");
  SampleBatch b;
  b.rays = rays.size();
  b.samples = samples;
  const std::size_t total = rays.size() * samples;
  b.positions.resize(3 * total);
  b.directions.resize(3 * total);
  b.depths.resize(total);
  b.intervals.resize(total);
  std::vector<double> offsets(samples, 0.5);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const Ray& ray = rays[r];
    if (rng != nullptr) {
      for (double& u : offsets) u = rng->uniform();
    }
    const auto depths = sample_stratified(ray, offsets);
    const auto deltas = intervals_from_depths(depths, ray.far);
    for (std::size_t i = 0; i < samples; ++i) {
      const std::size_t k = r * samples + i;
      b.depths[k] = depths[i];
      b.intervals[k] = deltas[i];
      const Vec3 x = ray.at(depths[i]);
      for (int c = 0; c < 3; ++c) {
        b.positions[3 * k + static_cast<std::size_t>(c)] = x[c];
        b.directions[3 * k + static_cast<std::size_t>(c)] = ray.direction[c];
      }
    }
  }
  return b;
}

PixelGraph render_graph(Tape& tape, const Field& field, std::span<const Var> leaves, const SampleBatch& batch,
                        const RenderSettings& settings, const DensityAttenuation* attenuation) {
  const std::size_t rays = batch.rays, n = batch.samples;
  const FieldOutputs pts = field.forward(tape, leaves, batch.positions, batch.directions);

  Var density = tape.reshape(pts.density, rays, n);
  const Var point_au = tape.reshape(pts.au, rays, n);
  const Var point_eu = tape.reshape(pts.eu, rays, n);
  const Var point_shape = tape.reshape(pts.shape_score, rays, n);
  if (attenuation != nullptr) {
    std::vector<double> scale(rays * n, 1.0);
    const auto au = point_au.values();
    for (std::size_t k = 0; k < scale.size(); ++k) {
      if (au[k] > attenuation->au_threshold) scale[k] = attenuation->factor;
    }
    density = density * tape.constant(rays, n, scale);
  }

  const Var optical = density * tape.constant(rays, n, batch.intervals);
  const Var transmittance = tape.exp(-tape.exclusive_cumsum_cols(optical));
  const Var w = transmittance * (1.0 - tape.exp(-optical));

  PixelGraph g;
  g.weights = w;
  g.point_au = point_au;
  g.opacity = tape.sum_cols(w);
  g.empty.resize(rays);
  for (std::size_t r = 0; r < rays; ++r) g.empty[r] = g.opacity.value(r) < settings.weight_floor ? 1 : 0;

  const Var transparency = 1.0 - g.opacity;
  const bool bg_terms = settings.background_uncertainty();
  Var color;
  for (std::size_t c = 0; c < 3; ++c) {
    const Var channel = tape.reshape(tape.slice_cols(pts.color, c, 1), rays, n);
    const double bg = settings.background[static_cast<Eigen::Index>(c)];
    Var mean = tape.sum_cols(w * channel) + transparency * bg;
    if (!bg_terms) mean = tape.select_rows(mean, g.empty, bg);
    color = c == 0 ? mean : tape.concat_cols(color, mean);
  }
  g.color = color;

  const Var w2 = tape.square(w);
  if (bg_terms) {
    const Var t2 = tape.square(transparency);
    g.au = tape.sum_cols(w2 * point_au) + t2 * settings.background_au;
    g.eu = tape.sum_cols(w2 * point_eu) + t2 * settings.background_eu;
    g.alpha = 1.0 + tape.sum_cols(w * point_shape) + transparency * settings.background_shape;
  } else {
    g.au = tape.select_rows(tape.sum_cols(w2 * point_au), g.empty, settings.uncertainty_floor);
    g.eu = tape.select_rows(tape.sum_cols(w2 * point_eu), g.empty, settings.eu_max);
    const Var acc_safe = tape.select_rows(g.opacity, g.empty, 1.0);
    const Var normalized = w / acc_safe;
    g.alpha = tape.select_rows(1.0 + tape.sum_cols(normalized * point_shape), g.empty, 2.0);
  }
  g.nu = g.au / g.eu;
  g.beta = g.au * (g.alpha - 1.0);
  return g;
}

std::vector<PixelEvidential> render_rays(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                         const DensityAttenuation* attenuation, std::size_t chunk) {
  if (chunk == 0) chunk = 1024;
  std::vector<PixelEvidential> pixels(rays.size(), empty_pixel(settings));
  const std::size_t chunks = (rays.size() + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t ci) {
    const std::size_t begin = ci * chunk;
    const std::size_t end = std::min(rays.size(), begin + chunk);
    std::vector<Ray> valid;
    std::vector<std::size_t> index;
    for (std::size_t i = begin; i < end; ++i) {
      if (rays[i].near < rays[i].far) {
        valid.push_back(rays[i]);
        index.push_back(i);
      }
    }
    if (valid.empty()) return;
    // Reused across chunks on the same thread to avoid reallocating buffers.
    thread_local Tape tape;
    tape.reset();
    const auto leaves = field.bind_constants(tape);
    const SampleBatch batch = sample_batch(valid, settings.samples_per_ray, nullptr);
    const PixelGraph g = render_graph(tape, field, leaves, batch, settings, attenuation);
    for (std::size_t r = 0; r < valid.size(); ++r) {
      PixelEvidential& px = pixels[index[r]];
      for (std::size_t c = 0; c < 3; ++c) px.mean_color[c] = px.gamma[c] = g.color.value(r, c);
      px.au = g.au.value(r);
      px.eu = g.eu.value(r);
      px.u = px.au + px.eu;
      px.alpha = g.alpha.value(r);
      px.nu = g.nu.value(r);
      px.beta = g.beta.value(r);
      px.opacity = g.opacity.value(r);
      px.empty = g.empty[r] != 0;
    }
  });
  return pixels;
}

}  // namespace evfield
