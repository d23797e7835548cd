#include "evfield/train.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "evfield/baselines.hpp"
#include "evfield/evidential.hpp"
#include "evfield/parallel.hpp"

namespace evfield {

const char* objective_name(Objective objective) {
  switch (objective) {
    case Objective::kEvidential: return "evidential";
    case Objective::kNormal: return "normal";
    case Objective::kVanilla: return "vanilla";
  }
  return "unknown";
}

Objective parse_objective(const std::string& name) {
  if (name == "evidential") return Objective::kEvidential;
  if (name == "normal") return Objective::kNormal;
  if (name == "vanilla") return Objective::kVanilla;
  throw std::invalid_argument("unknown objective '" + name + "' (expected evidential, normal or vanilla)");
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be positive");
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) fail("lambda_reg must be non-negative");
  if (batch_rays == 0) fail("batch_rays must be positive");
  if (samples_per_ray == 0) fail("samples_per_ray must be positive");
  if (chunk_rays == 0) fail("chunk_rays must be positive");
  if (!(eu_max > 0.0)) fail("eu_max must be positive");
  if (!(background_au >= 0.0 && background_eu >= 0.0 && background_shape >= 0.0))
    fail("background_au, background_eu and background_shape must be non-negative");
  if ((background_au > 0.0) != (background_eu > 0.0))
    fail("background_au and background_eu must both be zero or both positive");
}

OptimState::OptimState(const ParamStore& params) {
  for (const auto& e : params.entries()) {
    first_moment.emplace_back(e.value.size(), 0.0);
    second_moment.emplace_back(e.value.size(), 0.0);
  }
}

void adam_step(ParamStore& params, OptimState& state, const TrainConfig& config, std::size_t iteration) {
  if (state.first_moment.size() != params.size()) state = OptimState(params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (double g : params[p].grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + params[p].name + "' at iteration " +
                           std::to_string(iteration));
      }
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& e = params[p];
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      e.value[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_epsilon);
    }
  }
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,total,nll,reg,psnr_eval\n";
  out << std::setprecision(10);
  for (const auto& row : trace) {
    out << row.iteration << ',' << row.total << ',' << row.nll << ',' << row.reg << ',';
    if (row.psnr_eval) out << capped_psnr(*row.psnr_eval);
    out << '\n';
  }
}

TrainingPixels collect_training_pixels(const ViewSet& views, const Aabb& bounds) {
  views.validate();
  TrainingPixels out;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto rays = camera_rays(views.cameras[v], bounds);
    const auto& img = views.images[v];
    for (std::size_t i = 0; i < rays.size(); ++i) {
      if (!(rays[i].far > rays[i].near)) continue;
      out.rays.push_back(rays[i]);
      for (int c = 0; c < 3; ++c) out.colors.push_back(img.rgb[3 * i + c]);
    }
  }
  return out;
}

RenderSettings render_settings_for(const SceneSpec& scene, const TrainConfig& config) {
  RenderSettings s;
  s.samples_per_ray = config.samples_per_ray;
  s.background = scene.background;
  s.eu_max = config.eu_max;
  s.background_au = config.background_au;
  s.background_eu = config.background_eu;
  s.background_shape = config.background_shape;
  return s;
}

BatchLoss batch_loss(Tape& tape, const Field& field, std::span<const Var> leaves, const SampleBatch& batch,
                     std::span<const double> target_colors, const TrainConfig& config,
                     const RenderSettings& settings) {
  if (target_colors.size() != 3 * batch.rays) throw std::invalid_argument("batch_loss: target size mismatch");
  const PixelGraph px = render_graph(tape, field, leaves, batch, settings);
  const Var target = tape.constant(batch.rays, 3, target_colors);
  switch (config.objective) {
    case Objective::kEvidential: {
      const LossGraph l = evidential_loss(tape, px, target, config.lambda_reg);
      return {l.total, l.nll, l.reg};
    }
    case Objective::kNormal: {
      const Var nll = gaussian_nll_loss(tape, px, target, settings.uncertainty_floor);
      return {nll, nll, tape.scalar(0.0)};
    }
    case Objective::kVanilla: {
      const Var m = mse_loss(tape, px, target);
      return {m, m, tape.scalar(0.0)};
    }
  }
  throw std::logic_error("batch_loss: unhandled objective");
}

namespace {

std::optional<double> eval_psnr(const Field& field, const ViewSet& views, const SceneSpec& scene,
                                const RenderSettings& settings) {
  if (views.size() == 0) return std::nullopt;
  return evaluate_views(field, views, scene, settings).psnr;
}

}  // namespace

TrainResult train(const ViewSet& train_views, const SceneSpec& scene, const TrainConfig& config,
                  const FieldConfig& field_config, const ViewSet* eval_views, const Field* initial) {
  config.validate();
  Rng rng(config.seed);
  Rng init_rng = rng.split(1);
  Field field = initial ? *initial : Field::initialized(field_config, init_rng);
  TrainResult result{field, {}};
  if (config.iterations == 0) return result;

  const TrainingPixels pixels = collect_training_pixels(train_views, scene.bounds);
  if (pixels.rays.empty()) throw std::invalid_argument("train: no training ray intersects the scene bounds");
  const RenderSettings settings = render_settings_for(scene, config);

  Field& f = result.field;
  OptimState optim(f.params());
  const std::size_t batch = config.batch_rays;
  const std::size_t chunk = std::min(config.chunk_rays, batch);
  const std::size_t chunks = (batch + chunk - 1) / chunk;
  const std::size_t workers = std::max<std::size_t>(1, std::min(thread_count(), chunks));
  std::vector<Tape> tapes(workers);
  std::vector<GradBuffer> grads(chunks, GradBuffer(f.params()));
  std::vector<std::array<double, 3>> chunk_terms(chunks);

  std::vector<std::size_t> picks(batch);
  std::vector<Ray> rays(batch);
  std::vector<double> targets(3 * batch);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    Rng iter_rng = rng.split(1000 + it);
    for (std::size_t b = 0; b < batch; ++b) {
      picks[b] = iter_rng.below(pixels.rays.size());
      rays[b] = pixels.rays[picks[b]];
      for (int c = 0; c < 3; ++c) targets[3 * b + c] = pixels.colors[3 * picks[b] + c];
    }
    // Samples are drawn per chunk from streams keyed by chunk index, so the
    // batch is identical for any worker count.
    std::vector<Rng> chunk_rngs;
    chunk_rngs.reserve(chunks);
    for (std::size_t k = 0; k < chunks; ++k) chunk_rngs.push_back(iter_rng.split(k));

    const Field& cf = f;
    parallel_for_workers(chunks, [&](std::size_t k, std::size_t worker) {
      const std::size_t lo = k * chunk, hi = std::min(batch, lo + chunk);
      const std::span<const Ray> chunk_rays(rays.data() + lo, hi - lo);
      const SampleBatch sb = sample_batch(chunk_rays, config.samples_per_ray, &chunk_rngs[k]);
      Tape& tape = tapes[worker];
      tape.reset();
      grads[k].zero();
      const auto leaves = cf.bind(tape, grads[k]);
      const BatchLoss loss = batch_loss(tape, cf, leaves, sb,
                                        std::span<const double>(targets.data() + 3 * lo, 3 * (hi - lo)), config,
                                        settings);
      tape.backward(loss.total);
      chunk_terms[k] = {loss.total.value(), loss.nll.value(), loss.reg.value()};
    });

    f.params().zero_grad();
    TraceRow row;
    row.iteration = it;
    for (std::size_t k = 0; k < chunks; ++k) {
      const std::size_t n = std::min(batch, (k + 1) * chunk) - k * chunk;
      const double scale = static_cast<double>(n) / static_cast<double>(batch);
      grads[k].accumulate_into(f.params(), scale);
      row.total += scale * chunk_terms[k][0];
      row.nll += scale * chunk_terms[k][1];
      row.reg += scale * chunk_terms[k][2];
    }
    if (!std::isfinite(row.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << it << " (total=" << row.total << ", nll=" << row.nll
          << ", reg=" << row.reg << ")";
      throw NumericError(msg.str());
    }
    adam_step(f.params(), optim, config, it);

    if (eval_views && config.eval_interval > 0 && it % config.eval_interval == 0) {
      row.psnr_eval = eval_psnr(f, *eval_views, scene, settings);
    }
    const bool log_now = config.log_interval > 0 && (it % config.log_interval == 0 || it == 1);
    if (log_now || row.psnr_eval || it == config.iterations) result.trace.push_back(row);

    if (!config.checkpoint_path.empty() && config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) {
      f.save(config.checkpoint_path);
    }
  }
  if (!config.checkpoint_path.empty()) f.save(config.checkpoint_path);
  return result;
}

// ---------------------------------------------------------------- evaluation

Image RenderedView::mean_color() const {
  Image img(width, height);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) img.rgb[3 * i + c] = pixels[i].mean_color[c];
  }
  return img;
}

std::vector<double> RenderedView::au() const {
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i].au;
  return out;
}

std::vector<double> RenderedView::eu() const {
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i].eu;
  return out;
}

std::vector<double> RenderedView::total_uncertainty() const {
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = pixels[i].u;
  return out;
}

RenderedView render_view(const Field& field, const Camera& camera, const Aabb& bounds, const RenderSettings& settings,
                         const DensityAttenuation* attenuation) {
  RenderedView view;
  view.width = camera.width;
  view.height = camera.height;
  const auto rays = camera_rays(camera, bounds);
  view.pixels = render_rays(field, rays, settings, attenuation);
  return view;
}

ViewMetrics evaluate_view(const RenderedView& view, const Image& gt, UncertaintyKind kind) {
  const Image pred = view.mean_color();
  ViewMetrics m;
  double se = 0.0;
  for (std::size_t i = 0; i < pred.rgb.size(); ++i) se += (pred.rgb[i] - gt.rgb[i]) * (pred.rgb[i] - gt.rgb[i]);
  m.mse = se / static_cast<double>(pred.rgb.size());
  m.psnr = psnr(pred, gt);
  m.ssim = ssim(pred, gt);
  m.nll = nll_metric(gt, view.pixels);
  const std::vector<double> u = kind == UncertaintyKind::kAleatoric   ? view.au()
                                : kind == UncertaintyKind::kEpistemic ? view.eu()
                                                                      : view.total_uncertainty();
  m.ause_rmse = ause(u, pixel_errors(pred, gt, ErrorKind::kRmse), ErrorKind::kRmse);
  m.ause_mae = ause(u, pixel_errors(pred, gt, ErrorKind::kMae), ErrorKind::kMae);
  for (const auto& p : view.pixels) {
    m.mean_au += p.au;
    m.mean_eu += p.eu;
  }
  m.mean_au /= static_cast<double>(view.pixels.size());
  m.mean_eu /= static_cast<double>(view.pixels.size());
  return m;
}

ViewMetrics evaluate_views(const Field& field, const ViewSet& views, const SceneSpec& scene,
                           const RenderSettings& settings, UncertaintyKind kind) {
  views.validate();
  if (views.size() == 0) throw std::invalid_argument("evaluate_views: no views");
  ViewMetrics acc;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto rendered = render_view(field, views.cameras[v], scene.bounds, settings);
    const ViewMetrics m = evaluate_view(rendered, views.images[v], kind);
    acc.mse += m.mse;
    acc.ssim += m.ssim;
    acc.nll += m.nll;
    acc.ause_rmse += m.ause_rmse;
    acc.ause_mae += m.ause_mae;
    acc.mean_au += m.mean_au;
    acc.mean_eu += m.mean_eu;
  }
  const double n = static_cast<double>(views.size());
  acc.mse /= n;
  acc.ssim /= n;
  acc.nll /= n;
  acc.ause_rmse /= n;
  acc.ause_mae /= n;
  acc.mean_au /= n;
  acc.mean_eu /= n;
  acc.psnr = acc.mse > 0.0 ? 10.0 * std::log10(1.0 / acc.mse) : std::numeric_limits<double>::infinity();
  return acc;
}

}  // namespace evfield
