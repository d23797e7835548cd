#include "evfield/apps.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "evfield/metrics.hpp"
#include "evfield/parallel.hpp"

namespace evfield {

void CleaningConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("cleaning: tau must be positive");
  if (!(attenuation >= 0.0 && attenuation <= 1.0)) throw std::invalid_argument("cleaning: attenuation must lie in [0, 1]");
}

std::vector<PixelEvidential> clean_render(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                          const CleaningConfig& config) {
  config.validate();
  const DensityAttenuation att{config.tau, config.attenuation};
  return render_rays(field, rays, settings, &att);
}

RenderedView clean_render(const Field& field, const Camera& camera, const Aabb& bounds,
                          const RenderSettings& settings, const CleaningConfig& config) {
  config.validate();
  const DensityAttenuation att{config.tau, config.attenuation};
  return render_view(field, camera, bounds, settings, &att);
}

std::vector<double> sample_point_au(const Field& field, std::span<const Ray> rays, const RenderSettings& settings,
                                    double min_weight) {
  std::vector<Ray> hits;
  for (const auto& r : rays) {
    if (r.far > r.near) hits.push_back(r);
  }
  std::vector<double> out;
  constexpr std::size_t kChunk = 1024;
  Tape tape;
  for (std::size_t begin = 0; begin < hits.size(); begin += kChunk) {
    const std::span<const Ray> part(hits.data() + begin, std::min(kChunk, hits.size() - begin));
    const SampleBatch batch = sample_batch(part, settings.samples_per_ray, nullptr);
    tape.reset();
    const auto leaves = field.bind_constants(tape);
    const PixelGraph g = render_graph(tape, field, leaves, batch, settings);
    const auto w = g.weights.values();
    const auto au = g.point_au.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (w[k] >= min_weight) out.push_back(au[k]);
    }
  }
  return out;
}

std::vector<double> tau_sweep(std::vector<double> point_au, std::span<const double> quantiles) {
  if (point_au.empty()) throw std::invalid_argument("tau_sweep: no samples");
  std::sort(point_au.begin(), point_au.end());
  std::vector<double> taus;
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("tau_sweep: quantiles must lie in (0, 1)");
    const auto k = static_cast<std::size_t>(std::floor((1.0 - q) * static_cast<double>(point_au.size() - 1)));
    taus.push_back(point_au[k]);
  }
  std::sort(taus.begin(), taus.end(), std::greater<>());
  return taus;
}

const char* strategy_name(SelectionStrategy s) { return s == SelectionStrategy::kEpistemic ? "eu" : "random"; }

SelectionStrategy parse_strategy(const std::string& name) {
  if (name == "eu") return SelectionStrategy::kEpistemic;
  if (name == "random") return SelectionStrategy::kRandom;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected eu or random)");
}

void ActiveLearnConfig::validate() const {
  if (initial_views == 0) throw std::invalid_argument("active learning: initial_views must be >= 1");
  if (views_per_round == 0) throw std::invalid_argument("active learning: views_per_round must be >= 1");
  if (epochs_per_round == 0) throw std::invalid_argument("active learning: epochs_per_round must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("active learning: at least one seed is required");
  if (score_downscale < 1) throw std::invalid_argument("active learning: score_downscale must be >= 1");
  train.validate();
}

double view_eu_score(const Field& field, const Camera& camera, const SceneSpec& scene, const RenderSettings& settings,
                     int downscale) {
  const Camera small = camera.resized(std::max(1, camera.width / downscale), std::max(1, camera.height / downscale));
  const RenderedView view = render_view(field, small, scene.bounds, settings);
  const auto eu = view.eu();
  return std::accumulate(eu.begin(), eu.end(), 0.0) / static_cast<double>(eu.size());
}

namespace {

std::size_t epoch_iterations(const ViewSet& views, const SceneSpec& scene, std::size_t batch, std::size_t epochs) {
  const std::size_t pixels = collect_training_pixels(views, scene.bounds).rays.size();
  return epochs * std::max<std::size_t>(1, (pixels + batch - 1) / batch);
}

}  // namespace

std::vector<ActiveLearnRow> active_learn(const ViewSet& pool, const ViewSet& test_views, const SceneSpec& scene,
                                         const ActiveLearnConfig& config) {
  config.validate();
  pool.validate();
  const std::size_t needed = config.initial_views + config.rounds * config.views_per_round;
  if (pool.size() < needed) {
    throw std::invalid_argument("active learning: pool of " + std::to_string(pool.size()) + " views cannot supply " +
                                std::to_string(needed));
  }
  const RenderSettings settings = render_settings_for(scene, config.train);
  std::vector<ActiveLearnRow> rows;
  for (const std::uint64_t seed : config.seeds) {
    // The initial subset depends only on the seed, so both strategies start
    // from the same views.
    Rng init_rng(seed);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[init_rng.below(i)]);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.initial_views));
    std::vector<std::size_t> remaining(order.begin() + static_cast<std::ptrdiff_t>(config.initial_views), order.end());
    std::sort(remaining.begin(), remaining.end());
    Rng pick_rng(seed ^ 0xA5A5A5A5ULL);

    std::optional<Field> field;
    for (std::size_t round = 0; round <= config.rounds; ++round) {
      if (round > 0) {
        std::vector<std::size_t> picks;
        if (config.strategy == SelectionStrategy::kRandom) {
          for (std::size_t k = 0; k < config.views_per_round; ++k) {
            const std::size_t j = pick_rng.below(remaining.size());
            picks.push_back(remaining[j]);
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(j));
          }
        } else {
          std::vector<double> score(remaining.size());
          for (std::size_t j = 0; j < remaining.size(); ++j) {
            score[j] = view_eu_score(*field, pool.cameras[remaining[j]], scene, settings, config.score_downscale);
            if (!(score[j] > 0.0) || !std::isfinite(score[j])) {
              throw NumericError("active learning: invalid EU score for pool view " + std::to_string(remaining[j]));
            }
          }
          std::vector<std::size_t> idx(remaining.size());
          std::iota(idx.begin(), idx.end(), std::size_t{0});
          std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
          idx.resize(config.views_per_round);
          for (std::size_t j : idx) picks.push_back(remaining[j]);
          std::sort(idx.begin(), idx.end(), std::greater<>());
          for (std::size_t j : idx) remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(j));
        }
        chosen.insert(chosen.end(), picks.begin(), picks.end());
      }
      const ViewSet train_views = pool.subset(chosen);
      TrainConfig tc = config.train;
      tc.seed = seed * 1000003ULL + round;
      tc.iterations = epoch_iterations(train_views, scene, tc.batch_rays, config.epochs_per_round);
      tc.eval_interval = 0;
      tc.checkpoint_path.clear();
      TrainResult r = train(train_views, scene, tc, config.field, nullptr, field ? &*field : nullptr);
      field = std::move(r.field);
      const double db = evaluate_views(*field, test_views, scene, settings).psnr;
      rows.push_back({round, config.strategy, seed, chosen.size(), db});
    }
  }
  return rows;
}

void write_active_csv(std::ostream& out, const std::vector<ActiveLearnRow>& rows) {
  out << "round,strategy,seed,n_views,psnr\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.round << ',' << strategy_name(r.strategy) << ',' << r.seed << ',' << r.n_views << ','
        << capped_psnr(r.psnr) << '\n';
  }
}

}  // namespace evfield
