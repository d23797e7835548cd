// Command-line front end: data generation, training, rendering, evaluation
// and the two applications.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "evfield/apps.hpp"
#include "evfield/config.hpp"
#include "evfield/image_io.hpp"
#include "evfield/metrics.hpp"
#include "evfield/oracle.hpp"
#include "evfield/parallel.hpp"
#include "evfield/train.hpp"

namespace fs = std::filesystem;
using namespace evfield;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string checkpoint;
};

RunConfig load_config(const Common& common) {
  RunConfig cfg = common.config_path.empty() ? RunConfig{} : RunConfig::load(common.config_path);
  for (const auto& kv : common.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) cfg.train.seed = *common.seed;
  if (!common.out_dir.empty()) cfg.output_dir = common.out_dir;
  cfg.validate();
  set_thread_count(cfg.threads);
  fs::create_directories(cfg.output_dir);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

fs::path checkpoint_path(const Common& common, const RunConfig& cfg) {
  return common.checkpoint.empty() ? cfg.output_dir / "field.evf" : fs::path(common.checkpoint);
}

Field load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing checkpoint: " + path.string());
  return Field::load(path);
}

void write_map(const fs::path& dir, const std::string& name, int w, int h, const std::vector<double>& values) {
  write_pfm(dir / (name + ".pfm"), w, h, values);
  double lo = 0.0, hi = 0.0;
  write_png(dir / (name + ".png"), colorize(w, h, values, &lo, &hi));
  std::cerr << name << ": min " << lo << " max " << hi << '\n';
}

int cmd_train(const Common& common) {
  const RunConfig cfg = load_config(common);
  const Dataset data = make_dataset(cfg);
  TrainConfig tc = cfg.train;
  tc.checkpoint_path = checkpoint_path(common, cfg);
  const TrainResult r = train(data.train, data.scene, tc, cfg.field, data.test.size() ? &data.test : nullptr);
  r.field.save(tc.checkpoint_path);
  auto trace = open_out(cfg.output_dir / "trace.csv");
  write_trace_csv(trace, r.trace);
  std::cout << "trained " << tc.iterations << " iterations; checkpoint " << tc.checkpoint_path.string() << '\n';
  return 0;
}

int cmd_render(const Common& common, std::size_t view) {
  const RunConfig cfg = load_config(common);
  const Field field = load_checkpoint(checkpoint_path(common, cfg));
  const Dataset data = make_dataset(cfg);
  if (view >= data.test.size()) throw std::invalid_argument("render: test view index out of range");
  const RenderSettings settings = render_settings_for(data.scene, cfg.train);
  const RenderedView r = render_view(field, data.test.cameras[view], data.scene.bounds, settings);
  const Image mean = r.mean_color();
  write_png(cfg.output_dir / "mean.png", mean);
  write_map(cfg.output_dir, "au", r.width, r.height, r.au());
  write_map(cfg.output_dir, "eu", r.width, r.height, r.eu());
  write_map(cfg.output_dir, "u", r.width, r.height, r.total_uncertainty());
  write_map(cfg.output_dir, "error", r.width, r.height, pixel_errors(mean, data.test.images[view], ErrorKind::kRmse));
  return 0;
}

int cmd_eval(const Common& common, bool reference) {
  const RunConfig cfg = load_config(common);
  const Dataset data = make_dataset(cfg);
  if (data.test.size() == 0) throw std::invalid_argument("eval: test_views must be >= 1");
  const std::string scene_name = cfg.scene_path.empty() ? "default" : cfg.scene_path.stem().string();
  const RenderSettings settings = render_settings_for(data.scene, cfg.train);
  MetricsRow row{scene_name, {}, {}};
  if (reference) {
    // Ground truth scored against itself with a tight, uniform uncertainty.
    row.method = "reference";
    ViewMetrics acc;
    for (std::size_t v = 0; v < data.test.size(); ++v) {
      const Image& gt = data.test.images[v];
      RenderedView rv{gt.width, gt.height, std::vector<PixelEvidential>(gt.pixel_count())};
      for (std::size_t i = 0; i < rv.pixels.size(); ++i) {
        auto& p = rv.pixels[i];
        for (int c = 0; c < 3; ++c) p.mean_color[c] = p.gamma[c] = gt.rgb[3 * i + c];
        p.au = p.eu = 1e-4;
        p.u = 2e-4;
        p.nu = 1.0;
        p.alpha = 2.0;
        p.beta = 1e-4;
      }
      const ViewMetrics m = evaluate_view(rv, gt, cfg.uncertainty);
      acc.mse += m.mse / static_cast<double>(data.test.size());
      acc.ssim += m.ssim / static_cast<double>(data.test.size());
      acc.nll += m.nll / static_cast<double>(data.test.size());
    }
    acc.psnr = acc.mse > 0.0 ? 10.0 * std::log10(1.0 / acc.mse) : INFINITY;
    row.metrics = acc;
  } else {
    const Field field = load_checkpoint(checkpoint_path(common, cfg));
    row.method = objective_name(cfg.train.objective);
    row.metrics = evaluate_views(field, data.test, data.scene, settings, cfg.uncertainty);
  }
  auto out = open_out(cfg.output_dir / "metrics.csv");
  write_metrics_csv(out, {row});
  write_metrics_csv(std::cout, {row});
  return 0;
}

int cmd_clean(const Common& common) {
  const RunConfig cfg = load_config(common);
  const Field field = load_checkpoint(checkpoint_path(common, cfg));
  const Dataset data = make_dataset(cfg);
  const RenderSettings settings = render_settings_for(data.scene, cfg.train);
  std::vector<double> point_au;
  for (const auto& cam : data.test.cameras) {
    const auto rays = camera_rays(cam, data.scene.bounds);
    const auto au = sample_point_au(field, rays, settings);
    point_au.insert(point_au.end(), au.begin(), au.end());
  }
  std::vector<double> taus{INFINITY};
  for (double t : tau_sweep(point_au, cfg.tau_quantiles)) taus.push_back(t);
  auto csv = open_out(cfg.output_dir / "clean.csv");
  csv << "tau,mse,psnr\n" << std::setprecision(10);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const CleaningConfig cc{taus[k], cfg.attenuation};
    double mse = 0.0;
    for (std::size_t v = 0; v < data.test.size(); ++v) {
      const RenderedView r = clean_render(field, data.test.cameras[v], data.scene.bounds, settings, cc);
      const Image img = r.mean_color();
      mse += evaluate_view(r, data.test.images[v]).mse / static_cast<double>(data.test.size());
      if (v == 0) write_png(cfg.output_dir / ("clean_" + std::to_string(k) + ".png"), img);
    }
    csv << taus[k] << ',' << mse << ',' << capped_psnr(10.0 * std::log10(1.0 / mse)) << '\n';
  }
  return 0;
}

int cmd_active(const Common& common, std::size_t runs) {
  RunConfig cfg = load_config(common);
  cfg.train_views = cfg.pool_views;
  const Dataset data = make_dataset(cfg);
  ActiveLearnConfig ac = cfg.active;
  ac.train = cfg.train;
  ac.field = cfg.field;
  ac.seeds.clear();
  for (std::size_t k = 0; k < runs; ++k) ac.seeds.push_back(cfg.train.seed + k);
  const auto rows = active_learn(data.train, data.test, data.scene, ac);
  auto out = open_out(cfg.output_dir / "active.csv");
  write_active_csv(out, rows);
  write_active_csv(std::cout, rows);
  return 0;
}

int cmd_sweep(const Common& common) {
  const RunConfig cfg = load_config(common);
  const Dataset data = make_dataset(cfg);
  if (data.test.size() == 0) throw std::invalid_argument("sweep-lambda: test_views must be >= 1");
  const std::string scene_name = cfg.scene_path.empty() ? "default" : cfg.scene_path.stem().string();
  std::vector<MetricsRow> rows;
  for (double lambda : cfg.lambdas) {
    TrainConfig tc = cfg.train;
    tc.objective = Objective::kEvidential;
    tc.lambda_reg = lambda;
    const TrainResult r = train(data.train, data.scene, tc, cfg.field);
    std::ostringstream method;
    method << "evidential_lambda=" << lambda;
    rows.push_back({scene_name, method.str(),
                    evaluate_views(r.field, data.test, data.scene, render_settings_for(data.scene, tc), cfg.uncertainty)});
    std::cerr << method.str() << ": psnr " << rows.back().metrics.psnr << '\n';
  }
  auto out = open_out(cfg.output_dir / "sweep_lambda.csv");
  write_metrics_csv(out, rows);
  write_metrics_csv(std::cout, rows);
  return 0;
}

int cmd_oracle(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : oracle::run_all_suites(seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidential radiance fields on synthetic scenes"};
  app.require_subcommand(1);
  Common common;
  std::size_t view = 0, runs = 1;
  bool reference = false;
  std::uint64_t oracle_seed = 2024;

  const auto add_common = [&](CLI::App* sub, bool needs_seed) {
    sub->add_option("-c,--config", common.config_path, "Run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "Override a configuration key (key=value)");
    sub->add_option("-o,--out", common.out_dir, "Output directory");
    auto* seed = sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { common.seed = s; }, "Training seed");
    if (needs_seed) seed->required();
  };
  auto* train_cmd = app.add_subcommand("train", "Train a field; writes a checkpoint and trace.csv");
  add_common(train_cmd, true);
  auto* render_cmd = app.add_subcommand("render", "Render a test view: mean PNG and AU/EU/U/error maps");
  add_common(render_cmd, false);
  render_cmd->add_option("--checkpoint", common.checkpoint, "Checkpoint (default <out>/field.evf)");
  render_cmd->add_option("--view", view, "Test view index");
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the test views; writes metrics.csv");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--checkpoint", common.checkpoint, "Checkpoint (default <out>/field.evf)");
  eval_cmd->add_flag("--reference", reference, "Score the ground truth against itself");
  auto* clean_cmd = app.add_subcommand("clean", "Render test views with AU-threshold cleaning over a tau sweep");
  add_common(clean_cmd, false);
  clean_cmd->add_option("--checkpoint", common.checkpoint, "Checkpoint (default <out>/field.evf)");
  auto* active_cmd = app.add_subcommand("active", "Active view selection; writes active.csv");
  add_common(active_cmd, true);
  active_cmd->add_option("--runs", runs, "Number of seeds, starting at --seed")->check(CLI::PositiveNumber);
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "Train/evaluate across lambda values");
  add_common(sweep_cmd, false);
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run all oracle suites");
  oracle_cmd->add_option("--seed", oracle_seed, "Oracle seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*train_cmd) return cmd_train(common);
    if (*render_cmd) return cmd_render(common, view);
    if (*eval_cmd) return cmd_eval(common, reference);
    if (*clean_cmd) return cmd_clean(common);
    if (*active_cmd) return cmd_active(common, runs);
    if (*sweep_cmd) return cmd_sweep(common);
    if (*oracle_cmd) return cmd_oracle(oracle_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
