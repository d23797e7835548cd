#include "evfield/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace evfield {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t u = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), u);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return u;
}

int to_int(const std::string& key, const std::string& v) {
  const auto u = to_uint(key, v);
  if (u > 1u << 20) throw std::invalid_argument("config: '" + key + "' is out of range");
  return static_cast<int>(u);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? "," : "") << xs[i];
  return out.str();
}

std::string num(double d) {
  std::ostringstream out;
  out << std::setprecision(17) << d;
  return out.str();
}

struct Key {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define EVF_DOUBLE(name, member)                                                                         \
  {                                                                                                      \
    name, {                                                                                              \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); },     \
          [](const RunConfig& c) { return num(c.member); }                                               \
    }                                                                                                    \
  }
#define EVF_SIZE(name, member)                                                                           \
  {                                                                                                      \
    name, {                                                                                              \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_uint(k, v); },       \
          [](const RunConfig& c) { return std::to_string(c.member); }                                    \
    }                                                                                                    \
  }
#define EVF_INT(name, member)                                                                            \
  {                                                                                                      \
    name, {                                                                                              \
      [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_int(k, v); },        \
          [](const RunConfig& c) { return std::to_string(c.member); }                                    \
    }                                                                                                    \
  }

const std::map<std::string, Key>& key_table() {
  static const std::map<std::string, Key> table = {
      {"scene", {[](RunConfig& c, const std::string&, const std::string& v) { c.scene_path = v; },
                 [](const RunConfig& c) { return c.scene_path.string(); }}},
      {"output_dir", {[](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
                      [](const RunConfig& c) { return c.output_dir.string(); }}},
      EVF_SIZE("threads", threads),
      EVF_SIZE("data_seed", data_seed),
      EVF_SIZE("train_views", train_views),
      EVF_SIZE("test_views", test_views),
      {"width", {[](RunConfig& c, const std::string& k, const std::string& v) {
                   c.train_arc.width = c.test_arc.width = to_int(k, v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train_arc.width); }}},
      {"height", {[](RunConfig& c, const std::string& k, const std::string& v) {
                    c.train_arc.height = c.test_arc.height = to_int(k, v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.train_arc.height); }}},
      EVF_DOUBLE("camera_radius", train_arc.radius),
      EVF_DOUBLE("train_azimuth_begin", train_arc.azimuth_begin_deg),
      EVF_DOUBLE("train_azimuth_end", train_arc.azimuth_end_deg),
      EVF_DOUBLE("test_azimuth_begin", test_arc.azimuth_begin_deg),
      EVF_DOUBLE("test_azimuth_end", test_arc.azimuth_end_deg),
      EVF_DOUBLE("elevation_min", train_arc.elevation_min_deg),
      EVF_DOUBLE("elevation_max", train_arc.elevation_max_deg),
      EVF_SIZE("quadrature", quadrature),
      EVF_DOUBLE("noise_sigma", noise_sigma),
      {"noise_region", {[](RunConfig& c, const std::string&, const std::string& v) {
                          if (v != "left" && v != "all") throw std::invalid_argument("config: noise_region must be left or all");
                          c.noise_region = v;
                        },
                        [](const RunConfig& c) { return c.noise_region; }}},
      EVF_SIZE("transients", transients),
      {"objective", {[](RunConfig& c, const std::string&, const std::string& v) { c.train.objective = parse_objective(v); },
                     [](const RunConfig& c) { return std::string(objective_name(c.train.objective)); }}},
      EVF_DOUBLE("lambda_reg", train.lambda_reg),
      EVF_DOUBLE("learning_rate", train.learning_rate),
      EVF_DOUBLE("adam_beta1", train.adam_beta1),
      EVF_DOUBLE("adam_beta2", train.adam_beta2),
      EVF_DOUBLE("adam_epsilon", train.adam_epsilon),
      EVF_SIZE("batch_rays", train.batch_rays),
      EVF_SIZE("iterations", train.iterations),
      EVF_SIZE("samples_per_ray", train.samples_per_ray),
      EVF_SIZE("seed", train.seed),
      EVF_SIZE("eval_interval", train.eval_interval),
      EVF_SIZE("log_interval", train.log_interval),
      EVF_SIZE("chunk_rays", train.chunk_rays),
      EVF_SIZE("checkpoint_interval", train.checkpoint_interval),
      EVF_DOUBLE("eu_max", train.eu_max),
      EVF_DOUBLE("background_au", train.background_au),
      EVF_DOUBLE("background_eu", train.background_eu),
      EVF_DOUBLE("background_shape", train.background_shape),
      EVF_INT("pos_frequencies", field.pos_frequencies),
      EVF_INT("dir_frequencies", field.dir_frequencies),
      EVF_INT("trunk_depth", field.trunk_depth),
      EVF_INT("trunk_width", field.trunk_width),
      {"uncertainty", {[](RunConfig& c, const std::string&, const std::string& v) { c.uncertainty = parse_uncertainty(v); },
                       [](const RunConfig& c) { return std::string(uncertainty_name(c.uncertainty)); }}},
      {"tau_quantiles", {[](RunConfig& c, const std::string& k, const std::string& v) {
                           c.tau_quantiles.clear();
                           for (const auto& s : split_list(v)) c.tau_quantiles.push_back(to_double(k, s));
                         },
                         [](const RunConfig& c) { return join(c.tau_quantiles); }}},
      EVF_DOUBLE("attenuation", attenuation),
      {"lambdas", {[](RunConfig& c, const std::string& k, const std::string& v) {
                     c.lambdas.clear();
                     for (const auto& s : split_list(v)) c.lambdas.push_back(to_double(k, s));
                   },
                   [](const RunConfig& c) { return join(c.lambdas); }}},
      EVF_SIZE("pool_views", pool_views),
      EVF_SIZE("initial_views", active.initial_views),
      EVF_SIZE("rounds", active.rounds),
      EVF_SIZE("views_per_round", active.views_per_round),
      EVF_SIZE("epochs_per_round", active.epochs_per_round),
      EVF_INT("score_downscale", active.score_downscale),
      {"strategy", {[](RunConfig& c, const std::string&, const std::string& v) { c.active.strategy = parse_strategy(v); },
                    [](const RunConfig& c) { return std::string(strategy_name(c.active.strategy)); }}},
      {"active_seeds", {[](RunConfig& c, const std::string& k, const std::string& v) {
                          c.active.seeds.clear();
                          for (const auto& s : split_list(v)) c.active.seeds.push_back(to_uint(k, s));
                        },
                        [](const RunConfig& c) { return join(c.active.seeds); }}},
  };
  return table;
}

#undef EVF_DOUBLE
#undef EVF_SIZE
#undef EVF_INT

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second.set(*this, key, value);
  // The test arc follows the train arc's radius and elevation band.
  if (key == "camera_radius") test_arc.radius = train_arc.radius;
  if (key == "elevation_min") test_arc.elevation_min_deg = train_arc.elevation_min_deg;
  if (key == "elevation_max") test_arc.elevation_max_deg = train_arc.elevation_max_deg;
}

void RunConfig::validate() const {
  if (!scene_path.empty() && !std::filesystem::exists(scene_path)) {
    throw std::invalid_argument("config: scene file does not exist: " + scene_path.string());
  }
  if (train_views == 0) throw std::invalid_argument("config: train_views must be >= 1");
  if (train_arc.width < 1 || train_arc.height < 1) throw std::invalid_argument("config: width/height must be >= 1");
  if (!(train_arc.radius > 0.0)) throw std::invalid_argument("config: camera_radius must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("config: noise_sigma must be >= 0");
  if (quadrature < 256) throw std::invalid_argument("config: quadrature must be >= 256");
  if (field.pos_frequencies < 0 || field.dir_frequencies < 0 || field.trunk_depth < 1 || field.trunk_width < 1) {
    throw std::invalid_argument("config: invalid field architecture");
  }
  for (double q : tau_quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("config: tau_quantiles must lie in (0, 1)");
  }
  if (!(attenuation >= 0.0 && attenuation <= 1.0)) throw std::invalid_argument("config: attenuation must lie in [0, 1]");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw std::invalid_argument("config: lambdas must be >= 0");
  }
  train.validate();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& [key, k] : key_table()) out << key << " = " << k.get(*this) << '\n';
  return out.str();
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& kv : key_table()) out.push_back(kv.first);
  return out;
}

SceneSpec RunConfig::scene() const {
  SceneSpec s = scene_path.empty() ? SceneSpec::default_scene() : SceneSpec::load(scene_path);
  s.validate();
  return s;
}

Dataset make_dataset(const RunConfig& config) {
  Dataset d;
  d.scene = config.scene();
  Rng rng(config.data_seed);
  Rng cam_rng = rng.split(1);
  d.train = generate_views(d.scene, config.train_arc, config.train_views, cam_rng, config.quadrature);
  if (config.test_views > 0) {
    // Offset by half a step so test cameras fall between training cameras.
    CameraArc arc = config.test_arc;
    arc.azimuth_offset_deg += 0.5 * (arc.azimuth_end_deg - arc.azimuth_begin_deg) / static_cast<double>(config.test_views);
    Rng test_rng = rng.split(2);
    d.test = generate_views(d.scene, arc, config.test_views, test_rng, config.quadrature);
  }
  if (config.transients > 0) {
    Rng t_rng = rng.split(3);
    d.train = inject_transients(d.train, config.transients, t_rng);
  }
  if (config.noise_sigma > 0.0) {
    Rng n_rng = rng.split(4);
    const ImageRegion region = config.noise_region == "all" ? ImageRegion{} : ImageRegion::left_half();
    d.train = inject_aleatoric(d.train, region, config.noise_sigma, n_rng);
  }
  return d;
}

const char* uncertainty_name(UncertaintyKind kind) {
  switch (kind) {
    case UncertaintyKind::kTotal: return "total";
    case UncertaintyKind::kAleatoric: return "aleatoric";
    case UncertaintyKind::kEpistemic: return "epistemic";
  }
  return "unknown";
}

UncertaintyKind parse_uncertainty(const std::string& name) {
  if (name == "total") return UncertaintyKind::kTotal;
  if (name == "aleatoric") return UncertaintyKind::kAleatoric;
  if (name == "epistemic") return UncertaintyKind::kEpistemic;
  throw std::invalid_argument("unknown uncertainty kind '" + name + "' (expected total, aleatoric or epistemic)");
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "scene,method,psnr,ssim,nll,ause_rmse,ause_mae\n" << std::setprecision(10);
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.scene << ',' << r.method << ',' << capped_psnr(m.psnr) << ',' << m.ssim << ',' << m.nll << ','
        << m.ause_rmse << ',' << m.ause_mae << '\n';
  }
}

}  // namespace evfield
