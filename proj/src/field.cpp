#include "evfield/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace evfield {

std::vector<double> positional_encode(const Vec3& p, int frequencies) {
  std::vector<double> out;
  positional_encode(std::span<const double>(p.data(), 3), frequencies, out);
  return out;
}

void positional_encode(std::span<const double> points, int frequencies, std::vector<double>& out) {
  if (frequencies < 0) throw std::invalid_argument("positional_encode: frequency count must be >= 0");
  if (points.size() % 3 != 0) throw std::invalid_argument("positional_encode: expected N x 3 points");
  const std::size_t n = points.size() / 3;
  const std::size_t width = 3 + 6 * static_cast<std::size_t>(frequencies);
  out.resize(n * width);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * width;
    const double* p = points.data() + 3 * i;
    row[0] = p[0];
    row[1] = p[1];
    row[2] = p[2];
    double scale = std::numbers::pi;
    for (int k = 0; k < frequencies; ++k) {
      double* block = row + 3 + 6 * static_cast<std::size_t>(k);
      for (int c = 0; c < 3; ++c) {
        block[c] = std::sin(scale * p[c]);
        block[3 + c] = std::cos(scale * p[c]);
      }
      scale *= 2.0;
    }
  }
}

Field::Field(const FieldConfig& config) : config_(config) {
  if (config.trunk_depth < 1 || config.trunk_width < 1) throw std::invalid_argument("Field: trunk must have >= 1 layer of width >= 1");
  if (config.pos_frequencies < 0 || config.dir_frequencies < 0) throw std::invalid_argument("Field: negative frequency count");
  if (!(config.uncertainty_floor > 0.0)) throw std::invalid_argument("Field: uncertainty floor must be positive");
  const auto width = static_cast<std::size_t>(config.trunk_width);
  std::size_t fan_in = config.pos_encoding_size();
  for (int l = 0; l < config.trunk_depth; ++l) {
    const std::string prefix = "trunk" + std::to_string(l);
    const std::size_t w = params_.add(prefix + ".weight", fan_in, width);
    params_.add(prefix + ".bias", 1, width);
    if (l == 0) first_trunk_ = w;
    fan_in = width;
  }
  density_weight_ = params_.add("density.weight", width, 1);
  params_.add("density.bias", 1, 1);
  head_weight_ = params_.add("head.weight", width + config.dir_encoding_size(), kHeadWidth);
  params_.add("head.bias", 1, kHeadWidth);
}

Field Field::initialized(const FieldConfig& config, Rng& rng) {
  Field field(config);
  auto& store = field.params();
  for (std::size_t i = 0; i + 1 < store.size(); i += 2) {
    auto& weight = store[i];
    auto& bias = store[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(weight.rows));
    for (double& w : weight.value) w = rng.uniform(-bound, bound);
    for (double& b : bias.value) b = rng.uniform(-bound, bound);
  }
  return field;
}

std::vector<Var> Field::bind_constants(Tape& tape) const {
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (const auto& e : params_.entries()) leaves.push_back(tape.constant(e.rows, e.cols, e.value));
  return leaves;
}

std::vector<Var> Field::bind(Tape& tape) {
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) leaves.push_back(tape.parameter(params_, i));
  return leaves;
}

std::vector<Var> Field::bind(Tape& tape, GradBuffer& buffer) const {
  std::vector<Var> leaves;
  leaves.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) leaves.push_back(tape.parameter(params_, i, buffer));
  return leaves;
}

FieldOutputs Field::forward(Tape& tape, std::span<const Var> leaves, std::span<const double> positions,
                            std::span<const double> directions) const {
  if (leaves.size() != params_.size()) throw std::invalid_argument("Field::forward: wrong number of parameter leaves");
  if (positions.size() != directions.size() || positions.size() % 3 != 0) {
    throw std::invalid_argument("Field::forward: positions and directions must both be P x 3");
  }
  const std::size_t count = positions.size() / 3;
  std::vector<double> encoded;
  positional_encode(positions, config_.pos_frequencies, encoded);
  Var h = tape.constant(count, config_.pos_encoding_size(), encoded);
  for (int l = 0; l < config_.trunk_depth; ++l) {
    const std::size_t w = first_trunk_ + 2 * static_cast<std::size_t>(l);
    h = tape.softplus(tape.matmul(h, leaves[w]) + leaves[w + 1]);
  }
  FieldOutputs out;
  out.density = tape.softplus(tape.matmul(h, leaves[density_weight_]) + leaves[density_weight_ + 1]);

  positional_encode(directions, config_.dir_frequencies, encoded);
  const Var dir = tape.constant(count, config_.dir_encoding_size(), encoded);
  const Var head = tape.matmul(tape.concat_cols(h, dir), leaves[head_weight_]) + leaves[head_weight_ + 1];
  const double floor = config_.uncertainty_floor;
  out.color = tape.sigmoid(tape.slice_cols(head, 0, 3));
  out.au = tape.softplus(tape.slice_cols(head, 3, 1)) + floor;
  out.eu = tape.softplus(tape.slice_cols(head, 4, 1)) + floor;
  out.shape_score = tape.softplus(tape.slice_cols(head, 5, 1)) + floor;
  return out;
}

PointPrediction Field::evaluate_point(const Vec3& x, const Vec3& d) const {
  if (!x.allFinite() || !d.allFinite()) throw std::invalid_argument("evaluate_point: non-finite input");
  if (std::abs(d.norm() - 1.0) > 1e-6) throw std::invalid_argument("evaluate_point: direction must be unit length");
  Tape tape;
  const auto leaves = bind_constants(tape);
  const auto out = forward(tape, leaves, std::span<const double>(x.data(), 3), std::span<const double>(d.data(), 3));
  PointPrediction p;
  for (std::size_t c = 0; c < 3; ++c) p.mean_color[c] = out.color.value(0, c);
  p.au = out.au.value();
  p.eu = out.eu.value();
  p.shape_score = out.shape_score.value();
  p.density = out.density.value();
  return p;
}

// ------------------------------------------------------------ checkpoints
//
// "EVF1" | u32 version | i32 pos_freq, dir_freq, depth, width | f64 floor |
// u32 entry count | per entry: u32 name length, name, u64 rows, u64 cols |
// all parameter values as f64, entry order. Everything little-endian.

namespace {

constexpr char kMagic[4] = {'E', 'V', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: unexpected end of file");
  return to_little(v);
}

}  // namespace

void Field::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::int32_t>(os, config_.pos_frequencies);
  put<std::int32_t>(os, config_.dir_frequencies);
  put<std::int32_t>(os, config_.trunk_depth);
  put<std::int32_t>(os, config_.trunk_width);
  put<double>(os, config_.uncertainty_floor);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& e : params_.entries()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint64_t>(os, e.rows);
    put<std::uint64_t>(os, e.cols);
  }
  for (const auto& e : params_.entries()) {
    for (double v : e.value) put<double>(os, v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Field Field::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not an EVF1 checkpoint: " + path.string());
  if (const auto version = get<std::uint32_t>(is); version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  FieldConfig config;
  config.pos_frequencies = get<std::int32_t>(is);
  config.dir_frequencies = get<std::int32_t>(is);
  config.trunk_depth = get<std::int32_t>(is);
  config.trunk_width = get<std::int32_t>(is);
  config.uncertainty_floor = get<double>(is);
  Field field(config);
  const auto count = get<std::uint32_t>(is);
  if (count != field.params_.size()) throw std::runtime_error("checkpoint: layer table does not match its config");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    const auto& e = field.params_[i];
    if (!is || name != e.name || rows != e.rows || cols != e.cols) {
      throw std::runtime_error("checkpoint: layer table mismatch at entry '" + name + "'");
    }
  }
  for (auto& e : field.params_.entries()) {
    for (double& v : e.value) v = get<double>(is);
  }
  field.params_.check_finite();
  return field;
}

}  // namespace evfield
