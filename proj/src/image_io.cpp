#include "evfield/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

namespace evfield {

namespace {

std::runtime_error io_error(const std::string& what, const std::filesystem::path& path) {
  return std::runtime_error(what + ": " + path.string());
}

std::uint32_t float_bits_le(float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return u;
}

}  // namespace

void write_pfm(const std::filesystem::path& path, int width, int height, std::span<const double> values) {
  if (width <= 0 || height <= 0 || values.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("write_pfm: size mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("write_pfm: non-finite value");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing", path);
  out << "Pf\n" << width << ' ' << height << "\n-1.0\n";
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      const std::uint32_t u = float_bits_le(static_cast<float>(values[static_cast<std::size_t>(y) * width + x]));
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  if (!out) throw io_error("write failed", path);
}

FloatMap read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open for reading", path);
  std::string magic;
  FloatMap map;
  double scale = 0.0;
  in >> magic >> map.width >> map.height >> scale;
  if (!in || magic != "Pf" || map.width <= 0 || map.height <= 0 || scale == 0.0) throw io_error("not a grayscale PFM", path);
  in.get();  // single whitespace after the scale
  const bool little = scale < 0.0;
  map.values.resize(static_cast<std::size_t>(map.width) * map.height);
  for (int y = map.height - 1; y >= 0; --y) {
    for (int x = 0; x < map.width; ++x) {
      std::uint32_t u = 0;
      in.read(reinterpret_cast<char*>(&u), 4);
      if ((std::endian::native == std::endian::little) != little) u = __builtin_bswap32(u);
      map.values[static_cast<std::size_t>(y) * map.width + x] = std::bit_cast<float>(u);
    }
  }
  if (!in) throw io_error("truncated PFM", path);
  return map;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.width <= 0 || image.height <= 0 || image.rgb.size() != 3 * image.pixel_count()) {
    throw std::invalid_argument("write_png: malformed image");
  }
  const std::vector<png_byte> bytes = [&] {
    std::vector<png_byte> b(image.rgb.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double v = image.rgb[i];
      b[i] = static_cast<png_byte>(std::lround((std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0) * 255.0));
    }
    return b;
  }();
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw io_error("cannot open for writing", path);
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(fp, &std::fclose);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw io_error("libpng write failed", path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, bytes.data() + 3 * static_cast<std::size_t>(y) * image.width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw io_error("cannot read PNG", path);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw io_error("cannot decode PNG", path);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  for (std::size_t i = 0; i < out.rgb.size(); ++i) out.rgb[i] = buf[i] / 255.0;
  return out;
}

Image colorize(int width, int height, std::span<const double> values, double* out_min, double* out_max) {
  if (values.size() != static_cast<std::size_t>(width) * height) throw std::invalid_argument("colorize: size mismatch");
  // Control points of the ramp, evenly spaced in [0, 1].
  static constexpr std::array<std::array<double, 3>, 5> kRamp{{{0.0, 0.0, 0.02},
                                                               {0.32, 0.07, 0.43},
                                                               {0.72, 0.21, 0.33},
                                                               {0.98, 0.55, 0.04},
                                                               {0.99, 0.99, 0.75}}};
  double lo = 0.0, hi = 0.0;
  if (!values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  if (out_min) *out_min = lo;
  if (out_max) *out_max = hi;
  Image img(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = hi > lo ? (values[i] - lo) / (hi - lo) : 0.0;
    const double s = std::clamp(t, 0.0, 1.0) * (kRamp.size() - 1);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(s), kRamp.size() - 2);
    const double f = s - static_cast<double>(k);
    for (int c = 0; c < 3; ++c) img.rgb[3 * i + c] = (1.0 - f) * kRamp[k][c] + f * kRamp[k + 1][c];
  }
  return img;
}

}  // namespace evfield
