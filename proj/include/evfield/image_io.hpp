#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "evfield/scene.hpp"

namespace evfield {

struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, top row first
};

// Grayscale PFM: "Pf\n<w> <h>\n-1.0\n" then little-endian float32 rows,
// bottom row first. Throws std::runtime_error on I/O failure and
// std::invalid_argument on non-finite values.
void write_pfm(const std::filesystem::path& path, int width, int height, std::span<const double> values);
FloatMap read_pfm(const std::filesystem::path& path);

// 8-bit RGB PNG, values clamped to [0, 1] then scaled by 255 and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
// Reads an 8-bit RGB or RGBA PNG back into [0, 1] values.
Image read_png(const std::filesystem::path& path);

// Maps a scalar field to RGB with a fixed perceptual ramp (black, purple,
// orange, pale yellow) after min/max normalization. Constant maps take the
// lowest ramp color.
Image colorize(int width, int height, std::span<const double> values, double* out_min = nullptr,
               double* out_max = nullptr);

}  // namespace evfield
