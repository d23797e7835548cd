#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "evfield/image_io.hpp"

using namespace evfield;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
fs::path tmp(const char* name) { return fs::temp_directory_path() / name; }
}  // namespace

TEST(Pfm, SinglePixelBytes) {
  const auto p = tmp("evfield_1x1.pfm");
  write_pfm(p, 1, 1, std::vector<double>{0.5});
  const std::string s = slurp(p);
  fs::remove(p);
  ASSERT_EQ(s.size(), 16u);
  EXPECT_EQ(s.substr(0, 12), "Pf\n1 1\n-1.0\n");
  float v;
  std::memcpy(&v, s.data() + 12, 4);
  EXPECT_EQ(v, 0.5f);
}

TEST(Pfm, RoundTripAndRowOrder) {
  const auto p = tmp("evfield_rt.pfm");
  const std::vector<double> v = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  write_pfm(p, 3, 2, v);
  const auto m = read_pfm(p);
  const std::string s = slurp(p);
  fs::remove(p);
  ASSERT_EQ(m.width, 3);
  ASSERT_EQ(m.height, 2);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(m.values[i], static_cast<float>(v[i]));
  float first;
  std::memcpy(&first, s.data() + 12, 4);
  EXPECT_EQ(first, 0.4f);  // bottom row first on disk
}

TEST(Pfm, RejectsNonFinite) {
  EXPECT_THROW(write_pfm(tmp("evfield_bad.pfm"), 1, 1, std::vector<double>{NAN}), std::invalid_argument);
  EXPECT_ANY_THROW(read_pfm(tmp("evfield_does_not_exist.pfm")));
}

TEST(Png, BlackAndRoundTrip) {
  const auto p = tmp("evfield_rt.png");
  write_png(p, Image(5, 3, 0.0));
  const Image black = read_png(p);
  EXPECT_EQ(black.width, 5);
  EXPECT_EQ(black.height, 3);
  for (double v : black.rgb) EXPECT_EQ(v, 0.0);
  Image img(4, 4);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<double>(i) / 60.0 - 0.2;
  write_png(p, img);
  const Image back = read_png(p);
  fs::remove(p);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) EXPECT_NEAR(back.rgb[i], std::clamp(img.rgb[i], 0.0, 1.0), 0.5 / 255 + 1e-12);
}

TEST(Colorize, RangeAndEndpoints) {
  double lo = 0, hi = 0;
  const Image c = colorize(3, 1, std::vector<double>{2.0, 5.0, 8.0}, &lo, &hi);
  EXPECT_EQ(lo, 2.0);
  EXPECT_EQ(hi, 8.0);
  EXPECT_EQ(c.at(0, 0, 0), 0.0);
  EXPECT_LT(c.at(0, 0, 2), 0.05);
  EXPECT_GT(c.at(2, 0, 0) + c.at(2, 0, 1), c.at(1, 0, 0) + c.at(1, 0, 1));
  const Image flat = colorize(2, 1, std::vector<double>{1.0, 1.0});
  for (std::size_t i = 0; i < flat.rgb.size(); ++i) EXPECT_EQ(flat.rgb[i], c.rgb[i % 3]);
}
