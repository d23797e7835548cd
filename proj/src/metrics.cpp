#include "evfield/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "evfield/evidential.hpp"

namespace evfield {

double psnr(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw std::invalid_argument("psnr: images differ in size or are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  const double mse = s / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& pred, const Image& gt) {
  if (pred.width != gt.width || pred.height != gt.height) throw std::invalid_argument("psnr: image dimensions differ");
  return psnr(pred.rgb, gt.rgb);
}

double ssim(const Image& pred, const Image& gt) {
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (pred.width != gt.width || pred.height != gt.height) throw std::invalid_argument("ssim: image dimensions differ");
  if (pred.width < kWindow || pred.height < kWindow) throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  const int w = pred.width, h = pred.height;
  std::vector<double> x(pred.pixel_count()), y(pred.pixel_count());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (pred.rgb[3 * i] + pred.rgb[3 * i + 1] + pred.rgb[3 * i + 2]) / 3.0;
    y[i] = (gt.rgb[3 * i] + gt.rgb[3 * i + 1] + gt.rgb[3 * i + 2]) / 3.0;
  }
  double kernel[kWindow][kWindow];
  double ksum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    for (int j = 0; j < kWindow; ++j) {
      const double di = i - kWindow / 2, dj = j - kWindow / 2;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      ksum += kernel[i][j];
    }
  }
  for (auto& row : kernel) {
    for (double& k : row) k /= ksum;
  }

  double total = 0.0;
  std::size_t windows = 0;
  for (int oy = 0; oy + kWindow <= h; ++oy) {
    for (int ox = 0; ox + kWindow <= w; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
          const std::size_t k = static_cast<std::size_t>(oy + i) * w + (ox + j);
          const double g = kernel[i][j];
          mx += g * x[k];
          my += g * y[k];
          sxx += g * x[k] * x[k];
          syy += g * y[k] * y[k];
          sxy += g * x[k] * y[k];
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

double nll_metric(const Image& gt, std::span<const PixelEvidential> pixels) {
  if (gt.pixel_count() != pixels.size() || pixels.empty()) throw std::invalid_argument("nll_metric: pixel count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const std::span<const double, 3> target(gt.rgb.data() + 3 * i, 3);
    s += total_loss(target, pixels[i], 0.0).nll;
  }
  return s / static_cast<double>(pixels.size());
}

std::vector<double> pixel_errors(const Image& pred, const Image& gt, ErrorKind kind) {
  if (pred.width != gt.width || pred.height != gt.height) throw std::invalid_argument("pixel_errors: dimensions differ");
  std::vector<double> e(pred.pixel_count());
  for (std::size_t i = 0; i < e.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = pred.rgb[3 * i + c] - gt.rgb[3 * i + c];
      acc += kind == ErrorKind::kRmse ? d * d : std::abs(d);
    }
    e[i] = kind == ErrorKind::kRmse ? std::sqrt(acc / 3.0) : acc / 3.0;
  }
  return e;
}

std::vector<double> default_fraction_grid() {
  std::vector<double> grid(100);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / 100.0;
  return grid;
}

SparsificationCurve sparsification_curve(std::span<const double> ranking, std::span<const double> pixel_error,
                                         ErrorKind kind, std::span<const double> fractions, bool normalize) {
  const std::size_t n = ranking.size();
  if (n == 0 || pixel_error.size() != n) throw std::invalid_argument("sparsification_curve: sizes differ or are empty");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) throw std::invalid_argument("sparsification_curve: fractions must lie in [0, 1)");
    if (i > 0 && !(fractions[i] > fractions[i - 1])) throw std::invalid_argument("sparsification_curve: fractions must increase");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ranking[a] > ranking[b]; });

  // Suffix sums over the removal order give each retained-set error in O(1).
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    const double e = pixel_error[order[i]];
    suffix[i] = suffix[i + 1] + (kind == ErrorKind::kRmse ? e * e : e);
  }
  const auto retained_error = [&](std::size_t removed) {
    const double mean = suffix[removed] / static_cast<double>(n - removed);
    return kind == ErrorKind::kRmse ? std::sqrt(mean) : mean;
  };

  SparsificationCurve curve;
  curve.fractions.assign(fractions.begin(), fractions.end());
  curve.normalized = normalize;
  const double full = retained_error(0);
  for (double f : fractions) {
    const auto removed = static_cast<std::size_t>(std::floor(f * static_cast<double>(n)));
    double v = retained_error(std::min(removed, n - 1));
    if (normalize) v = full > 0.0 ? v / full : 0.0;
    curve.values.push_back(v);
  }
  return curve;
}

double ause(std::span<const double> uncertainty, std::span<const double> pixel_error, ErrorKind kind,
            std::span<const double> fractions) {
  if (fractions.size() < 2) throw std::invalid_argument("ause: need at least two fractions");
  const auto model = sparsification_curve(uncertainty, pixel_error, kind, fractions, true);
  const auto oracle = sparsification_curve(pixel_error, pixel_error, kind, fractions, true);
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) {
    const double g0 = std::max(0.0, model.values[i] - oracle.values[i]);
    const double g1 = std::max(0.0, model.values[i + 1] - oracle.values[i + 1]);
    area += 0.5 * (g0 + g1) * (fractions[i + 1] - fractions[i]);
  }
  return area;
}

double ause(std::span<const double> uncertainty, std::span<const double> pixel_error, ErrorKind kind) {
  const auto grid = default_fraction_grid();
  return ause(uncertainty, pixel_error, kind, grid);
}

}  // namespace evfield
