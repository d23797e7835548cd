#pragma once

#include <span>
#include <vector>

#include "evfield/render.hpp"
#include "evfield/scene.hpp"

namespace evfield {

// PSNR written to CSV files when the images are identical.
inline constexpr double kPsnrCap = 99.0;

// 10 log10(1 / MSE) over all pixels and channels; +inf when MSE == 0.
double psnr(std::span<const double> pred, std::span<const double> gt);
double psnr(const Image& pred, const Image& gt);
inline double capped_psnr(double db) { return db > kPsnrCap ? kPsnrCap : db; }

// Mean SSIM over all valid 11x11 windows (Gaussian σ = 1.5, K1 = 0.01,
// K2 = 0.03, dynamic range 1) of the luminance (mean of RGB).
double ssim(const Image& pred, const Image& gt);

// Mean over pixels of the per-pixel NLL summed over channels.
double nll_metric(const Image& gt, std::span<const PixelEvidential> pixels);

enum class ErrorKind { kRmse, kMae };

// Per-pixel error over channels: sqrt(mean sq) for RMSE, mean abs for MAE.
std::vector<double> pixel_errors(const Image& pred, const Image& gt, ErrorKind kind);

// Error of the retained set after removing the top fraction of pixels.
struct SparsificationCurve {
  std::vector<double> fractions;
  std::vector<double> values;
  bool normalized = false;
};

// Removal steps of 1%: {0, 0.01, ..., 0.99}.
std::vector<double> default_fraction_grid();

// Pixels are removed in descending `ranking` order; ties go by index (stable).
// For RMSE, retained error is sqrt(mean e²); for MAE it is mean e.
SparsificationCurve sparsification_curve(std::span<const double> ranking, std::span<const double> pixel_error,
                                         ErrorKind kind, std::span<const double> fractions, bool normalize = true);

// Trapezoid area of the positive gap between the uncertainty-ranked and the
// error-ranked (oracle) curves, both normalized by the full-set error.
double ause(std::span<const double> uncertainty, std::span<const double> pixel_error, ErrorKind kind,
            std::span<const double> fractions);
double ause(std::span<const double> uncertainty, std::span<const double> pixel_error, ErrorKind kind);

}  // namespace evfield
