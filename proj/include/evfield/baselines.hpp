#pragma once

#include <array>
#include <span>

#include "evfield/autodiff.hpp"
#include "evfield/render.hpp"

namespace evfield {

// Gaussian pixel of the Normal baseline: μ per channel, one shared σ².
struct NormalPixel {
  std::array<double, 3> mu{};
  double variance = kUncertaintyFloor;
};

// μ = Σ w_i μ_i (+ background for the transparent remainder),
// σ² = max(Σ w_i² σ_i², floor). Empty rays fall back to the background with
// the floor variance.
NormalPixel normal_composite(std::span<const double> weights, std::span<const std::array<double, 3>> means,
                             std::span<const double> variances, const RenderSettings& settings = {});

// Per-channel Gaussian NLL summed over channels.
double gaussian_nll(std::span<const double, 3> c_gt, const NormalPixel& px);
double gaussian_nll(double c_gt, double mu, double variance);

// Mean squared error over all elements.
double mse(std::span<const double> c_gt, std::span<const double> pred);

// Batch graphs (R x 3 targets); both return 1 x 1 batch means.
Var gaussian_nll_loss(Tape& tape, const PixelGraph& px, Var target, double variance_floor = kUncertaintyFloor);
Var mse_loss(Tape& tape, const PixelGraph& px, Var target);

}  // namespace evfield
