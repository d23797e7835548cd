#include "evfield/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace evfield {

NormalPixel normal_composite(std::span<const double> weights, std::span<const std::array<double, 3>> means,
                             std::span<const double> variances, const RenderSettings& settings) {
  if (weights.size() != means.size() || weights.size() != variances.size()) {
    throw std::invalid_argument("normal_composite: input lengths differ");
  }
  NormalPixel px;
  double acc = 0.0;
  for (double w : weights) acc += w;
  if (acc < settings.weight_floor) {
    for (int c = 0; c < 3; ++c) px.mu[c] = settings.background[c];
    px.variance = settings.uncertainty_floor;
    return px;
  }
  double var = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(variances[i] > 0.0)) throw std::invalid_argument("normal_composite: point variances must be positive");
    for (std::size_t c = 0; c < 3; ++c) px.mu[c] += weights[i] * means[i][c];
    var += weights[i] * weights[i] * variances[i];
  }
  for (int c = 0; c < 3; ++c) px.mu[static_cast<std::size_t>(c)] += (1.0 - acc) * settings.background[c];
  px.variance = std::max(var, settings.uncertainty_floor);
  return px;
}

double gaussian_nll(double c_gt, double mu, double variance) {
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian_nll: variance must be positive");
  const double err = c_gt - mu;
  return 0.5 * std::log(2.0 * std::numbers::pi * variance) + err * err / (2.0 * variance);
}

double gaussian_nll(std::span<const double, 3> c_gt, const NormalPixel& px) {
  double nll = 0.0;
  for (std::size_t c = 0; c < 3; ++c) nll += gaussian_nll(c_gt[c], px.mu[c], px.variance);
  return nll;
}

double mse(std::span<const double> c_gt, std::span<const double> pred) {
  if (c_gt.size() != pred.size() || c_gt.empty()) throw std::invalid_argument("mse: sizes differ or are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < c_gt.size(); ++i) s += (c_gt[i] - pred[i]) * (c_gt[i] - pred[i]);
  return s / static_cast<double>(c_gt.size());
}

Var gaussian_nll_loss(Tape& tape, const PixelGraph& px, Var target, double variance_floor) {
  const Var var = tape.clamp_min(px.au, variance_floor);
  const double channels = static_cast<double>(target.cols());
  const Var sq = tape.sum_cols(tape.square(target - px.color));
  const Var nll = channels * 0.5 * tape.log(2.0 * std::numbers::pi * var) + sq / (2.0 * var);
  return tape.mean_all(nll);
}

Var mse_loss(Tape& tape, const PixelGraph& px, Var target) { return tape.mean_all(tape.square(target - px.color)); }

}  // namespace evfield
