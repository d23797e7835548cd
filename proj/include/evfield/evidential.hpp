#pragma once

#include <array>
#include <span>

#include "evfield/autodiff.hpp"
#include "evfield/render.hpp"

namespace evfield {

// Normal-inverse-gamma: μ | σ² ~ N(γ, σ²/ν), σ² ~ Γ⁻¹(α, β).
struct NIGParams {
  double gamma = 0.0;
  double nu = 1.0;
  double alpha = 2.0;
  double beta = 1.0;

  // Throws std::invalid_argument unless ν > 0, α > 1, β > 0, all finite.
  void validate() const;
};

struct StudentTParams {
  double location = 0.0;
  double scale2 = 1.0;  // σ_t²
  double dof = 1.0;     // ν_t
};

struct NIGMoments {
  double mean = 0.0;
  double u = 0.0;
  double au = 0.0;
  double eu = 0.0;
};

struct LossTerms {
  double nll = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double lambda_reg = 0.0;
  double omega = 0.0;
};

inline constexpr double kDefaultLambdaReg = 1e-2;

NIGMoments nig_moments(const NIGParams& p);
StudentTParams nig_to_student_t(const NIGParams& p);

// Negative log of the Student-t marginal at c_gt, written through Ω = 2β(ν+1).
// Throws NumericError if the result is not finite.
double nll_loss(double c_gt, const NIGParams& p);

// |c_gt - γ| (2ν + α).
double reg_loss(double c_gt, const NIGParams& p);
// RGB form: the mean absolute channel error against the shared (ν, α).
double reg_loss(std::span<const double, 3> c_gt, std::span<const double, 3> gamma, double nu, double alpha);

// NLL summed over the three channels (per-channel γ, shared ν, α, β) plus
// λ_reg times the RGB regularizer.
LossTerms total_loss(std::span<const double, 3> c_gt, std::span<const double, 3> gamma, double nu, double alpha,
                     double beta, double lambda_reg);
LossTerms total_loss(std::span<const double, 3> c_gt, const PixelEvidential& px, double lambda_reg);

// ---------------------------------------------------------------- graphs
//
// target and gamma are R x C; nu, alpha, beta are R x 1. Results are R x 1
// (NLL summed over the C channels).

Var nll_graph(Tape& tape, Var target, Var gamma, Var nu, Var alpha, Var beta);
Var reg_graph(Tape& tape, Var target, Var gamma, Var nu, Var alpha);

struct LossGraph {
  Var total;  // 1 x 1, batch mean
  Var nll;    // 1 x 1, batch mean
  Var reg;    // 1 x 1, batch mean
};

LossGraph evidential_loss(Tape& tape, const PixelGraph& pixels, Var target, double lambda_reg);

}  // namespace evfield
