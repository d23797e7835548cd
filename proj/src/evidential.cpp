#include "evfield/evidential.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "evfield/special.hpp"

namespace evfield {

void NIGParams::validate() const {
  if (!std::isfinite(gamma) || !std::isfinite(nu) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::invalid_argument("NIG parameters must be finite");
  }
  if (!(nu > 0.0)) throw std::invalid_argument("NIG nu must be positive");
  if (!(alpha > 1.0)) throw std::invalid_argument("NIG alpha must exceed 1");
  if (!(beta > 0.0)) throw std::invalid_argument("NIG beta must be positive");
}

NIGMoments nig_moments(const NIGParams& p) {
  p.validate();
  NIGMoments m;
  m.mean = p.gamma;
  m.au = p.beta / (p.alpha - 1.0);
  m.eu = p.beta / ((p.alpha - 1.0) * p.nu);
  m.u = m.au + m.eu;
  return m;
}

StudentTParams nig_to_student_t(const NIGParams& p) {
  p.validate();
  return {p.gamma, p.beta * (p.nu + 1.0) / (p.alpha * p.nu), 2.0 * p.alpha};
}

double nll_loss(double c_gt, const NIGParams& p) {
  p.validate();
  const double omega = 2.0 * p.beta * (p.nu + 1.0);
  const double err = c_gt - p.gamma;
  const double nll = 0.5 * std::log(std::numbers::pi / p.nu) - p.alpha * std::log(omega) + log_gamma(p.alpha) -
                     log_gamma(p.alpha + 0.5) + (p.alpha + 0.5) * std::log(err * err * p.nu + omega);
  if (!std::isfinite(nll)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "nll_loss is not finite at c=" << c_gt << " gamma=" << p.gamma << " nu=" << p.nu << " alpha=" << p.alpha
        << " beta=" << p.beta;
    throw NumericError(msg.str());
  }
  return nll;
}

double reg_loss(double c_gt, const NIGParams& p) {
  p.validate();
  return std::abs(c_gt - p.gamma) * (2.0 * p.nu + p.alpha);
}

double reg_loss(std::span<const double, 3> c_gt, std::span<const double, 3> gamma, double nu, double alpha) {
  double err = 0.0;
  for (std::size_t c = 0; c < 3; ++c) err += std::abs(c_gt[c] - gamma[c]);
  return (err / 3.0) * (2.0 * nu + alpha);
}

LossTerms total_loss(std::span<const double, 3> c_gt, std::span<const double, 3> gamma, double nu, double alpha,
                     double beta, double lambda_reg) {
  if (!(lambda_reg >= 0.0)) throw std::invalid_argument("total_loss: lambda_reg must be non-negative");
  LossTerms t;
  t.lambda_reg = lambda_reg;
  t.omega = 2.0 * beta * (nu + 1.0);
  for (std::size_t c = 0; c < 3; ++c) t.nll += nll_loss(c_gt[c], {gamma[c], nu, alpha, beta});
  t.reg = reg_loss(c_gt, gamma, nu, alpha);
  t.total = t.nll + lambda_reg * t.reg;
  return t;
}

LossTerms total_loss(std::span<const double, 3> c_gt, const PixelEvidential& px, double lambda_reg) {
  return total_loss(c_gt, std::span<const double, 3>(px.gamma), px.nu, px.alpha, px.beta, lambda_reg);
}

Var nll_graph(Tape& tape, Var target, Var gamma, Var nu, Var alpha, Var beta) {
  const double channels = static_cast<double>(target.cols());
  const Var omega = 2.0 * beta * (nu + 1.0);
  const Var alpha_half = alpha + 0.5;
  // Channel-independent part, counted once per channel.
  const Var shared = 0.5 * tape.log(std::numbers::pi / nu) - alpha * tape.log(omega) + tape.log_gamma(alpha) -
                     tape.log_gamma(alpha_half);
  const Var err = target - gamma;
  const Var spread = tape.sum_cols(tape.log(tape.square(err) * nu + omega));
  return channels * shared + alpha_half * spread;
}

Var reg_graph(Tape& tape, Var target, Var gamma, Var nu, Var alpha) {
  const Var mean_abs = tape.sum_cols(tape.abs(target - gamma)) * (1.0 / static_cast<double>(target.cols()));
  return mean_abs * (2.0 * nu + alpha);
}

LossGraph evidential_loss(Tape& tape, const PixelGraph& px, Var target, double lambda_reg) {
  if (!(lambda_reg >= 0.0)) throw std::invalid_argument("evidential_loss: lambda_reg must be non-negative");
  LossGraph g;
  g.nll = tape.mean_all(nll_graph(tape, target, px.color, px.nu, px.alpha, px.beta));
  g.reg = tape.mean_all(reg_graph(tape, target, px.color, px.nu, px.alpha));
  g.total = lambda_reg == 0.0 ? g.nll : g.nll + lambda_reg * g.reg;
  return g;
}

}  // namespace evfield
