#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "evfield/oracle.hpp"

namespace evfield::oracle {

GaussHermite gauss_hermite(std::size_t order) {
  if (order == 0) throw std::invalid_argument("gauss_hermite: order must be positive");
  // Jacobi matrix of the Hermite recurrence; eigenvalues are the nodes and
  // the squared first eigenvector components give the weights.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(order), static_cast<Eigen::Index>(order));
  for (std::size_t k = 1; k < order; ++k) {
    const double b = std::sqrt(static_cast<double>(k) / 2.0);
    jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
    jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  GaussHermite gh;
  for (std::size_t k = 0; k < order; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    gh.nodes.push_back(solver.eigenvalues()(i));
    const double v = solver.eigenvectors()(0, i);
    gh.weights.push_back(std::sqrt(std::numbers::pi) * v * v);
  }
  return gh;
}

double marginal_density_quadrature(double c, const NIGParams& p) {
  p.validate();
  static const GaussHermite gh = gauss_hermite(96);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double log_norm = p.alpha * std::log(p.beta) - std::lgamma(p.alpha);

  // Integrand over s = log σ²: IG density times the Jacobian σ², times the
  // inner integral over μ.
  const auto integrand = [&](double s) {
    const double sigma2 = std::exp(s);
    const double log_ig = log_norm - (p.alpha + 1.0) * s - p.beta / sigma2 + s;
    if (log_ig < -745.0) return 0.0;
    // μ = γ + sqrt(2σ²/ν) x turns N(μ; γ, σ²/ν) dμ into e^{-x²} dx / sqrt(π).
    const double scale = std::sqrt(2.0 * sigma2 / p.nu);
    const double sigma = std::sqrt(sigma2);
    double inner = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const double z = (c - (p.gamma + scale * gh.nodes[k])) / sigma;
      inner += gh.weights[k] * inv_sqrt_2pi / sigma * std::exp(-0.5 * z * z);
    }
    inner /= std::sqrt(std::numbers::pi);
    return std::exp(log_ig) * inner;
  };

  // The IG density in s decays like exp(-β e^{-s}) on the left and
  // exp(-α s) on the right; these limits leave < 1e-14 of its mass outside.
  const double lo = std::log(p.beta) - std::log(800.0);
  const double hi = std::log(p.beta) + 35.0 / p.alpha;
  // Split at the IG mode so the adaptive rule sees the peak.
  const double mode = std::log(p.beta / p.alpha);
  using boost::math::quadrature::gauss_kronrod;
  double total = 0.0;
  const double cuts[] = {lo, mode - 2.0, mode, mode + 2.0, hi};
  for (int i = 0; i + 1 < 5; ++i) {
    const double a = std::max(lo, cuts[i]), b = std::min(hi, cuts[i + 1]);
    if (b > a) total += gauss_kronrod<double, 61>::integrate(integrand, a, b, 20, 1e-13);
  }
  return total;
}

double student_t_logpdf(double x, double location, double scale2, double dof) {
  if (!(scale2 > 0.0) || !(dof > 0.0)) throw std::invalid_argument("student_t_logpdf: invalid parameters");
  const double z2 = (x - location) * (x - location) / scale2;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi * scale2) -
         0.5 * (dof + 1.0) * std::log1p(z2 / dof);
}

double ause_brute_force(std::span<const double> uncertainty, std::span<const double> pixel_error, bool rmse,
                        std::span<const double> fractions) {
  const std::size_t n = uncertainty.size();
  if (n == 0 || pixel_error.size() != n) throw std::invalid_argument("ause_brute_force: size mismatch");

  // Retained error after dropping the `removed` highest-ranked pixels, where
  // the ranking is by key descending with index order breaking ties.
  const auto retained = [&](std::span<const double> key, std::size_t removed) {
    std::vector<bool> dropped(n, false);
    for (std::size_t r = 0; r < removed; ++r) {
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (dropped[i]) continue;
        if (best == n || key[i] > key[best]) best = i;
      }
      dropped[best] = true;
    }
    double acc = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dropped[i]) continue;
      acc += rmse ? pixel_error[i] * pixel_error[i] : pixel_error[i];
      ++kept;
    }
    const double mean = acc / static_cast<double>(kept);
    return rmse ? std::sqrt(mean) : mean;
  };

  const double full = retained(pixel_error, 0);
  std::vector<double> gap;
  for (double f : fractions) {
    const auto removed = std::min(static_cast<std::size_t>(std::floor(f * static_cast<double>(n))), n - 1);
    const double model = retained(uncertainty, removed) / full;
    const double best = retained(pixel_error, removed) / full;
    gap.push_back(std::max(0.0, model - best));
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < fractions.size(); ++i) area += 0.5 * (gap[i] + gap[i + 1]) * (fractions[i + 1] - fractions[i]);
  return area;
}

}  // namespace evfield::oracle
