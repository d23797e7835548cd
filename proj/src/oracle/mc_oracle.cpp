#include <cmath>
#include <stdexcept>

#include "evfield/oracle.hpp"

namespace evfield::oracle {

namespace {

// Streaming mean and central moments up to the fourth (Pébay's update).
struct Moments {
  double n = 0, mean = 0, m2 = 0, m3 = 0, m4 = 0;

  void add(double x) {
    const double n1 = n;
    n += 1.0;
    const double delta = x - mean;
    const double dn = delta / n;
    const double dn2 = dn * dn;
    const double t1 = delta * dn * n1;
    mean += dn;
    m4 += t1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * m2 - 4 * dn * m3;
    m3 += t1 * dn * (n - 2) - 3 * dn * m2;
    m2 += t1;
  }

  double variance() const { return m2 / (n - 1); }
  Estimate mean_estimate() const { return {mean, std::sqrt(variance() / n)}; }
  // Large-sample standard error of the sample variance: sqrt((μ4 - σ⁴) / n).
  Estimate variance_estimate() const {
    const double mu4 = m4 / n;
    const double var = m2 / n;
    return {variance(), std::sqrt(std::max(0.0, mu4 - var * var) / n)};
  }
};

}  // namespace

MonteCarloMoments mc_pixel_moments(std::span<const double> weights, std::span<const NIGParams> points,
                                   double background, std::size_t samples, Rng& rng) {
  if (weights.size() != points.size() || points.empty()) throw std::invalid_argument("mc_pixel_moments: size mismatch");
  if (samples < 2) throw std::invalid_argument("mc_pixel_moments: need at least two samples");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  const double offset = (1.0 - wsum) * background;

  Moments color, aleatoric, epistemic;
  for (std::size_t s = 0; s < samples; ++s) {
    double mu_sum = offset, var_sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      // σ² = β / G with G ~ Gamma(α, 1).
      const double sigma2 = p.beta / rng.gamma(p.alpha);
      const double mu = rng.normal(p.gamma, std::sqrt(sigma2 / p.nu));
      mu_sum += weights[i] * mu;
      var_sum += weights[i] * weights[i] * sigma2;
    }
    const double c = rng.normal(mu_sum, std::sqrt(var_sum));
    color.add(c);
    aleatoric.add(var_sum);
    epistemic.add(mu_sum);
  }
  MonteCarloMoments out;
  out.mean = color.mean_estimate();
  out.u = color.variance_estimate();
  out.au = aleatoric.mean_estimate();
  out.eu = epistemic.variance_estimate();
  return out;
}

double dirac_pixel_mean(std::span<const double> weights, std::span<const double> colors, double background) {
  double c = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    c += weights[i] * colors[i];
    wsum += weights[i];
  }
  return c + (1.0 - wsum) * background;
}

}  // namespace evfield::oracle
