#pragma once

// Reference computations that share no code path with the production
// compositor or loss: Monte Carlo sampling of the point-to-pixel hierarchy,
// direct 2-D quadrature of the NIG x Normal marginal, and brute-force AUSE.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evfield/evidential.hpp"
#include "evfield/rng.hpp"

namespace evfield::oracle {

// ---------------------------------------------------------------- propagation

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct MonteCarloMoments {
  Estimate mean;
  Estimate u;   // Var[c]
  Estimate au;  // E[Σ w_i² σ_i²]
  Estimate eu;  // Var[Σ w_i μ_i]
};

// Samples σ_i² ~ Γ⁻¹(α_i, β_i), μ_i ~ N(γ_i, σ_i²/ν_i), and the pixel color
// c ~ N(Σ w_i μ_i + (1 - Σ w_i) bg, Σ w_i² σ_i²) for one channel.
// Variance standard errors use the fourth central moment, so α_i > 4 keeps
// them meaningful.
MonteCarloMoments mc_pixel_moments(std::span<const double> weights, std::span<const NIGParams> points,
                                   double background, std::size_t samples, Rng& rng);

// Deterministic points (σ_i² = 0): the pixel is the plain weighted sum.
double dirac_pixel_mean(std::span<const double> weights, std::span<const double> colors, double background);

// ---------------------------------------------------------------- marginal

// Gauss-Hermite nodes/weights for ∫ e^{-x²} f(x) dx (Golub-Welsch).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(std::size_t order);

// p(c) = ∫∫ N(c; μ, σ²) N(μ; γ, σ²/ν) Γ⁻¹(σ²; α, β) dμ dσ², with Gauss-Hermite
// over μ and adaptive Gauss-Kronrod over log σ².
double marginal_density_quadrature(double c, const NIGParams& p);

// Textbook location-scale Student-t log-density.
double student_t_logpdf(double x, double location, double scale2, double dof);

// ---------------------------------------------------------------- sparsification

// Direct AUSE: each curve point re-sorts and averages the retained pixels.
double ause_brute_force(std::span<const double> uncertainty, std::span<const double> pixel_error, bool rmse,
                        std::span<const double> fractions);

// ---------------------------------------------------------------- suites

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

SuiteResult gradient_suite(std::uint64_t seed);
SuiteResult propagation_suite(std::uint64_t seed, std::size_t samples = 1'000'000);
SuiteResult marginal_suite(std::uint64_t seed);
SuiteResult gaussian_limit_suite(std::uint64_t seed);
SuiteResult ause_suite(std::uint64_t seed);

std::vector<SuiteResult> run_all_suites(std::uint64_t seed);

}  // namespace evfield::oracle
