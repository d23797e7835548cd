#pragma once

namespace evfield {

// ln Γ(x) for x > 0 (Lanczos, g = 7, 9 coefficients). Throws std::domain_error for x <= 0.
double log_gamma(double x);

// ψ(x) = d/dx ln Γ(x) for x > 0.
double digamma(double x);

// ln(1 + e^x), linear above 30.
double softplus(double x);

// 1 / (1 + e^-x) without overflow for large |x|.
double sigmoid(double x);

// exp with its argument clamped to [-inf, 700].
double safe_exp(double x);

inline constexpr double kExpClamp = 700.0;
inline constexpr double kSoftplusLinear = 30.0;

}  // namespace evfield
