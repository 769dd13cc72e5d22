#pragma once

// Asymptotic covariances of the composite quantile factor estimator under
// i.i.d. errors, and its efficiency relative to principal components.

#include "cqfm/core.hpp"

#include <optional>
#include <span>

namespace cqfm {

struct AsymptoticCovariances {
  MatrixXd cov_factor;   // variance of sqrt(N) (Fhat_t - F0_t)
  MatrixXd cov_loading;  // variance of sqrt(T) (lambdahat_i - lambda0_i)
  VectorXd density_at_quantiles;  // f_eps(b_k), k = 1..K
  double composite_numerator = 0.0;
};

// Gaussian kernel density estimate at each point, Silverman bandwidth
// 1.06 min(sd, IQR/1.34) M^{-1/5}. Needs at least 10 non-constant values.
VectorXd density_at_quantiles(std::span<const double> residuals,
                              std::span<const double> points);

// sum_{k1,k2} min(tau_k1, tau_k2) (1 - max(tau_k1, tau_k2)).
double composite_numerator(const QuantileGrid& grid);

// Covariances for a normalized fit. Densities are estimated from the pooled
// residuals Y_it - lambda_i' F_t at the fitted intercepts unless `densities`
// supplies them (oracle values in tests).
AsymptoticCovariances asymptotic_covariances(
    const FactorFit& fit, const Panel& panel, const QuantileGrid& grid,
    std::optional<VectorXd> densities = std::nullopt);

// sigma2 (sum_k f_k)^2 / composite_numerator.
double are_vs_pca(const QuantileGrid& grid, std::span<const double> densities,
                  double sigma2_eps);

// Sample variance of the pooled residuals Y - F L' (default sigma2 for the ARE).
double pooled_residual_variance(const FactorFit& fit, const Panel& panel);

}  // namespace cqfm
