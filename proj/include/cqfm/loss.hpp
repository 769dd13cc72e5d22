#pragma once

#include "cqfm/core.hpp"

#include <span>

namespace cqfm {

// rho_tau(v) = v * (tau - 1{v <= 0}).
inline double check_loss(double v, double tau) {
  return v * (tau - (v <= 0.0 ? 1.0 : 0.0));
}

// sum_k rho_{tau_k}(u - offsets_k).
double composite_check_loss(double u, const QuantileGrid& grid,
                            std::span<const double> offsets);

// Composite quantile objective averaged over the N*T cells:
// (1/NT) sum_k sum_i sum_t rho_{tau_k}(Y_it - b_k - lambda_i' F_t).
double objective(const Panel& panel, const FactorFit& fit,
                 const QuantileGrid& grid);

// Same objective on raw parts, used inside the estimator loop.
double objective(const MatrixXd& Y, const MatrixXd& F, const MatrixXd& L,
                 const VectorXd& b, const QuantileGrid& grid);

}  // namespace cqfm
