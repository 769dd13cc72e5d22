#pragma once

#include "cqfm/core.hpp"

namespace cqfm {

// Mean squared distance between the true and estimated common components,
// (1/NT) sum_it (lambda0_i' F0_t - lambdahat_i' Fhat_t)^2.
double common_component_mse(const MatrixXd& F0, const MatrixXd& L0,
                            const MatrixXd& Fhat, const MatrixXd& Lhat);

struct AdjustedR2 {
  VectorXd values;      // one entry per true factor
  int dropped_columns = 0;  // collinear Fhat columns left out of the design
};

// Adjusted R^2 of regressing each column of F0 on [1, Fhat].
AdjustedR2 adjusted_r2_span(const MatrixXd& F0, const MatrixXd& Fhat);

}  // namespace cqfm
