#pragma once

#include "cqfm/core.hpp"

namespace cqfm {

struct NormalizationResult {
  FactorFit fit;     // factors and loadings normalized; other fields untouched
  MatrixXd rotation;  // r x r, normalized factors = factors * rotation
};

// Identification: F'F/T = I_r and L'L/N diagonal with non-increasing
// diagonal. Whitens F by (F'F/T)^{-1/2}, rotates by the eigenvectors of the
// whitened L'L/N (largest eigenvalue first, ties kept in index order), then
// flips each column so the largest-magnitude loading entry is positive
// (lowest index on ties). F L' is preserved.
NormalizationResult normalize_solution(const MatrixXd& F, const MatrixXd& L);

// Composite quantile factor model fit by alternating factor, loading and
// intercept updates until the relative objective change drops below
// config.outer_tol. The returned fit is normalized.
FactorFit fit_cqfm(const Panel& panel, int r, const QuantileGrid& grid,
                   const CqfmConfig& config);

// Single-quantile special case; same code path as fit_cqfm with grid {tau}.
FactorFit fit_qfm(const Panel& panel, int r, double tau, const CqfmConfig& config);

// Principal components: F = sqrt(T) * top-r eigenvectors of Y Y'/(NT),
// L = Y'F/T. Intercepts are zero with length n_intercepts.
FactorFit fit_pca(const Panel& panel, int r, int n_intercepts = 1);

// Dispatch on method; QFM uses the grid's single tau or 0.5 when the grid
// has more than one entry.
FactorFit fit_factors(const Panel& panel, int r, Method method,
                      const QuantileGrid& grid, const CqfmConfig& config);

// Least-squares A with Fhat * A closest to F0. Reporting only.
MatrixXd align_to_truth(const MatrixXd& Fhat, const MatrixXd& F0);

}  // namespace cqfm
