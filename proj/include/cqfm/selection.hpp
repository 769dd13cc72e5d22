#pragma once

#include "cqfm/core.hpp"

#include <optional>

namespace cqfm {

enum class Penalty { V1, V2 };

std::string to_string(Penalty p);
Penalty parse_penalty(const std::string& s);

// V1: ((N+T)/(NT)) ln(NT/(N+T)).
// V2: ((N+T)/(NT)) ln(ln(NT/(N+T))), lighter; suited to Cauchy-like tails.
double penalty_q(long N, long T, Penalty variant);

// Floor applied to the loss before taking the log, so exact fits stay finite.
inline constexpr double kLossFloor = 1e-300;

// ln(max(loss, floor)) + r * q(N, T).
double information_criterion(double loss, int r, long N, long T, Penalty variant);

// IC on the composite quantile objective of `fit`.
double information_criterion(const Panel& panel, const FactorFit& fit,
                             const QuantileGrid& grid, Penalty variant);

// Mean squared residual of Y - F L'; the least-squares loss used for the PCA
// analog of the criterion.
double least_squares_loss(const Panel& panel, const FactorFit& fit);

struct SelectionReport {
  std::vector<int> candidate_ranks;
  std::vector<double> ic_values;
  int chosen_rank = 0;
  Penalty penalty = Penalty::V1;
  Method method = Method::CQFM;
  // Argmin landed on r_max; a larger r_max may change the answer.
  bool boundary_warning = false;
  std::vector<FactorFit> fits;  // filled when keep_fits is set
};

// Index of the smallest value; ties go to the smallest index.
std::size_t argmin_first(const std::vector<double>& values);

// Fits ranks 1..r_max with a shared seed and picks the IC argmin. For PCA the
// criterion is evaluated on the least-squares loss with the same penalty.
SelectionReport select_num_factors(const Panel& panel, int r_max,
                                   const QuantileGrid& grid,
                                   const CqfmConfig& config, Penalty variant,
                                   Method method = Method::CQFM,
                                   bool keep_fits = false);

// Column-wise standardization to mean 0, sd 1 (sample sd). Constant columns
// are centered only.
Panel standardize_columns(const Panel& panel);

}  // namespace cqfm
