#pragma once

// Majorization-minimization solver for stacked (composite) quantile
// regressions, after Hunter and Lange. Each iteration minimizes the quadratic
// majorizer of the epsilon-perturbed check loss, which is a weighted
// least-squares problem with row weights 1/(eps + |r_m|) and a linear shift
// (2 tau_m - 1).

#include "cqfm/core.hpp"

#include <span>

namespace cqfm {

// Minimize sum_m rho_{tau_m}(response_m - offset_m - design_m' beta).
//
// The factor update for period t stacks N*K pseudo-rows (design lambda_i,
// response Y_it, offset b_k, tau tau_k); the loading update for unit i stacks
// T*K rows the same way.
struct StackedQrProblem {
  MatrixXd design;         // M x p
  VectorXd response;       // M
  VectorXd tau_of_row;     // M, each in (0, 1)
  VectorXd offset_of_row;  // M

  Eigen::Index rows() const { return design.rows(); }
  Eigen::Index cols() const { return design.cols(); }
  void validate() const;
};

struct MmResult {
  VectorXd beta;
  bool converged = false;
  int iterations = 0;
  // Set when the weighted normal equations were singular and the
  // 1e-10 * I ridge was added.
  bool degenerate = false;
  // Perturbed objective at each visited iterate (only when requested).
  std::vector<double> perturbed_trace;
};

struct MmOptions {
  bool record_trace = false;
  bool validate = true;
};

MmResult mm_quantile_solve(const StackedQrProblem& problem,
                           const VectorXd& start, const CqfmConfig& config,
                           MmOptions options = {});

// sum_m rho_{tau_m}(y_m - offset_m - x_m' beta).
double stacked_check_loss(const StackedQrProblem& problem,
                          const VectorXd& beta);

// sum_m [rho_{tau_m}(r_m) - (eps / 2) ln(eps + |r_m|)]; the quantity the MM
// iterations never increase.
double perturbed_check_loss(const StackedQrProblem& problem,
                            const VectorXd& beta, double eps);

// Closed-form minimizer of sum_m rho_tau(e_m - b): the order statistic of
// rank ceil(tau * M). Picks the lower end of the minimizer interval when it is
// not unique.
double sample_quantile_minimizer(std::span<const double> residuals, double tau);

}  // namespace cqfm
