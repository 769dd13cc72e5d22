#include "cqfm/quantile_mm.hpp"

#include "cqfm/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cqfm {

void StackedQrProblem::validate() const {
  const Eigen::Index M = design.rows();
  if (M < 1 || design.cols() < 1) {
    throw ArgumentError("stacked problem needs M >= 1 rows and p >= 1 columns");
  }
  if (response.size() != M || tau_of_row.size() != M ||
      offset_of_row.size() != M) {
    throw ArgumentError("stacked problem vectors must have one entry per row");
  }
  for (Eigen::Index m = 0; m < M; ++m) {
    if (!(tau_of_row[m] > 0.0 && tau_of_row[m] < 1.0)) {
      throw ArgumentError("tau_of_row entries must lie in (0, 1)");
    }
  }
  require_finite(design, "design");
  require_finite(response, "response");
  require_finite(offset_of_row, "offset_of_row");
}

double stacked_check_loss(const StackedQrProblem& problem,
                          const VectorXd& beta) {
  const VectorXd r =
      problem.response - problem.offset_of_row - problem.design * beta;
  double total = 0.0;
  for (Eigen::Index m = 0; m < r.size(); ++m) {
    total += check_loss(r[m], problem.tau_of_row[m]);
  }
  return total;
}

double perturbed_check_loss(const StackedQrProblem& problem,
                            const VectorXd& beta, double eps) {
  const VectorXd r =
      problem.response - problem.offset_of_row - problem.design * beta;
  double total = 0.0;
  for (Eigen::Index m = 0; m < r.size(); ++m) {
    total += check_loss(r[m], problem.tau_of_row[m]) -
             0.5 * eps * std::log(eps + std::abs(r[m]));
  }
  return total;
}

namespace {

// Quantile-regression minima sit on vertices where p residuals vanish. The
// fixed-eps MM iterates stop short of such a vertex; interpolating the p rows
// with the smallest residuals (skipping rows linearly dependent on the ones
// already chosen) lands on a nearby one. Returns false when no p independent
// rows exist.
bool nearest_vertex(const StackedQrProblem& problem, const VectorXd& target,
                    const VectorXd& beta, std::vector<Eigen::Index>& basis_rows,
                    VectorXd& vertex) {
  const Eigen::Index M = problem.rows();
  const Eigen::Index p = problem.cols();
  if (M < p) return false;
  const VectorXd resid = target - problem.design * beta;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(M));
  for (Eigen::Index m = 0; m < M; ++m) order[static_cast<std::size_t>(m)] = m;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(resid[a]) < std::abs(resid[b]);
  });

  MatrixXd basis(p, p);
  MatrixXd rows(p, p);
  VectorXd rhs(p);
  basis_rows.clear();
  Eigen::Index chosen = 0;
  for (Eigen::Index m : order) {
    if (chosen == p) break;
    VectorXd v = problem.design.row(m).transpose();
    const double scale = v.norm();
    if (scale == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(chosen) * (basis.leftCols(chosen).transpose() * v);
    }
    if (v.norm() <= 1e-8 * scale) continue;
    basis.col(chosen) = v.normalized();
    rows.row(chosen) = problem.design.row(m);
    rhs[chosen] = target[m];
    basis_rows.push_back(m);
    ++chosen;
  }
  if (chosen < p) return false;
  vertex = rows.partialPivLu().solve(rhs);
  return vertex.allFinite();
}

// Exchange steps between adjacent vertices. Each step moves along the edge
// that frees one basis row, picks the steepest descent edge, and stops at the
// exact minimum along it (a weighted median of the crossing points). Ends at
// the global minimum of the convex check loss unless ties stall it.
void vertex_descent(const StackedQrProblem& problem, const VectorXd& target,
                    std::vector<Eigen::Index>& basis_rows, VectorXd& beta,
                    double& loss) {
  const Eigen::Index M = problem.rows();
  const Eigen::Index p = problem.cols();
  const VectorXd& tau = problem.tau_of_row;
  const double zero_tol = 1e-12 * std::max(1.0, target.cwiseAbs().maxCoeff());
  std::vector<char> in_basis(static_cast<std::size_t>(M), 0);
  std::vector<std::pair<double, double>> crossings;
  crossings.reserve(static_cast<std::size_t>(M));

  for (int pivot = 0; pivot < 50 * static_cast<int>(p) + 50; ++pivot) {
    MatrixXd AB(p, p);
    for (Eigen::Index j = 0; j < p; ++j) AB.row(j) = problem.design.row(basis_rows[j]);
    Eigen::FullPivLU<MatrixXd> lu(AB);
    if (!lu.isInvertible()) return;
    const MatrixXd dirs = lu.inverse();
    // delta(m, j): residual change of row m per unit step along dirs.col(j).
    const MatrixXd delta = -(problem.design * dirs);
    if (!delta.allFinite()) return;
    const VectorXd r = target - problem.design * beta;
    std::fill(in_basis.begin(), in_basis.end(), 0);
    for (Eigen::Index m : basis_rows) in_basis[static_cast<std::size_t>(m)] = 1;

    auto slope_of = [&](double rm, double dm, double t) {
      if (rm > zero_tol || (std::abs(rm) <= zero_tol && dm > 0.0)) return t * dm;
      return (t - 1.0) * dm;
    };

    double best_slope = -1e-12 * std::max(1.0, loss);
    Eigen::Index best_j = -1;
    double best_sign = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      for (double s : {1.0, -1.0}) {
        double slope = 0.0;
        for (Eigen::Index m = 0; m < M; ++m) {
          const double dm = s * delta(m, j);
          const double rm = in_basis[static_cast<std::size_t>(m)] ? 0.0 : r[m];
          slope += slope_of(rm, dm, tau[m]);
        }
        if (slope < best_slope) {
          best_slope = slope;
          best_j = j;
          best_sign = s;
        }
      }
    }
    if (best_j < 0) return;

    crossings.clear();
    for (Eigen::Index m = 0; m < M; ++m) {
      if (in_basis[static_cast<std::size_t>(m)]) continue;
      const double dm = best_sign * delta(m, best_j);
      if (std::abs(r[m]) <= zero_tol || dm == 0.0) continue;
      const double t = -r[m] / dm;
      if (t > 0.0) crossings.emplace_back(t, static_cast<double>(m));
    }
    std::sort(crossings.begin(), crossings.end());
    double slope = best_slope;
    Eigen::Index entering = -1;
    double step = 0.0;
    for (const auto& [t, mf] : crossings) {
      const auto m = static_cast<Eigen::Index>(mf);
      slope += std::abs(delta(m, best_j));
      if (slope >= 0.0) {
        entering = m;
        step = t;
        break;
      }
    }
    if (entering < 0) return;
    const VectorXd next = beta + (step * best_sign) * dirs.col(best_j);
    const double next_loss = stacked_check_loss(problem, next);
    if (!(next_loss < loss - 1e-15 * std::abs(loss))) return;
    beta = next;
    loss = next_loss;
    basis_rows[static_cast<std::size_t>(best_j)] = entering;
  }
}

void polish_to_vertex(const StackedQrProblem& problem, const VectorXd& target,
                      VectorXd& beta, double& loss) {
  std::vector<Eigen::Index> basis_rows;
  VectorXd vertex;
  if (!nearest_vertex(problem, target, beta, basis_rows, vertex)) return;
  double vertex_loss = stacked_check_loss(problem, vertex);
  vertex_descent(problem, target, basis_rows, vertex, vertex_loss);
  if (vertex_loss <= loss) {
    beta = vertex;
    loss = vertex_loss;
  }
}

}  // namespace

MmResult mm_quantile_solve(const StackedQrProblem& problem,
                           const VectorXd& start, const CqfmConfig& config,
                           MmOptions options) {
  if (options.validate) {
    problem.validate();
    config.validate();
  }
  const Eigen::Index M = problem.rows();
  const Eigen::Index p = problem.cols();
  if (start.size() != p) {
    throw ArgumentError("start vector length does not match design columns");
  }
  const double eps = config.mm_epsilon;
  const VectorXd target = problem.response - problem.offset_of_row;
  const VectorXd shift = (2.0 * problem.tau_of_row.array() - 1.0).matrix();

  MmResult out;
  VectorXd beta = start;
  VectorXd best = start;
  double best_loss = std::numeric_limits<double>::infinity();
  VectorXd resid(M);
  VectorXd w(M);
  MatrixXd xw(M, p);

  // Evaluates the residuals at `beta`, updates the best iterate by true check
  // loss and, if asked, records the perturbed objective.
  auto visit = [&](const VectorXd& b) {
    resid.noalias() = target - problem.design * b;
    double loss = 0.0;
    double perturbed = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      const double rm = resid[m];
      const double l = check_loss(rm, problem.tau_of_row[m]);
      loss += l;
      if (options.record_trace) {
        perturbed += l - 0.5 * eps * std::log(eps + std::abs(rm));
      }
    }
    if (options.record_trace) out.perturbed_trace.push_back(perturbed);
    if (loss < best_loss) {
      best_loss = loss;
      best = b;
    }
  };

  visit(beta);
  for (int it = 1; it <= config.max_inner_iters; ++it) {
    out.iterations = it;
    w = (eps + resid.array().abs()).inverse().matrix();
    xw = problem.design.array().colwise() * w.array();
    const MatrixXd A = xw.transpose() * problem.design;
    const VectorXd rhs = xw.transpose() * target + problem.design.transpose() * shift;

    Eigen::LLT<MatrixXd> llt(A);
    bool ok = llt.info() == Eigen::Success;
    VectorXd next;
    if (ok) {
      next = llt.solve(rhs);
      ok = next.allFinite();
    }
    if (!ok || llt.rcond() < 1e-14) {
      out.degenerate = true;
      // Ridge on the step, so directions the design cannot see keep their
      // current values.
      MatrixXd ridged = A;
      ridged.diagonal().array() += 1e-10;
      next = beta + ridged.ldlt().solve(rhs - A * beta);
      if (!next.allFinite()) {
        throw DegeneracyError("MM weighted normal equations are singular");
      }
    }
    const double step = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    visit(beta);
    if (step < config.inner_tol) {
      out.converged = true;
      break;
    }
  }
  polish_to_vertex(problem, target, best, best_loss);
  out.beta = best;
  return out;
}

double sample_quantile_minimizer(std::span<const double> residuals, double tau) {
  if (residuals.empty()) throw ArgumentError("sample quantile of empty input");
  if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must lie in (0, 1)");
  const double M = static_cast<double>(residuals.size());
  // Guard against tau*M landing a hair above an integer in floating point.
  auto rank = static_cast<std::size_t>(std::ceil(tau * M - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, residuals.size());
  std::vector<double> work(residuals.begin(), residuals.end());
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

}  // namespace cqfm
