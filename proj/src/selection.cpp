#include "cqfm/selection.hpp"

#include "cqfm/estimator.hpp"
#include "cqfm/loss.hpp"

#include <algorithm>
#include <cmath>

namespace cqfm {

std::string to_string(Penalty p) { return p == Penalty::V1 ? "V1" : "V2"; }

Penalty parse_penalty(const std::string& s) {
  if (s == "v1" || s == "V1") return Penalty::V1;
  if (s == "v2" || s == "V2") return Penalty::V2;
  throw ArgumentError("unknown penalty '" + s + "' (expected v1 or v2)");
}

double penalty_q(long N, long T, Penalty variant) {
  if (N < 2 || T < 2) throw ArgumentError("penalty_q: need N, T >= 2");
  const double n = static_cast<double>(N);
  const double t = static_cast<double>(T);
  const double ratio = n * t / (n + t);
  const double scale = (n + t) / (n * t);
  if (!(ratio > 1.0)) throw ArgumentError("penalty_q: need NT/(N+T) > 1");
  if (variant == Penalty::V1) return scale * std::log(ratio);
  if (!(ratio > std::exp(1.0))) {
    throw ArgumentError("penalty_q V2: need NT/(N+T) > e so ln(ln(.)) > 0");
  }
  return scale * std::log(std::log(ratio));
}

double information_criterion(double loss, int r, long N, long T, Penalty variant) {
  if (!(loss >= 0.0)) throw ArgumentError("information_criterion: loss must be >= 0");
  return std::log(std::max(loss, kLossFloor)) + r * penalty_q(N, T, variant);
}

double information_criterion(const Panel& panel, const FactorFit& fit,
                             const QuantileGrid& grid, Penalty variant) {
  if (static_cast<std::size_t>(fit.intercepts.size()) != grid.size()) {
    throw ArgumentError("information_criterion: fit intercepts do not match the grid");
  }
  return information_criterion(objective(panel, fit, grid), fit.rank, panel.N(),
                               panel.T(), variant);
}

double least_squares_loss(const Panel& panel, const FactorFit& fit) {
  const MatrixXd resid = panel.values() - fit.factors * fit.loadings.transpose();
  return resid.squaredNorm() / static_cast<double>(resid.size());
}

std::size_t argmin_first(const std::vector<double>& values) {
  if (values.empty()) throw ArgumentError("argmin of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

SelectionReport select_num_factors(const Panel& panel, int r_max,
                                   const QuantileGrid& grid,
                                   const CqfmConfig& config, Penalty variant,
                                   Method method, bool keep_fits) {
  if (r_max < 1 || r_max >= std::min(panel.T(), panel.N())) {
    throw ArgumentError("r_max must satisfy 1 <= r_max < min(T, N)");
  }
  SelectionReport report;
  report.penalty = variant;
  report.method = method;
  for (int r = 1; r <= r_max; ++r) {
    FactorFit fit;
    try {
      fit = fit_factors(panel, r, method, grid, config);
    } catch (const ArgumentError& e) {
      throw ArgumentError("rank " + std::to_string(r) + ": " + e.what());
    } catch (const DegeneracyError& e) {
      throw DegeneracyError("rank " + std::to_string(r) + ": " + e.what());
    }
    double ic = 0.0;
    if (method == Method::PCA) {
      ic = information_criterion(least_squares_loss(panel, fit), r, panel.N(),
                                 panel.T(), variant);
    } else {
      const QuantileGrid used =
          method == Method::QFM ? QuantileGrid({grid.size() == 1 ? grid[0] : 0.5}) : grid;
      ic = information_criterion(panel, fit, used, variant);
    }
    report.candidate_ranks.push_back(r);
    report.ic_values.push_back(ic);
    if (keep_fits) report.fits.push_back(std::move(fit));
  }
  report.chosen_rank = report.candidate_ranks[argmin_first(report.ic_values)];
  report.boundary_warning = report.chosen_rank == r_max;
  return report;
}

Panel standardize_columns(const Panel& panel) {
  MatrixXd Y = panel.values();
  const double T = static_cast<double>(Y.rows());
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    const double mean = Y.col(j).mean();
    Y.col(j).array() -= mean;
    const double sd = std::sqrt(Y.col(j).squaredNorm() / (T - 1.0));
    if (sd > 0.0) Y.col(j) /= sd;
  }
  return Panel(std::move(Y), panel.time_labels(), panel.var_names());
}

}  // namespace cqfm
