#include "cqfm/loss.hpp"

namespace cqfm {

double composite_check_loss(double u, const QuantileGrid& grid,
                            std::span<const double> offsets) {
  if (offsets.size() != grid.size()) {
    throw ArgumentError("offsets length " + std::to_string(offsets.size()) +
                        " does not match grid size " +
                        std::to_string(grid.size()));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    total += check_loss(u - offsets[k], grid[k]);
  }
  return total;
}

double objective(const MatrixXd& Y, const MatrixXd& F, const MatrixXd& L,
                 const VectorXd& b, const QuantileGrid& grid) {
  if (F.rows() != Y.rows() || L.rows() != Y.cols() || F.cols() != L.cols()) {
    throw ArgumentError("fit dimensions do not match the panel");
  }
  if (static_cast<std::size_t>(b.size()) != grid.size()) {
    throw ArgumentError("intercept count does not match grid size");
  }
  const MatrixXd resid = Y - F * L.transpose();
  const auto K = grid.size();
  double total = 0.0;
  for (Eigen::Index j = 0; j < resid.cols(); ++j) {
    for (Eigen::Index i = 0; i < resid.rows(); ++i) {
      const double e = resid(i, j);
      for (std::size_t k = 0; k < K; ++k) {
        total += check_loss(e - b[static_cast<Eigen::Index>(k)], grid[k]);
      }
    }
  }
  return total / static_cast<double>(Y.rows() * Y.cols());
}

double objective(const Panel& panel, const FactorFit& fit,
                 const QuantileGrid& grid) {
  return objective(panel.values(), fit.factors, fit.loadings, fit.intercepts,
                   grid);
}

}  // namespace cqfm
