#include "cqfm/metrics.hpp"

#include <cmath>

namespace cqfm {

double common_component_mse(const MatrixXd& F0, const MatrixXd& L0,
                            const MatrixXd& Fhat, const MatrixXd& Lhat) {
  if (F0.rows() != Fhat.rows() || L0.rows() != Lhat.rows()) {
    throw ArgumentError("common_component_mse: row counts disagree");
  }
  if (F0.cols() != L0.cols() || Fhat.cols() != Lhat.cols()) {
    throw ArgumentError("common_component_mse: factor/loading ranks disagree");
  }
  require_finite(F0, "F0");
  require_finite(L0, "L0");
  require_finite(Fhat, "Fhat");
  require_finite(Lhat, "Lhat");
  const MatrixXd diff = F0 * L0.transpose() - Fhat * Lhat.transpose();
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

AdjustedR2 adjusted_r2_span(const MatrixXd& F0, const MatrixXd& Fhat) {
  const Eigen::Index T = F0.rows();
  if (Fhat.rows() != T) throw ArgumentError("adjusted_r2_span: row counts disagree");
  if (T <= Fhat.cols() + 1) {
    throw ArgumentError("adjusted_r2_span: need T > r + 1");
  }
  require_finite(F0, "F0");
  require_finite(Fhat, "Fhat");

  // Orthonormal basis of [1, Fhat] built left to right; a column whose
  // residual after projection is negligible is dropped as collinear.
  MatrixXd basis(T, Fhat.cols() + 1);
  basis.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(T)));
  Eigen::Index used = 1;
  int dropped = 0;
  for (Eigen::Index j = 0; j < Fhat.cols(); ++j) {
    VectorXd v = Fhat.col(j);
    const double scale = v.norm();
    // Two Gram-Schmidt passes for stability.
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(used) * (basis.leftCols(used).transpose() * v);
    }
    const double rem = v.norm();
    if (scale == 0.0 || rem <= 1e-10 * scale) {
      ++dropped;
      continue;
    }
    basis.col(used++) = v / rem;
  }
  const auto Q = basis.leftCols(used);
  const double p = static_cast<double>(used - 1);
  const double n = static_cast<double>(T);

  AdjustedR2 out;
  out.dropped_columns = dropped;
  out.values.resize(F0.cols());
  for (Eigen::Index j = 0; j < F0.cols(); ++j) {
    const VectorXd y = F0.col(j);
    const VectorXd centered = y.array() - y.mean();
    const double tss = centered.squaredNorm();
    const VectorXd resid = y - Q * (Q.transpose() * y);
    const double rss = resid.squaredNorm();
    if (tss == 0.0) throw DegeneracyError("adjusted_r2_span: constant true factor");
    const double r2 = 1.0 - rss / tss;
    out.values[j] = 1.0 - (1.0 - r2) * (n - 1.0) / (n - p - 1.0);
  }
  return out;
}

}  // namespace cqfm
