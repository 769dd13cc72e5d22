#include "cqfm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cqfm {

namespace {

// Type-7 (linear interpolation) quantile of sorted data.
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

VectorXd density_at_quantiles(std::span<const double> residuals,
                              std::span<const double> points) {
  const std::size_t M = residuals.size();
  if (M == 0) throw ArgumentError("density estimate needs residuals");
  if (M < 10) throw ArgumentError("density estimate needs at least 10 residuals");
  double mean = 0.0;
  for (double e : residuals) mean += e;
  mean /= static_cast<double>(M);
  double ss = 0.0;
  for (double e : residuals) ss += (e - mean) * (e - mean);
  const double sd = std::sqrt(ss / static_cast<double>(M - 1));
  if (!(sd > 0.0)) throw ArgumentError("density estimate of constant residuals");

  std::vector<double> sorted(residuals.begin(), residuals.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double h = 1.06 * spread * std::pow(static_cast<double>(M), -0.2);

  const double norm = 1.0 / (static_cast<double>(M) * h * std::sqrt(2.0 * std::numbers::pi));
  VectorXd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) {
    // Kernel mass beyond 40 bandwidths is below double resolution.
    const double x = points[k];
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), x - 40.0 * h);
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), x + 40.0 * h);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double z = (x - *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out[static_cast<Eigen::Index>(k)] = std::max(acc * norm, 1e-300);
  }
  return out;
}

double composite_numerator(const QuantileGrid& grid) {
  double total = 0.0;
  for (double a : grid.taus()) {
    for (double b : grid.taus()) {
      total += std::min(a, b) * (1.0 - std::max(a, b));
    }
  }
  return total;
}

AsymptoticCovariances asymptotic_covariances(const FactorFit& fit,
                                             const Panel& panel,
                                             const QuantileGrid& grid,
                                             std::optional<VectorXd> densities) {
  const Eigen::Index r = fit.factors.cols();
  if (fit.factors.rows() != panel.T() || fit.loadings.rows() != panel.N() ||
      fit.loadings.cols() != r) {
    throw ArgumentError("asymptotic_covariances: fit does not match panel");
  }
  if (static_cast<std::size_t>(fit.intercepts.size()) != grid.size()) {
    throw ArgumentError("asymptotic_covariances: intercepts do not match grid");
  }
  const double T = static_cast<double>(panel.T());
  const double N = static_cast<double>(panel.N());
  const MatrixXd sigma_f = fit.factors.transpose() * fit.factors / T;
  if ((sigma_f - MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-6) {
    throw ArgumentError("asymptotic_covariances: fit is not normalized (F'F/T != I)");
  }
  const MatrixXd sigma_l = fit.loadings.transpose() * fit.loadings / N;

  AsymptoticCovariances out;
  if (densities) {
    if (static_cast<std::size_t>(densities->size()) != grid.size()) {
      throw ArgumentError("asymptotic_covariances: need one density per quantile");
    }
    out.density_at_quantiles = *densities;
  } else {
    const MatrixXd resid = panel.values() - fit.factors * fit.loadings.transpose();
    out.density_at_quantiles = density_at_quantiles(
        std::span<const double>(resid.data(), static_cast<std::size_t>(resid.size())),
        std::span<const double>(fit.intercepts.data(),
                                static_cast<std::size_t>(fit.intercepts.size())));
  }
  const double dsum = out.density_at_quantiles.sum();
  if (!(dsum > 0.0)) throw DegeneracyError("asymptotic_covariances: zero density");
  out.composite_numerator = composite_numerator(grid);
  const double ratio = out.composite_numerator / (dsum * dsum);

  Eigen::LLT<MatrixXd> llt(sigma_l);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("asymptotic_covariances: loading second moment is singular");
  }
  const MatrixXd I = MatrixXd::Identity(r, r);
  out.cov_factor = ratio * llt.solve(I);
  out.cov_factor = 0.5 * (out.cov_factor + out.cov_factor.transpose()).eval();
  out.cov_loading = ratio * sigma_f.llt().solve(I);
  out.cov_loading = 0.5 * (out.cov_loading + out.cov_loading.transpose()).eval();
  return out;
}

double are_vs_pca(const QuantileGrid& grid, std::span<const double> densities,
                  double sigma2_eps) {
  if (!(sigma2_eps > 0.0) || !std::isfinite(sigma2_eps)) {
    throw ArgumentError("are_vs_pca: error variance must be finite and positive");
  }
  if (densities.size() != grid.size()) {
    throw ArgumentError("are_vs_pca: need one density per quantile");
  }
  double dsum = 0.0;
  for (double f : densities) dsum += f;
  return sigma2_eps * dsum * dsum / composite_numerator(grid);
}

double pooled_residual_variance(const FactorFit& fit, const Panel& panel) {
  const MatrixXd resid = panel.values() - fit.factors * fit.loadings.transpose();
  const double mean = resid.mean();
  return (resid.array() - mean).square().sum() / static_cast<double>(resid.size() - 1);
}

}  // namespace cqfm
