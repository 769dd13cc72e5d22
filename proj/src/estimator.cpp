#include "cqfm/estimator.hpp"

#include "cqfm/loss.hpp"
#include "cqfm/parallel.hpp"
#include "cqfm/quantile_mm.hpp"
#include "cqfm/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace cqfm {

namespace {

// Index of the first column of F that is (numerically) a linear combination
// of the columns before it, or -1.
Eigen::Index first_dependent_column(const MatrixXd& F) {
  MatrixXd basis(F.rows(), F.cols());
  Eigen::Index used = 0;
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    VectorXd v = F.col(j);
    const double scale = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(used) * (basis.leftCols(used).transpose() * v);
    }
    if (scale == 0.0 || v.norm() <= 1e-10 * scale) return j;
    basis.col(used++) = v.normalized();
  }
  return -1;
}

// Factor columns that carry no direction of their own (typical when r exceeds
// the rank of the data) are replaced. The collapsed column's loadings move
// onto the columns it depends on, so F L' is unchanged, and the new column is
// a fresh random direction with zero loadings.
int redraw_collapsed(MatrixXd& F, MatrixXd& L, Philox& rng) {
  const Eigen::Index T = F.rows();
  const Eigen::Index r = F.cols();
  int redrawn = 0;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double scale = F.col(j).norm();
    VectorXd v = F.col(j);
    Eigen::HouseholderQR<MatrixXd> qr;
    VectorXd c;
    if (j > 0) {
      qr.compute(F.leftCols(j));
      c = qr.solve(v);
      v -= F.leftCols(j) * c;
    }
    if (scale > 0.0 && v.norm() > 1e-6 * scale) continue;
    if (j > 0) L.leftCols(j) += L.col(j) * c.transpose();
    VectorXd fresh(T);
    for (Eigen::Index t = 0; t < T; ++t) fresh[t] = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < r; ++k) {
        if (k == j) continue;
        const double nk = F.col(k).squaredNorm();
        if (nk > 0.0) fresh -= F.col(k) * (F.col(k).dot(fresh) / nk);
      }
    }
    F.col(j) = fresh * (std::sqrt(static_cast<double>(T)) / fresh.norm());
    L.col(j).setZero();
    ++redrawn;
  }
  return redrawn;
}

void check_rank(const Panel& panel, int r) {
  const auto limit = std::min(panel.T(), panel.N());
  if (r < 1 || r >= limit) {
    throw ArgumentError("rank must satisfy 1 <= r < min(T, N) = " +
                        std::to_string(limit) + ", got " + std::to_string(r));
  }
}

// Stacks K copies of `base` (one per quantile) with matching tau and offset.
void stack_design(const MatrixXd& base, const QuantileGrid& grid,
                  const VectorXd& b, StackedQrProblem& out) {
  const Eigen::Index n = base.rows();
  const auto K = static_cast<Eigen::Index>(grid.size());
  out.design.resize(n * K, base.cols());
  out.tau_of_row.resize(n * K);
  out.offset_of_row.resize(n * K);
  out.response.resize(n * K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.design.middleRows(k * n, n) = base;
    out.tau_of_row.segment(k * n, n).setConstant(grid[static_cast<std::size_t>(k)]);
    out.offset_of_row.segment(k * n, n).setConstant(b[k]);
  }
}

void set_response(const VectorXd& y, Eigen::Index K, StackedQrProblem& out) {
  const Eigen::Index n = y.size();
  for (Eigen::Index k = 0; k < K; ++k) out.response.segment(k * n, n) = y;
}

// Solves one stacked subproblem per column j of `responses` (Y' for the
// factor step, Y for the loading step) and writes the solution to row j of
// `coef`, which also holds the warm start.
int update_block(const MatrixXd& responses, const MatrixXd& design,
                 const QuantileGrid& grid, const VectorXd& b,
                 const CqfmConfig& config, MatrixXd& coef) {
  const auto K = static_cast<Eigen::Index>(grid.size());
  const auto count = static_cast<std::size_t>(responses.cols());
  std::atomic<int> degenerate{0};
  const int workers = std::max(1, config.workers);
  // One scratch problem per worker chunk; the design part is shared content.
  StackedQrProblem shared;
  stack_design(design, grid, b, shared);
  const std::size_t chunks = std::min<std::size_t>(count, static_cast<std::size_t>(workers));
  std::vector<StackedQrProblem> scratch(std::max<std::size_t>(chunks, 1), shared);
  const std::size_t per_chunk = (count + scratch.size() - 1) / scratch.size();
  MmOptions opts;
  opts.validate = false;
  parallel_for(scratch.size(), workers, [&](std::size_t c) {
    StackedQrProblem& problem = scratch[c];
    const std::size_t lo = c * per_chunk;
    const std::size_t hi = std::min(count, lo + per_chunk);
    for (std::size_t j = lo; j < hi; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      set_response(responses.col(col), K, problem);
      const VectorXd start = coef.row(col).transpose();
      MmResult res = mm_quantile_solve(problem, start, config, opts);
      if (res.degenerate) degenerate.fetch_add(1, std::memory_order_relaxed);
      coef.row(col) = res.beta.transpose();
    }
  });
  return degenerate.load();
}

void update_intercepts(const MatrixXd& Y, const MatrixXd& F, const MatrixXd& L,
                       const QuantileGrid& grid, VectorXd& b) {
  const MatrixXd resid = Y - F * L.transpose();
  const std::span<const double> e(resid.data(), static_cast<std::size_t>(resid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    b[static_cast<Eigen::Index>(k)] = sample_quantile_minimizer(e, grid[k]);
  }
}

void require_variation(const Panel& panel) {
  const MatrixXd& Y = panel.values();
  if ((Y.array() == Y(0, 0)).all()) {
    throw DegeneracyError("panel is constant; factors and loadings are not identified");
  }
}

MatrixXd random_start(Eigen::Index T, int r, std::uint64_t seed) {
  Philox rng(seed, 0x1417);
  MatrixXd F(T, r);
  // Column-major fill so the draw order does not depend on storage order.
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index t = 0; t < T; ++t) F(t, j) = rng.normal();
  }
  return F;
}

FactorFit fit_composite(const Panel& panel, int r, const QuantileGrid& grid,
                        const CqfmConfig& config, Method tag) {
  config.validate();
  check_rank(panel, r);
  require_variation(panel);
  const MatrixXd& Y = panel.values();
  const Eigen::Index T = panel.T();
  const Eigen::Index N = panel.N();
  const auto K = static_cast<Eigen::Index>(grid.size());

  FactorFit fit;
  fit.rank = r;
  fit.method = tag;
  MatrixXd F = config.init == InitKind::Pca ? fit_pca(panel, r).factors
                                            : random_start(T, r, config.seed);
  VectorXd b = VectorXd::Zero(K);

  // Step 1: loadings from the starting factors (least-squares start, then
  // the composite quantile solve with zero intercepts), then intercepts.
  MatrixXd L(N, r);
  {
    const MatrixXd ls = F.colPivHouseholderQr().solve(Y);  // r x N
    L = ls.transpose();
    fit.degenerate_solves += update_block(Y, F, grid, b, config, L);
    update_intercepts(Y, F, L, grid, b);
  }
  Philox redraw_rng(config.seed, 0x7ed);
  {
    fit.redrawn_factors += redraw_collapsed(F, L, redraw_rng);
    auto norm = normalize_solution(F, L);
    F = std::move(norm.fit.factors);
    L = std::move(norm.fit.loadings);
  }
  double previous = objective(Y, F, L, b, grid);
  const MatrixXd Yt = Y.transpose();

  for (int s = 1; s <= config.max_outer_iters; ++s) {
    fit.iterations = s;
    // Step 2: factors given loadings and intercepts. Subproblem t uses row t.
    fit.degenerate_solves += update_block(Yt, L, grid, b, config, F);
    // Step 3: loadings given the new factors.
    fit.degenerate_solves += update_block(Y, F, grid, b, config, L);
    // Step 4: intercepts.
    update_intercepts(Y, F, L, grid, b);
    // Keep the pair on the identified scale between cycles; F L' is unchanged.
    fit.redrawn_factors += redraw_collapsed(F, L, redraw_rng);
    auto norm = normalize_solution(F, L);
    F = std::move(norm.fit.factors);
    L = std::move(norm.fit.loadings);

    const double current = objective(Y, F, L, b, grid);
    fit.loss_trace.push_back(current);
    const double change = std::abs(previous - current) /
                          std::max(std::abs(previous), 1e-300);
    previous = current;
    if (change < config.outer_tol) {
      fit.converged = true;
      break;
    }
  }
  fit.factors = std::move(F);
  fit.loadings = std::move(L);
  fit.intercepts = std::move(b);
  return fit;
}

}  // namespace

NormalizationResult normalize_solution(const MatrixXd& F, const MatrixXd& L) {
  if (F.cols() != L.cols() || F.cols() < 1) {
    throw ArgumentError("normalize_solution: F and L must share r >= 1 columns");
  }
  const Eigen::Index r = F.cols();
  const double T = static_cast<double>(F.rows());
  const double N = static_cast<double>(L.rows());
  const Eigen::Index bad = first_dependent_column(F);
  if (bad >= 0) {
    throw DegeneracyError("normalize_solution: F'F is singular; factor column " +
                          std::to_string(bad) +
                          " is linearly dependent on earlier columns");
  }

  const MatrixXd S = F.transpose() * F / T;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig_s(S);
  const VectorXd d = eig_s.eigenvalues();
  if (d.minCoeff() <= 0.0) {
    throw DegeneracyError("normalize_solution: F'F/T is not positive definite");
  }
  const MatrixXd& U = eig_s.eigenvectors();
  const MatrixXd inv_sqrt = U * d.cwiseSqrt().cwiseInverse().asDiagonal() * U.transpose();
  const MatrixXd sqrt_s = U * d.cwiseSqrt().asDiagonal() * U.transpose();

  const MatrixXd L1 = L * sqrt_s;
  const MatrixXd M = L1.transpose() * L1 / N;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig_m(M);
  const VectorXd lam = eig_m.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index c) { return lam[a] > lam[c]; });
  MatrixXd V(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    V.col(j) = eig_m.eigenvectors().col(order[static_cast<std::size_t>(j)]);
  }

  MatrixXd rotation = inv_sqrt * V;
  MatrixXd Lstar = L1 * V;
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < Lstar.rows(); ++i) {
      const double a = std::abs(Lstar(i, j));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (Lstar.rows() > 0 && Lstar(arg, j) < 0.0) {
      Lstar.col(j) *= -1.0;
      rotation.col(j) *= -1.0;
    }
  }

  NormalizationResult out;
  out.fit.rank = static_cast<int>(r);
  out.fit.factors = F * rotation;
  out.fit.loadings = std::move(Lstar);
  out.rotation = std::move(rotation);
  return out;
}

FactorFit fit_cqfm(const Panel& panel, int r, const QuantileGrid& grid,
                   const CqfmConfig& config) {
  return fit_composite(panel, r, grid, config,
                       grid.size() == 1 ? Method::QFM : Method::CQFM);
}

FactorFit fit_qfm(const Panel& panel, int r, double tau, const CqfmConfig& config) {
  return fit_composite(panel, r, QuantileGrid({tau}), config, Method::QFM);
}

FactorFit fit_pca(const Panel& panel, int r, int n_intercepts) {
  check_rank(panel, r);
  require_variation(panel);
  if (n_intercepts < 1) throw ArgumentError("n_intercepts must be >= 1");
  const MatrixXd& Y = panel.values();
  const double T = static_cast<double>(panel.T());
  MatrixXd F;
  bool small_side_ok = false;
  if (panel.T() > panel.N()) {
    // Work with the N x N Gram matrix and map back through Y.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Y.transpose() * Y);
    const MatrixXd V = eig.eigenvectors().rightCols(r).rowwise().reverse();
    const VectorXd ev = eig.eigenvalues().tail(r).reverse();
    if (ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300)) {
      F = Y * V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * std::sqrt(T);
      small_side_ok = true;
    }
  }
  if (!small_side_ok) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Y * Y.transpose());
    // Eigen sorts ascending; the top r are the last r columns.
    F = eig.eigenvectors().rightCols(r).rowwise().reverse() * std::sqrt(T);
  }
  const MatrixXd L = Y.transpose() * F / T;
  auto norm = normalize_solution(F, L);
  FactorFit fit = std::move(norm.fit);
  fit.intercepts = VectorXd::Zero(n_intercepts);
  fit.rank = r;
  fit.method = Method::PCA;
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

FactorFit fit_factors(const Panel& panel, int r, Method method,
                      const QuantileGrid& grid, const CqfmConfig& config) {
  switch (method) {
    case Method::PCA:
      return fit_pca(panel, r, static_cast<int>(grid.size()));
    case Method::QFM:
      return fit_qfm(panel, r, grid.size() == 1 ? grid[0] : 0.5, config);
    case Method::CQFM:
      break;
  }
  FactorFit fit = fit_cqfm(panel, r, grid, config);
  fit.method = Method::CQFM;
  return fit;
}

MatrixXd align_to_truth(const MatrixXd& Fhat, const MatrixXd& F0) {
  if (Fhat.rows() != F0.rows() || Fhat.cols() != F0.cols()) {
    throw ArgumentError("align_to_truth: dimensions differ");
  }
  if (first_dependent_column(Fhat) >= 0) {
    throw DegeneracyError("align_to_truth: Fhat'Fhat is singular");
  }
  return (Fhat.transpose() * Fhat).ldlt().solve(Fhat.transpose() * F0);
}

}  // namespace cqfm
