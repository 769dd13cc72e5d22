#pragma once

// Shared fixtures for the test binaries.

#include "cqfm/core.hpp"
#include "cqfm/rng.hpp"

namespace cqfm::test {

inline MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Philox rng(seed, 77);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

// Y = F L' with standard normal F (T x r) and L (N x r).
struct LowRank {
  MatrixXd F;
  MatrixXd L;
  Panel panel;
};

inline LowRank noiseless_panel(int T, int N, int r, std::uint64_t seed) {
  MatrixXd F = normal_matrix(T, r, seed);
  MatrixXd L = normal_matrix(N, r, seed + 1000);
  Panel p(F * L.transpose());
  return {std::move(F), std::move(L), std::move(p)};
}

inline double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace cqfm::test
