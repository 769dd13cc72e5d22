#pragma once

// Core data types shared by every module: panels, quantile grids, fitted
// factor models and the estimator controls.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cqfm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Bad caller input. The CLI maps this to exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerically degenerate input (singular systems, collapsed factors).
// The CLI maps this to exit code 3.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// T x N panel: rows are time periods, columns are cross-section units.
class Panel {
 public:
  explicit Panel(MatrixXd values, std::vector<std::string> time_labels = {},
                 std::vector<std::string> var_names = {});

  const MatrixXd& values() const { return values_; }
  const std::vector<std::string>& time_labels() const { return time_labels_; }
  const std::vector<std::string>& var_names() const { return var_names_; }
  Eigen::Index T() const { return values_.rows(); }
  Eigen::Index N() const { return values_.cols(); }

 private:
  MatrixXd values_;
  std::vector<std::string> time_labels_;
  std::vector<std::string> var_names_;
};

// Strictly increasing quantile positions inside (0, 1).
class QuantileGrid {
 public:
  explicit QuantileGrid(std::vector<double> taus);

  const std::vector<double>& taus() const { return taus_; }
  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t k) const { return taus_[k]; }

  bool operator==(const QuantileGrid&) const = default;

 private:
  std::vector<double> taus_;
};

// tau_k = k / (K + 1), k = 1..K.
QuantileGrid equally_spaced_grid(int K);

enum class Method { CQFM, QFM, PCA };
enum class InitKind { SeededRandom, Pca };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct FactorFit {
  MatrixXd factors;   // T x r
  MatrixXd loadings;  // N x r
  VectorXd intercepts;  // K
  int rank = 0;
  std::vector<double> loss_trace;
  bool converged = false;
  int iterations = 0;
  Method method = Method::CQFM;
  // Count of inner solves that needed the ridge fallback.
  int degenerate_solves = 0;
  // Factor columns re-drawn after collapsing onto the others.
  int redrawn_factors = 0;
};

struct CqfmConfig {
  double mm_epsilon = 1e-6;
  double inner_tol = 1e-3;
  double outer_tol = 1e-6;
  int max_outer_iters = 1000;
  int max_inner_iters = 200;
  InitKind init = InitKind::SeededRandom;
  std::uint64_t seed = 1;
  // Worker threads for the per-t and per-i subproblems. 1 = bit-reproducible
  // single-worker mode.
  int workers = 1;

  void validate() const;
};

// Throws ArgumentError when any entry is NaN or infinite.
void require_finite(const MatrixXd& m, const char* what);

}  // namespace cqfm
