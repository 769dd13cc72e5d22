#include "cqfm/core.hpp"

#include <cmath>
#include <sstream>

namespace cqfm {

void require_finite(const MatrixXd& m, const char* what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) {
        std::ostringstream os;
        os << what << ": non-finite entry at (" << i << ", " << j << ")";
        throw ArgumentError(os.str());
      }
    }
  }
}

Panel::Panel(MatrixXd values, std::vector<std::string> time_labels,
             std::vector<std::string> var_names)
    : values_(std::move(values)),
      time_labels_(std::move(time_labels)),
      var_names_(std::move(var_names)) {
  if (values_.rows() < 2 || values_.cols() < 2) {
    throw ArgumentError("panel must have T >= 2 and N >= 2, got " +
                        std::to_string(values_.rows()) + "x" +
                        std::to_string(values_.cols()));
  }
  require_finite(values_, "panel");
  if (!time_labels_.empty() &&
      time_labels_.size() != static_cast<std::size_t>(values_.rows())) {
    throw ArgumentError("time label count does not match T");
  }
  if (!var_names_.empty() &&
      var_names_.size() != static_cast<std::size_t>(values_.cols())) {
    throw ArgumentError("variable name count does not match N");
  }
}

QuantileGrid::QuantileGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) throw ArgumentError("quantile grid must be non-empty");
  for (std::size_t k = 0; k < taus_.size(); ++k) {
    if (!(taus_[k] > 0.0 && taus_[k] < 1.0)) {
      throw ArgumentError("quantile positions must lie in (0, 1)");
    }
    if (k > 0 && !(taus_[k] > taus_[k - 1])) {
      throw ArgumentError("quantile positions must be strictly increasing");
    }
  }
}

QuantileGrid equally_spaced_grid(int K) {
  if (K < 1) throw ArgumentError("K must be >= 1");
  std::vector<double> taus(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    taus[static_cast<std::size_t>(k - 1)] =
        static_cast<double>(k) / static_cast<double>(K + 1);
  }
  return QuantileGrid(std::move(taus));
}

std::string to_string(Method m) {
  switch (m) {
    case Method::CQFM: return "CQFM";
    case Method::QFM: return "QFM";
    case Method::PCA: return "PCA";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "CQFM") return Method::CQFM;
  if (u == "QFM") return Method::QFM;
  if (u == "PCA") return Method::PCA;
  throw ArgumentError("unknown method '" + s + "' (expected cqfm, qfm or pca)");
}

void CqfmConfig::validate() const {
  if (!(mm_epsilon > 0) || !(inner_tol > 0) || !(outer_tol > 0)) {
    throw ArgumentError("tolerances must be positive");
  }
  if (max_outer_iters < 1 || max_inner_iters < 1) {
    throw ArgumentError("iteration limits must be >= 1");
  }
  if (workers < 1) throw ArgumentError("workers must be >= 1");
}

}  // namespace cqfm
