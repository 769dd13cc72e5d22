#include "cqfm/macro.hpp"

#include "cqfm/estimator.hpp"
#include "cqfm/io.hpp"
#include "cqfm/parallel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cqfm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

VectorXd diff(const VectorXd& x) {
  VectorXd out = VectorXd::Constant(x.size(), kNaN);
  for (Eigen::Index t = 1; t < x.size(); ++t) out[t] = x[t] - x[t - 1];
  return out;
}

}  // namespace

void RawSeriesTable::validate() const {
  const auto N = static_cast<std::size_t>(values.cols());
  if (tcodes.size() != N) throw ArgumentError("need one tcode per column");
  for (int c : tcodes) {
    if (c < 1 || c > 7) throw ArgumentError("tcode " + std::to_string(c) + " outside 1..7");
  }
  if (!names.empty() && names.size() != N) throw ArgumentError("need one name per column");
  if (!dates.empty()) {
    if (dates.size() != static_cast<std::size_t>(values.rows())) {
      throw ArgumentError("need one date per row");
    }
    for (std::size_t t = 1; t < dates.size(); ++t) {
      if (!(date_key(dates[t]) > date_key(dates[t - 1]))) {
        throw ArgumentError("dates must be strictly increasing (row " +
                            std::to_string(t + 1) + ": " + dates[t] + ")");
      }
    }
  }
}

RawSeriesTable read_fred_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.size() < 3) throw ArgumentError("FRED CSV needs a name row, a tcode row and data");
  const std::size_t width = rows[0].size();
  if (width < 2) throw ArgumentError("FRED CSV needs at least one series column");

  RawSeriesTable raw;
  for (std::size_t c = 1; c < width; ++c) raw.names.push_back(trim(rows[0][c]));
  std::size_t r = 1;
  if (trim(rows[r][0]) == "factors") ++r;
  if (r >= rows.size()) throw ArgumentError("FRED CSV is missing the tcode row");
  for (std::size_t c = 1; c < width; ++c) {
    const auto v = c < rows[r].size() ? parse_number(rows[r][c]) : std::nullopt;
    if (!v || *v != std::floor(*v)) {
      throw ArgumentError("tcode row: column " + std::to_string(c + 1) + " is not an integer code");
    }
    raw.tcodes.push_back(static_cast<int>(*v));
  }
  ++r;
  const std::size_t T = rows.size() - r;
  raw.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(width - 1));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& row = rows[r + t];
    raw.dates.push_back(trim(row[0]));
    for (std::size_t c = 1; c < width; ++c) {
      const std::string cell = c < row.size() ? row[c] : std::string();
      const auto v = parse_number(cell);
      if (!v && !trim(cell).empty()) {
        throw ArgumentError("FRED CSV: cell '" + cell + "' on " + raw.dates.back() +
                            " is not a number");
      }
      raw.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c - 1)) = v ? *v : kNaN;
    }
  }
  raw.validate();
  return raw;
}

RawSeriesTable read_fred_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open input file '" + path + "'");
  return read_fred_csv(in);
}

int tcode_lag(int code) {
  switch (code) {
    case 1: case 4: return 0;
    case 2: case 5: return 1;
    case 3: case 6: case 7: return 2;
    default: throw ArgumentError("tcode " + std::to_string(code) + " outside 1..7");
  }
}

VectorXd apply_tcode(const VectorXd& x, int code, const std::vector<std::string>& dates) {
  tcode_lag(code);
  if (code >= 4) {
    std::vector<std::string> bad;
    for (Eigen::Index t = 0; t < x.size(); ++t) {
      if (std::isfinite(x[t]) && x[t] <= 0.0) {
        bad.push_back(static_cast<std::size_t>(t) < dates.size() ? dates[static_cast<std::size_t>(t)]
                                                                : "row " + std::to_string(t + 1));
      }
    }
    if (!bad.empty()) {
      std::string msg = "tcode " + std::to_string(code) + " needs positive values; offending: ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : "") + bad[i];
      throw ArgumentError(msg);
    }
  }
  switch (code) {
    case 1: return x;
    case 2: return diff(x);
    case 3: return diff(diff(x));
    case 4: return x.array().log().matrix();
    case 5: return diff(x.array().log().matrix());
    case 6: return diff(diff(x.array().log().matrix()));
    case 7: {
      VectorXd growth = VectorXd::Constant(x.size(), kNaN);
      for (Eigen::Index t = 1; t < x.size(); ++t) growth[t] = x[t] / x[t - 1] - 1.0;
      return diff(growth);
    }
    default: break;
  }
  return x;
}

ImputePolicy parse_impute_policy(const std::string& s) {
  if (s == "drop-rows") return ImputePolicy::DropRows;
  if (s == "mean") return ImputePolicy::Mean;
  if (s == "none") return ImputePolicy::None;
  throw ArgumentError("unknown impute policy '" + s + "' (expected drop-rows, mean or none)");
}

std::string to_string(ImputePolicy p) {
  switch (p) {
    case ImputePolicy::DropRows: return "drop-rows";
    case ImputePolicy::Mean: return "mean";
    case ImputePolicy::None: return "none";
  }
  return "?";
}

namespace {

// Centre and scale to unit sample sd. Columns that are constant up to rounding
// are left at zero.
void standardize_column(Eigen::Ref<VectorXd> col, double n) {
  const double scale = col.cwiseAbs().maxCoeff();
  col.array() -= col.mean();
  const double sd = std::sqrt(col.squaredNorm() / (n - 1.0));
  if (sd > 1e-12 * scale) col /= sd;
  else col.setZero();
}

}  // namespace

PreparedPanel prepare_panel(const RawSeriesTable& raw, bool standardize,
                            ImputePolicy impute) {
  raw.validate();
  const Eigen::Index T = raw.values.rows();
  const Eigen::Index N = raw.values.cols();
  MatrixXd X(T, N);
  int lead = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    const int code = raw.tcodes[static_cast<std::size_t>(j)];
    X.col(j) = apply_tcode(raw.values.col(j), code, raw.dates);
    lead = std::max(lead, tcode_lag(code));
  }
  if (lead >= T) throw ArgumentError("series too short for their transformation codes");

  PrepManifest man;
  man.rows_in = T;
  man.leading_rows_trimmed = lead;
  man.impute = impute;
  man.standardized = standardize;
  MatrixXd Y = X.bottomRows(T - lead);
  std::vector<std::string> dates;
  if (!raw.dates.empty()) dates.assign(raw.dates.begin() + lead, raw.dates.end());

  int complete = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    if (Y.col(j).allFinite()) ++complete;
  }
  if (complete < 2) {
    throw ArgumentError("need at least 2 complete columns after transformation, found " +
                        std::to_string(complete));
  }

  switch (impute) {
    case ImputePolicy::None: {
      std::string cells;
      int count = 0;
      for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        for (Eigen::Index j = 0; j < N; ++j) {
          if (!std::isfinite(Y(i, j))) {
            if (count < 20) {
              cells += (count ? ", " : "") +
                       (dates.empty() ? "row " + std::to_string(i + 1) : dates[static_cast<std::size_t>(i)]) +
                       "/" + (raw.names.empty() ? "col " + std::to_string(j + 1) : raw.names[static_cast<std::size_t>(j)]);
            }
            ++count;
          }
        }
      }
      if (count > 0) {
        throw ArgumentError(std::to_string(count) + " missing cells remain with impute=none: " +
                            cells + (count > 20 ? ", ..." : ""));
      }
      break;
    }
    case ImputePolicy::Mean:
      for (Eigen::Index j = 0; j < N; ++j) {
        double sum = 0.0;
        long n = 0;
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
          if (std::isfinite(Y(i, j))) {
            sum += Y(i, j);
            ++n;
          }
        }
        if (n == 0) throw ArgumentError("column " + std::to_string(j + 1) + " has no observations");
        const double mean = sum / static_cast<double>(n);
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
          if (!std::isfinite(Y(i, j))) {
            Y(i, j) = mean;
            ++man.cells_imputed;
          }
        }
      }
      break;
    case ImputePolicy::DropRows: {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < Y.rows(); ++i) {
        if (Y.row(i).allFinite()) keep.push_back(i);
      }
      man.rows_dropped = Y.rows() - static_cast<long>(keep.size());
      MatrixXd kept(static_cast<Eigen::Index>(keep.size()), N);
      std::vector<std::string> kept_dates;
      for (std::size_t k = 0; k < keep.size(); ++k) {
        kept.row(static_cast<Eigen::Index>(k)) = Y.row(keep[k]);
        if (!dates.empty()) kept_dates.push_back(dates[static_cast<std::size_t>(keep[k])]);
      }
      Y = std::move(kept);
      dates = std::move(kept_dates);
      break;
    }
  }

  if (standardize) {
    const double n = static_cast<double>(Y.rows());
    for (Eigen::Index j = 0; j < N; ++j) {
      standardize_column(Y.col(j), n);
    }
  }
  man.rows_trimmed = man.leading_rows_trimmed + man.rows_dropped;
  man.rows_out = Y.rows();
  return PreparedPanel{Panel(std::move(Y), std::move(dates), raw.names), man};
}

void ForecastSpec::validate(Eigen::Index T, Eigen::Index N) const {
  if (target_index < 0 || target_index >= N) {
    throw ArgumentError("target index " + std::to_string(target_index) + " out of range");
  }
  if (n_lags < 1) throw ArgumentError("n_lags must be >= 1");
  if (n_factors < 0) throw ArgumentError("n_factors must be >= 0");
  if (horizon != 1) throw ArgumentError("only one-step-ahead forecasts are supported");
  if (window + n_lags + 1 > T) {
    throw ArgumentError("window + n_lags + 1 must not exceed T");
  }
  if (n_factors > 0 && n_factors >= std::min<Eigen::Index>(window, N)) {
    throw ArgumentError("n_factors must be < min(window, N)");
  }
  // Regressors: intercept, lags and factors, fitted on window - n_lags rows.
  if (1 + n_lags + n_factors >= window - n_lags) {
    throw ArgumentError("window too short for the forecasting regression");
  }
  config.validate();
}

ForecastPoint forecast_at_origin(const MatrixXd& values, const ForecastSpec& spec,
                                 Eigen::Index origin) {
  const Eigen::Index start = origin - spec.window + 1;
  if (start < 0 || origin >= values.rows()) {
    throw ArgumentError("origin " + std::to_string(origin) + " lacks a full window");
  }
  MatrixXd W = values.middleRows(start, spec.window);
  require_finite(W, "forecast window");
  const VectorXd y = W.col(spec.target_index);

  MatrixXd factors(spec.window, 0);
  if (spec.n_factors > 0) {
    if (spec.standardize_window) {
      const double n = static_cast<double>(W.rows());
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        standardize_column(W.col(j), n);
      }
    }
    CqfmConfig config = spec.config;
    config.seed = spec.config.seed + static_cast<std::uint64_t>(origin);
    factors = fit_factors(Panel(std::move(W)), spec.n_factors, spec.factor_method,
                          spec.grid, config)
                  .factors;
  }

  // Rows s = n_lags-1 .. window-2 of the window predict y_{s+1}.
  const int p = 1 + spec.n_lags + spec.n_factors;
  const Eigen::Index nobs = spec.window - spec.n_lags;
  auto regressors = [&](Eigen::Index s) {
    VectorXd x(p);
    x[0] = 1.0;
    for (int l = 0; l < spec.n_lags; ++l) x[1 + l] = y[s - l];
    for (int f = 0; f < spec.n_factors; ++f) x[1 + spec.n_lags + f] = factors(s, f);
    return x;
  };
  MatrixXd X(nobs, p);
  VectorXd z(nobs);
  for (Eigen::Index k = 0; k < nobs; ++k) {
    const Eigen::Index s = spec.n_lags - 1 + k;
    X.row(k) = regressors(s).transpose();
    z[k] = y[s + 1];
  }

  ForecastPoint point;
  point.origin = origin;
  VectorXd beta;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
  if (qr.rank() < p) {
    point.ridge = true;
    MatrixXd A = X.transpose() * X;
    A.diagonal().array() += 1e-8;
    beta = A.ldlt().solve(X.transpose() * z);
  } else {
    beta = qr.solve(z);
  }
  point.forecast = regressors(spec.window - 1).dot(beta);
  return point;
}

ForecastResult rolling_diffusion_forecast(const Panel& panel, const ForecastSpec& spec) {
  spec.validate(panel.T(), panel.N());
  const Eigen::Index T = panel.T();
  Eigen::Index first_target = spec.window;
  if (spec.first_target_row) first_target = std::max<Eigen::Index>(first_target, *spec.first_target_row);
  if (spec.first_target_date) {
    if (panel.time_labels().empty()) {
      throw ArgumentError("a first forecast date needs a panel with time labels");
    }
    const long key = date_key(*spec.first_target_date);
    Eigen::Index row = T;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (date_key(panel.time_labels()[static_cast<std::size_t>(t)]) >= key) {
        row = t;
        break;
      }
    }
    first_target = std::max(first_target, row);
  }
  if (first_target >= T) throw ArgumentError("no forecast origins: first target is past the data");

  const auto count = static_cast<std::size_t>(T - first_target);
  ForecastResult result;
  result.points.resize(count);
  parallel_for(count, spec.workers, [&](std::size_t k) {
    const Eigen::Index origin = first_target - 1 + static_cast<Eigen::Index>(k);
    ForecastPoint pt = forecast_at_origin(panel.values(), spec, origin);
    pt.realized = panel.values()(origin + 1, spec.target_index);
    pt.error = pt.realized - pt.forecast;
    if (!panel.time_labels().empty()) {
      pt.origin_label = panel.time_labels()[static_cast<std::size_t>(origin)];
    } else {
      pt.origin_label = std::to_string(origin);
    }
    result.points[k] = std::move(pt);
  });
  double ss = 0.0;
  for (const auto& pt : result.points) ss += pt.error * pt.error;
  result.rmse = std::sqrt(ss / static_cast<double>(count));
  return result;
}

void write_forecast_csv(const ForecastResult& result, std::ostream& os) {
  os << "origin_date,forecast,realized,error\n";
  for (const auto& pt : result.points) {
    os << pt.origin_label << ',' << format_number(pt.forecast) << ','
       << format_number(pt.realized) << ',' << format_number(pt.error) << '\n';
  }
  os << "RMSE," << format_number(result.rmse) << ",,\n";
}

}  // namespace cqfm
