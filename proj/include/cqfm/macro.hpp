#pragma once

// FRED-QD style preparation (transformation codes, trimming, imputation,
// standardization) and rolling diffusion-index forecasts.

#include "cqfm/core.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cqfm {

struct RawSeriesTable {
  MatrixXd values;  // T x N, NaN = missing
  std::vector<int> tcodes;
  std::vector<std::string> names;
  std::vector<std::string> dates;

  void validate() const;
};

// First row: names (first cell is the date column header). An optional row
// whose first cell is "factors" is skipped. Next row: tcodes. Remaining rows:
// date, values.
RawSeriesTable read_fred_csv(std::istream& in);
RawSeriesTable read_fred_csv_file(const std::string& path);

// Leading observations lost to differencing under `code`.
int tcode_lag(int code);

// 1 level, 2 diff, 3 second diff, 4 log, 5 log diff, 6 second log diff,
// 7 diff of growth rate. NaN in, NaN out; the first tcode_lag(code) entries
// are NaN. `dates` (optional) only feeds error messages.
VectorXd apply_tcode(const VectorXd& series, int code,
                     const std::vector<std::string>& dates = {});

enum class ImputePolicy { DropRows, Mean, None };
ImputePolicy parse_impute_policy(const std::string& s);
std::string to_string(ImputePolicy p);

struct PrepManifest {
  long rows_in = 0;
  long leading_rows_trimmed = 0;
  long rows_dropped = 0;
  long rows_trimmed = 0;  // leading + dropped
  long rows_out = 0;
  long cells_imputed = 0;
  bool standardized = false;
  ImputePolicy impute = ImputePolicy::None;
};

struct PreparedPanel {
  Panel panel;
  PrepManifest manifest;
};

// Transforms every column, trims the leading rows lost to the largest
// differencing lag, resolves remaining gaps per `impute`, and optionally
// standardizes columns to mean 0, sd 1.
PreparedPanel prepare_panel(const RawSeriesTable& raw, bool standardize,
                            ImputePolicy impute);

struct ForecastSpec {
  int target_index = 0;
  int window = 120;
  int n_lags = 4;
  int n_factors = 6;  // 0 gives the pure AR(n_lags) benchmark
  Method factor_method = Method::CQFM;
  QuantileGrid grid = equally_spaced_grid(5);
  int horizon = 1;
  // First row to be forecast, by date (needs time labels) or by row index.
  // Defaults to the earliest row with a full window behind it.
  std::optional<std::string> first_target_date;
  std::optional<int> first_target_row;
  // Standardize each column inside the estimation window before extracting
  // factors.
  bool standardize_window = true;
  CqfmConfig config;  // seed is offset by the origin index
  int workers = 1;

  void validate(Eigen::Index T, Eigen::Index N) const;
};

struct ForecastPoint {
  Eigen::Index origin = 0;  // row index of the forecast origin t
  std::string origin_label;
  double forecast = 0.0;
  double realized = 0.0;  // y_{t+1}
  double error = 0.0;     // realized - forecast
  bool ridge = false;     // forecasting regression needed the 1e-8 ridge
};

struct ForecastResult {
  std::vector<ForecastPoint> points;
  double rmse = 0.0;
};

// Forecast of y_{t+1} made at origin row t using only rows t-window+1..t of
// `values`. Rows after t are never read.
ForecastPoint forecast_at_origin(const MatrixXd& values, const ForecastSpec& spec,
                                 Eigen::Index origin);

ForecastResult rolling_diffusion_forecast(const Panel& panel, const ForecastSpec& spec);

// origin_date,forecast,realized,error rows, then a summary row with the RMSE.
void write_forecast_csv(const ForecastResult& result, std::ostream& os);

}  // namespace cqfm
