#include "cqfm/io.hpp"
#include "cqfm/macro.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace cqfm;
using cqfm::test::normal_matrix;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Quarterly labels in M/D/YYYY form starting at `year` Q`quarter`.
std::vector<std::string> quarterly_dates(int year, int quarter, int n) {
  std::vector<std::string> out;
  for (int k = 0; k < n; ++k) {
    const int q = (quarter - 1 + k) % 4;
    const int y = year + (quarter - 1 + k) / 4;
    out.push_back(std::to_string(3 * q + 1) + "/1/" + std::to_string(y));
  }
  return out;
}

// Column 0 is the target y with y_{t+1} = F_{t,1} + small noise; the other
// columns load on the same AR(1) factors.
Panel factor_driven_panel(int T, int N, std::uint64_t seed, std::vector<std::string> dates = {}) {
  Philox rng(seed);
  MatrixXd F(T, 2);
  double f1 = 0.0;
  double f2 = 0.0;
  for (int t = 0; t < T; ++t) {
    f1 = 0.5 * f1 + rng.normal();
    f2 = 0.3 * f2 + rng.normal();
    F(t, 0) = f1;
    F(t, 1) = f2;
  }
  const MatrixXd L = normal_matrix(N, 2, seed + 1);
  MatrixXd Y = F * L.transpose() + 0.3 * normal_matrix(T, N, seed + 2);
  Y(0, 0) = 0.0;
  for (int t = 1; t < T; ++t) Y(t, 0) = F(t - 1, 0) + 0.1 * rng.normal();
  return Panel(std::move(Y), std::move(dates));
}

}  // namespace

TEST_CASE("transformation code examples") {
  CHECK(apply_tcode(vec({3, 5, 9}), 1) == vec({3, 5, 9}));
  const VectorXd d = apply_tcode(vec({3, 5, 9}), 2);
  CHECK(std::isnan(d[0]));
  CHECK(d.tail(2) == vec({2, 4}));
  const VectorXd g = apply_tcode(vec({100, 110}), 5);
  CHECK(std::isnan(g[0]));
  CHECK(g[1] == doctest::Approx(0.09531).epsilon(1e-4));
  CHECK(g[1] == doctest::Approx(std::log(1.1)).epsilon(1e-15));

  const VectorXd d2 = apply_tcode(vec({1, 4, 9, 16}), 3);
  CHECK((std::isnan(d2[0]) && std::isnan(d2[1])));
  CHECK(d2.tail(2) == vec({2, 2}));
  const VectorXd l = apply_tcode(vec({1, std::exp(1.0)}), 4);
  CHECK(l[1] == doctest::Approx(1.0));
  const VectorXd l2 = apply_tcode(vec({1, 2, 8}), 6);
  CHECK(l2[2] == doctest::Approx(std::log(4.0) - std::log(2.0)));
  // Growth rates 1.0 then 0.5.
  const VectorXd gr = apply_tcode(vec({1, 2, 3}), 7);
  CHECK((std::isnan(gr[0]) && std::isnan(gr[1])));
  CHECK(gr[2] == doctest::Approx(-0.5));
  // Missing values propagate.
  const VectorXd m = apply_tcode(vec({1, kNaN, 3, 4}), 2);
  CHECK((std::isnan(m[1]) && std::isnan(m[2])));
  CHECK(m[3] == 1.0);
  CHECK_THROWS_AS(apply_tcode(vec({1, 2}), 0), ArgumentError);
  CHECK_THROWS_AS(apply_tcode(vec({1, 2}), 8), ArgumentError);
}

TEST_CASE("log codes reject nonpositive values and list the dates") {
  try {
    apply_tcode(vec({1, 0, 2, -1}), 5, {"2000-01-01", "2000-04-01", "2000-07-01", "2000-10-01"});
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2000-04-01") != std::string::npos);
    CHECK(msg.find("2000-10-01") != std::string::npos);
    CHECK(msg.find("2000-01-01") == std::string::npos);
  }
  CHECK_NOTHROW(apply_tcode(vec({1, 0, -2}), 2));
}

TEST_CASE("differences and logs invert back to levels") {
  Philox rng(3);
  VectorXd x(60);
  double level = 50.0;
  for (Eigen::Index t = 0; t < 60; ++t) {
    level *= std::exp(0.02 * rng.normal());
    x[t] = level;
  }
  const VectorXd d = apply_tcode(x, 2);
  VectorXd back(60);
  back[0] = x[0];
  for (Eigen::Index t = 1; t < 60; ++t) back[t] = back[t - 1] + d[t];
  CHECK(cqfm::test::max_abs(back - x) < 1e-10);

  CHECK(cqfm::test::max_abs(apply_tcode(x, 4).array().exp().matrix() - x) < 1e-10);

  const VectorXd g = apply_tcode(x, 5);
  back[0] = x[0];
  for (Eigen::Index t = 1; t < 60; ++t) back[t] = back[t - 1] * std::exp(g[t]);
  CHECK(cqfm::test::max_abs((back - x).cwiseQuotient(x)) < 1e-10);
}

TEST_CASE("prepare panel: trimming, imputation and standardization") {
  RawSeriesTable raw;
  raw.values.resize(5, 3);
  raw.values << 1, 10, 2,
                2, 12, 4,
                3, kNaN, 8,
                5, 15, 16,
                8, 19, 32;
  raw.tcodes = {2, 1, 5};
  raw.names = {"a", "b", "c"};
  raw.dates = {"2001-01-01", "2001-04-01", "2001-07-01", "2001-10-01", "2002-01-01"};

  const auto mean = prepare_panel(raw, false, ImputePolicy::Mean);
  CHECK(mean.panel.T() == 4);
  CHECK(mean.manifest.rows_in == 5);
  CHECK(mean.manifest.rows_trimmed == 1);
  CHECK(mean.manifest.rows_out == 4);
  CHECK(mean.manifest.rows_in - mean.manifest.rows_trimmed == mean.manifest.rows_out);
  CHECK(mean.manifest.cells_imputed == 1);
  // Column b after trimming: 12, missing, 15, 19 -> mean 46/3.
  CHECK(mean.panel.values()(1, 1) == doctest::Approx(46.0 / 3.0).epsilon(1e-15));
  CHECK(mean.panel.values().col(0) == vec({1, 1, 2, 3}));
  CHECK(mean.panel.time_labels().front() == "2001-04-01");
  CHECK(mean.panel.var_names() == raw.names);

  const auto dropped = prepare_panel(raw, false, ImputePolicy::DropRows);
  CHECK(dropped.panel.T() == 3);
  CHECK(dropped.manifest.rows_dropped == 1);
  CHECK(dropped.manifest.rows_in - dropped.manifest.rows_trimmed == dropped.manifest.rows_out);
  CHECK(dropped.manifest.cells_imputed == 0);
  CHECK(dropped.panel.time_labels()[1] == "2001-10-01");

  try {
    prepare_panel(raw, false, ImputePolicy::None);
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("2001-07-01/b") != std::string::npos);
  }

  const auto standardized = prepare_panel(raw, true, ImputePolicy::Mean);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const VectorXd c = standardized.panel.values().col(j);
    CHECK(std::abs(c.mean()) < 1e-12);
    CHECK(std::abs(std::sqrt((c.array() - c.mean()).square().sum() / 3.0) - 1.0) < 1e-12);
  }
  // Log growth of a doubling series is constant and standardizes to zero.
  CHECK(standardized.panel.values().col(2).isZero(0.0));
}

TEST_CASE("all first-difference table loses one row") {
  RawSeriesTable raw;
  raw.values = normal_matrix(12, 4, 1);
  raw.tcodes = {2, 2, 2, 2};
  const auto out = prepare_panel(raw, false, ImputePolicy::None);
  CHECK(out.panel.T() == 11);
  CHECK(out.manifest.cells_imputed == 0);
}

TEST_CASE("prepare panel input checks") {
  RawSeriesTable raw;
  raw.values = normal_matrix(6, 3, 2);
  raw.values(2, 1) = kNaN;
  raw.values(3, 2) = kNaN;
  raw.tcodes = {1, 1, 1};
  CHECK_THROWS_AS(prepare_panel(raw, false, ImputePolicy::Mean), ArgumentError);  // one complete column
  raw.tcodes = {1, 9, 1};
  CHECK_THROWS_AS(prepare_panel(raw, false, ImputePolicy::Mean), ArgumentError);
  raw.tcodes = {1, 1, 1};
  raw.values(2, 1) = 0.0;
  raw.dates = {"2000-01-01", "2000-04-01", "2000-04-01", "2000-07-01", "2000-10-01", "2001-01-01"};
  CHECK_THROWS_AS(prepare_panel(raw, false, ImputePolicy::Mean), ArgumentError);
  CHECK(parse_impute_policy("drop-rows") == ImputePolicy::DropRows);
  CHECK_THROWS_AS(parse_impute_policy("em"), ArgumentError);
}

TEST_CASE("FRED-QD layout reader") {
  std::istringstream in(
      "sasdate,GDPC1,UNRATE,FEDFUNDS\n"
      "factors,1,1,0\n"
      "transform,5,2,1\n"
      "3/1/1959,3123.2,5.8,2.5\n"
      "6/1/1959,3157.1,5.1,\n"
      "9/1/1959,3145.8,5.3,3.8\n");
  const RawSeriesTable raw = read_fred_csv(in);
  CHECK(raw.names == std::vector<std::string>{"GDPC1", "UNRATE", "FEDFUNDS"});
  CHECK(raw.tcodes == std::vector<int>{5, 2, 1});
  CHECK(raw.dates.size() == 3);
  CHECK(raw.values(1, 0) == 3157.1);
  CHECK(std::isnan(raw.values(1, 2)));

  std::istringstream no_factors("date,a,b\ntcode,1,2\n2000Q1,1,2\n2000Q2,3,4\n");
  CHECK(read_fred_csv(no_factors).values.rows() == 2);
  std::istringstream bad("date,a,b\ntcode,1,x\n2000Q1,1,2\n");
  CHECK_THROWS_AS(read_fred_csv(bad), ArgumentError);
  std::istringstream unsorted("date,a,b\ntcode,1,1\n2000Q2,1,2\n2000Q1,3,4\n");
  CHECK_THROWS_AS(read_fred_csv(unsorted), ArgumentError);
}

TEST_CASE("date keys order the supported formats") {
  CHECK(date_key("1959-03-01") < date_key("1959-06-01"));
  CHECK(date_key("3/1/1959") == date_key("1959-03-01"));
  CHECK(date_key("2000Q1") == date_key("1/1/2000"));
  CHECK(date_key("2000:Q4") > date_key("2000-09-30"));
  CHECK_THROWS_AS(date_key("March 1959"), ArgumentError);
}

TEST_CASE("forecast origin count on a 255-row quarterly panel") {
  const Panel panel = factor_driven_panel(255, 12, 7, quarterly_dates(1959, 3, 255));
  CHECK(panel.time_labels().back() == "1/1/2023");
  ForecastSpec spec;
  spec.factor_method = Method::PCA;
  spec.n_factors = 2;
  spec.first_target_date = "2000-01-01";
  const auto res = rolling_diffusion_forecast(panel, spec);
  CHECK(res.points.size() == 93);
  CHECK(res.points.front().origin_label == "10/1/1999");
  CHECK(res.points.back().origin_label == "10/1/2022");

  ForecastSpec all = spec;
  all.first_target_date.reset();
  CHECK(rolling_diffusion_forecast(panel, all).points.size() == 255 - 120);
}

TEST_CASE("forecasts never read rows after the origin") {
  const Panel panel = factor_driven_panel(160, 10, 8);
  for (Method m : {Method::PCA, Method::CQFM}) {
    ForecastSpec spec;
    spec.factor_method = m;
    spec.n_factors = 2;
    spec.grid = equally_spaced_grid(3);
    for (Eigen::Index origin : {Eigen::Index{119}, Eigen::Index{140}, Eigen::Index{158}}) {
      const ForecastPoint clean = forecast_at_origin(panel.values(), spec, origin);
      MatrixXd poisoned = panel.values();
      poisoned.bottomRows(poisoned.rows() - origin - 1).setConstant(kNaN);
      const ForecastPoint dirty = forecast_at_origin(poisoned, spec, origin);
      CHECK(dirty.forecast == clean.forecast);
      CHECK(std::isfinite(dirty.forecast));
    }
  }
}

TEST_CASE("factors beat the autoregression on a factor-driven target") {
  const Panel panel = factor_driven_panel(260, 20, 9);
  ForecastSpec spec;
  spec.factor_method = Method::PCA;
  spec.n_factors = 2;
  ForecastSpec ar = spec;
  ar.n_factors = 0;
  const double with_factors = rolling_diffusion_forecast(panel, spec).rmse;
  const double ar_only = rolling_diffusion_forecast(panel, ar).rmse;
  CHECK(with_factors < 0.8 * ar_only);
}

TEST_CASE("white-noise target has no predictability") {
  const MatrixXd Y = normal_matrix(700, 8, 10);
  ForecastSpec spec;
  spec.window = 400;
  spec.factor_method = Method::PCA;
  spec.n_factors = 1;
  const auto res = rolling_diffusion_forecast(Panel(Y), spec);
  CHECK(std::abs(res.rmse - 1.0) < 0.15);
}

TEST_CASE("collinear forecasting regression falls back to the ridge") {
  MatrixXd Y = normal_matrix(140, 6, 11);
  Y.col(0).setConstant(2.0);  // lags duplicate the intercept
  ForecastSpec spec;
  spec.n_factors = 0;
  const auto res = rolling_diffusion_forecast(Panel(Y), spec);
  CHECK(res.points.front().ridge);
  CHECK(std::abs(res.points.front().forecast - 2.0) < 1e-6);
}

TEST_CASE("forecast setting checks and CSV layout") {
  const Panel panel = factor_driven_panel(130, 6, 12);
  ForecastSpec spec;
  spec.n_factors = 0;
  spec.window = 126;
  CHECK_THROWS_AS(rolling_diffusion_forecast(panel, spec), ArgumentError);  // 126 + 4 + 1 > 130
  spec.window = 120;
  spec.target_index = 6;
  CHECK_THROWS_AS(rolling_diffusion_forecast(panel, spec), ArgumentError);
  spec.target_index = 0;
  spec.horizon = 2;
  CHECK_THROWS_AS(rolling_diffusion_forecast(panel, spec), ArgumentError);
  spec.horizon = 1;
  spec.first_target_date = "2000-01-01";
  CHECK_THROWS_AS(rolling_diffusion_forecast(panel, spec), ArgumentError);  // no time labels
  spec.first_target_date.reset();

  const auto res = rolling_diffusion_forecast(panel, spec);
  CHECK(res.points.size() == 10);
  std::ostringstream os;
  write_forecast_csv(res, os);
  const std::string csv = os.str();
  CHECK(csv.rfind("origin_date,forecast,realized,error\n119,", 0) == 0);
  CHECK(csv.find("\nRMSE," + format_number(res.rmse) + ",,\n") != std::string::npos);
  double ss = 0.0;
  for (const auto& p : res.points) {
    CHECK(p.error == p.realized - p.forecast);
    ss += p.error * p.error;
  }
  CHECK(res.rmse == doctest::Approx(std::sqrt(ss / 10.0)).epsilon(1e-15));
}
