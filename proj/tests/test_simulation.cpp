#include "cqfm/estimator.hpp"
#include "cqfm/metrics.hpp"
#include "cqfm/simulation.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace cqfm;

TEST_CASE("simulated panel shapes and determinism") {
  DgpSpec spec;
  spec.error = ErrorSpec::defaults(ErrorFamily::SkewNormal);
  const auto a = simulate_panel(spec, 30, 40, 9);
  CHECK(a.panel.T() == 30);
  CHECK(a.panel.N() == 40);
  CHECK(a.F0.rows() == 30);
  CHECK(a.F0.cols() == 3);
  CHECK(a.L0.rows() == 40);
  CHECK(a.L0.cols() == 3);
  CHECK_FALSE(a.multiplier.has_value());
  const auto b = simulate_panel(spec, 30, 40, 9);
  CHECK(a.panel.values() == b.panel.values());
  CHECK(a.F0 == b.F0);
  CHECK(simulate_panel(spec, 30, 40, 10).panel.values() != a.panel.values());
  CHECK_THROWS_AS(simulate_panel(spec, 5, 40, 1), ArgumentError);
  DgpSpec bad;
  bad.ar_factor_coeffs[0] = 1.0;
  CHECK_THROWS_AS(simulate_panel(bad, 30, 30, 1), ArgumentError);
}

TEST_CASE("heteroskedastic multiplier range") {
  DgpSpec spec;
  spec.variant = DgpVariant::Heteroskedastic;
  const auto s = simulate_panel(spec, 50, 60, 3);
  REQUIRE(s.multiplier.has_value());
  CHECK(s.multiplier->minCoeff() >= 1.0);
  CHECK(s.multiplier->maxCoeff() <= 3.0);
  const MatrixXd e = s.panel.values() - s.F0 * s.L0.transpose();
  // Errors are the iid draws scaled cell by cell.
  DgpSpec iid;
  const auto base = simulate_panel(iid, 50, 60, 3);
  const MatrixXd e0 = base.panel.values() - base.F0 * base.L0.transpose();
  CHECK(cqfm::test::max_abs(e - e0.cwiseProduct(*s.multiplier)) < 1e-12);
}

TEST_CASE("AR(1) error variant is serially correlated") {
  DgpSpec spec;
  spec.variant = DgpVariant::Ar1;
  const auto s = simulate_panel(spec, 400, 50, 4);
  const MatrixXd e = s.panel.values() - s.F0 * s.L0.transpose();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < e.cols(); ++i) {
    for (Eigen::Index t = 1; t < e.rows(); ++t) num += e(t, i) * e(t - 1, i);
    for (Eigen::Index t = 0; t < e.rows(); ++t) den += e(t, i) * e(t, i);
  }
  CHECK(std::abs(num / den - 0.5) < 0.03);
}

TEST_CASE("factor recursions are stationary") {
  DgpSpec spec;
  const auto s = simulate_panel(spec, 40000, 10, 5);
  const VectorXd f = s.F0.col(0);
  const double var = (f.array() - f.mean()).square().sum() / (f.size() - 1.0);
  CHECK(std::abs(var / (1.0 / (1.0 - 0.64)) - 1.0) < 0.10);
  const VectorXd f3 = s.F0.col(2);
  const double var3 = (f3.array() - f3.mean()).square().sum() / (f3.size() - 1.0);
  CHECK(std::abs(var3 / (1.0 / (1.0 - 0.04)) - 1.0) < 0.10);
}

TEST_CASE("single replication aggregates equal its own metrics") {
  DgpSpec spec;
  CqfmConfig cfg;
  SimOptions opts;
  const QuantileGrid grid = equally_spaced_grid(3);
  const auto rep = run_replications(spec, {{20, 20}}, {Method::CQFM}, grid, 1, 77,
                                    {SimTask::Estimate}, opts);
  REQUIRE(rep.cells.size() == 1);
  const auto sim = simulate_panel(spec, 20, 20, 77);
  CqfmConfig c = opts.config;
  c.seed = 77;
  const FactorFit fit = fit_cqfm(sim.panel, 3, grid, c);
  const auto r2 = adjusted_r2_span(sim.F0, fit.factors);
  for (int j = 0; j < 3; ++j) CHECK(rep.cells[0].mean_adj_r2[static_cast<std::size_t>(j)] == r2.values[j]);
  CHECK(rep.cells[0].mean_mse == common_component_mse(sim.F0, sim.L0, fit.factors, fit.loadings));
  CHECK(rep.cells[0].estimate_failures == 0);
}

TEST_CASE("replication harness is deterministic and fair across methods") {
  DgpSpec spec;
  spec.error = ErrorSpec::defaults(ErrorFamily::LogNormal);
  SimOptions opts;
  opts.r_max = 4;
  const QuantileGrid grid = equally_spaced_grid(3);
  const std::vector<SimTask> tasks{SimTask::Estimate, SimTask::SelectRank};
  const auto a = run_replications(spec, {{20, 25}, {25, 20}}, {Method::QFM, Method::PCA}, grid, 3, 5,
                                  tasks, opts);
  const auto b = run_replications(spec, {{20, 25}, {25, 20}}, {Method::QFM, Method::PCA}, grid, 3, 5,
                                  tasks, opts);
  std::ostringstream sa;
  std::ostringstream sb;
  write_sim_report_csv(a, sa);
  write_sim_report_csv(b, sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.seeds == std::vector<std::uint64_t>{5, 6, 7});

  // PCA alone sees the same panels as PCA next to QFM.
  const auto alone = run_replications(spec, {{20, 25}}, {Method::PCA}, grid, 3, 5, tasks, opts);
  CHECK(alone.cells[0].mean_mse == a.cells[1].mean_mse);
  CHECK(alone.cells[0].mean_rank == a.cells[1].mean_rank);

  // Parallel replications aggregate in replication order.
  SimOptions par = opts;
  par.workers = 3;
  const auto c = run_replications(spec, {{20, 25}, {25, 20}}, {Method::QFM, Method::PCA}, grid, 3, 5,
                                  tasks, par);
  std::ostringstream sc;
  write_sim_report_csv(c, sc);
  CHECK(sc.str() == sa.str());

  const std::string csv = sa.str();
  CHECK(csv.rfind("method,T,N,error_family,variant,metric,value,replications,failures\n", 0) == 0);
  CHECK(csv.find("QFM,20,25,log-normal,iid,adj_r2_f1,") != std::string::npos);
  CHECK(csv.find("PCA,25,20,log-normal,iid,prob_rank_correct,") != std::string::npos);
}

TEST_CASE("replication argument checks") {
  DgpSpec spec;
  const QuantileGrid grid = equally_spaced_grid(3);
  CHECK_THROWS_AS(run_replications(spec, {{20, 20}}, {Method::PCA}, grid, 0, 1, {SimTask::Estimate}),
                  ArgumentError);
  CHECK_THROWS_AS(run_replications(spec, {}, {Method::PCA}, grid, 1, 1, {SimTask::Estimate}),
                  ArgumentError);
  CHECK(parse_dgp_variant("ar1") == DgpVariant::Ar1);
  CHECK_THROWS_AS(parse_dgp_variant("garch"), ArgumentError);
}
