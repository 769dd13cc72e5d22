#pragma once

// Three-factor data-generating process and the replication harness used to
// compare CQFM, QFM(0.5) and PCA.

#include "cqfm/core.hpp"
#include "cqfm/distributions.hpp"
#include "cqfm/selection.hpp"

#include <array>
#include <iosfwd>
#include <optional>

namespace cqfm {

enum class DgpVariant { Iid, Heteroskedastic, Ar1 };

std::string to_string(DgpVariant v);
DgpVariant parse_dgp_variant(const std::string& s);

struct DgpSpec {
  ErrorSpec error = ErrorSpec::defaults(ErrorFamily::Normal);
  DgpVariant variant = DgpVariant::Iid;
  std::array<double, 3> ar_factor_coeffs{0.8, 0.5, 0.2};
  double ar_error_coeff = 0.5;
  int burn_in = 100;

  void validate() const;
};

struct SimulatedPanel {
  Panel panel;
  MatrixXd F0;  // T x 3
  MatrixXd L0;  // N x 3
  // 2 + cos(2 pi lambda_{i,4} F_{t,4}), T x N; heteroskedastic variant only.
  std::optional<MatrixXd> multiplier;
};

// Y_it = sum_j lambda_ij F_tj + error term. Factors follow AR(1) recursions
// with N(0,1) innovations started at zero and run through `burn_in` steps.
SimulatedPanel simulate_panel(const DgpSpec& spec, int T, int N,
                              std::uint64_t rng_seed);

enum class SimTask { Estimate, SelectRank };

struct SimOptions {
  CqfmConfig config;     // seed is overwritten per replication
  int r_max = 8;
  Penalty penalty = Penalty::V1;
  int workers = 1;       // replications run concurrently
};

// Metrics of one method on one replication.
struct ReplicationResult {
  bool estimate_ok = false;
  std::array<double, 3> adj_r2{};
  double mse = 0.0;
  bool select_ok = false;
  int chosen_rank = 0;
};

struct SimCell {
  Method method = Method::CQFM;
  int T = 0;
  int N = 0;
  std::string error_family;
  std::string variant;
  int replications = 0;
  int estimate_failures = 0;
  int select_failures = 0;
  bool estimated = false;
  bool selected = false;
  std::array<double, 3> mean_adj_r2{};
  double mean_mse = 0.0;
  double mean_rank = 0.0;
  double prob_rank_correct = 0.0;
  std::vector<ReplicationResult> runs;
};

struct SimReport {
  std::vector<SimCell> cells;
  int replications = 0;
  std::vector<std::uint64_t> seeds;
};

// Replication k of every cell uses the panel simulated from seed
// base_seed + k; all methods in a cell see that same panel.
SimReport run_replications(const DgpSpec& spec,
                           const std::vector<std::pair<int, int>>& sizes,
                           const std::vector<Method>& methods,
                           const QuantileGrid& grid, int reps,
                           std::uint64_t base_seed,
                           const std::vector<SimTask>& tasks,
                           const SimOptions& options = {});

// Long-format CSV: method,T,N,error_family,variant,metric,value,replications,failures
void write_sim_report_csv(const SimReport& report, std::ostream& os);

}  // namespace cqfm
