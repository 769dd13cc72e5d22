#include "cqfm/simulation.hpp"

#include "cqfm/estimator.hpp"
#include "cqfm/io.hpp"
#include "cqfm/metrics.hpp"
#include "cqfm/parallel.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

namespace cqfm {

namespace {

// Substream ids inside one simulated panel.
enum Stream : std::uint64_t { kFactors = 1, kLoadings = 2, kErrors = 3, kExtra = 4 };

double ar1_path_step(double prev, double coeff, Philox& rng) {
  return coeff * prev + rng.normal();
}

}  // namespace

std::string to_string(DgpVariant v) {
  switch (v) {
    case DgpVariant::Iid: return "iid";
    case DgpVariant::Heteroskedastic: return "heteroskedastic";
    case DgpVariant::Ar1: return "ar1";
  }
  return "?";
}

DgpVariant parse_dgp_variant(const std::string& s) {
  if (s == "iid") return DgpVariant::Iid;
  if (s == "heteroskedastic" || s == "hetero") return DgpVariant::Heteroskedastic;
  if (s == "ar1") return DgpVariant::Ar1;
  throw ArgumentError("unknown DGP variant '" + s + "' (expected iid, heteroskedastic or ar1)");
}

void DgpSpec::validate() const {
  error.validate();
  for (double a : ar_factor_coeffs) {
    if (!(a > -1.0 && a < 1.0)) throw ArgumentError("factor AR coefficients must lie in (-1, 1)");
  }
  if (!(ar_error_coeff > -1.0 && ar_error_coeff < 1.0)) {
    throw ArgumentError("error AR coefficient must lie in (-1, 1)");
  }
  if (burn_in < 0) throw ArgumentError("burn-in must be >= 0");
}

SimulatedPanel simulate_panel(const DgpSpec& spec, int T, int N,
                              std::uint64_t rng_seed) {
  spec.validate();
  if (T < 10 || N < 10) throw ArgumentError("simulate_panel: need T, N >= 10");
  const Philox root(rng_seed);

  MatrixXd F0(T, 3);
  {
    Philox rng = root.substream(kFactors);
    for (int j = 0; j < 3; ++j) {
      double f = 0.0;
      for (int s = 0; s < spec.burn_in; ++s) f = ar1_path_step(f, spec.ar_factor_coeffs[j], rng);
      for (int t = 0; t < T; ++t) {
        f = ar1_path_step(f, spec.ar_factor_coeffs[j], rng);
        F0(t, j) = f;
      }
    }
  }
  MatrixXd L0(N, 3);
  {
    Philox rng = root.substream(kLoadings);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < 3; ++j) L0(i, j) = rng.normal();
    }
  }

  // Errors in unit-major order: unit i's T draws are contiguous, so the AR(1)
  // variant can run each unit's recursion through its own burn-in.
  MatrixXd eps(T, N);
  {
    Philox rng = root.substream(kErrors);
    if (spec.variant == DgpVariant::Ar1) {
      std::vector<double> u(static_cast<std::size_t>(spec.burn_in + T));
      for (int i = 0; i < N; ++i) {
        sample_error(spec.error, rng, u.data(), u.size());
        double e = 0.0;
        for (int s = 0; s < spec.burn_in; ++s) e = spec.ar_error_coeff * e + u[static_cast<std::size_t>(s)];
        for (int t = 0; t < T; ++t) {
          e = spec.ar_error_coeff * e + u[static_cast<std::size_t>(spec.burn_in + t)];
          eps(t, i) = e;
        }
      }
    } else {
      // Column-major storage: column i holds unit i's T draws.
      sample_error(spec.error, rng, eps.data(), static_cast<std::size_t>(eps.size()));
    }
  }

  std::optional<MatrixXd> multiplier;
  if (spec.variant == DgpVariant::Heteroskedastic) {
    Philox rng = root.substream(kExtra);
    VectorXd lambda4(N), f4(T);
    for (int i = 0; i < N; ++i) lambda4[i] = rng.normal();
    for (int t = 0; t < T; ++t) f4[t] = rng.normal();
    MatrixXd m(T, N);
    for (int i = 0; i < N; ++i) {
      for (int t = 0; t < T; ++t) {
        m(t, i) = 2.0 + std::cos(2.0 * std::numbers::pi * lambda4[i] * f4[t]);
      }
    }
    eps = eps.cwiseProduct(m);
    multiplier = std::move(m);
  }

  MatrixXd Y = F0 * L0.transpose() + eps;
  return SimulatedPanel{Panel(std::move(Y)), std::move(F0), std::move(L0),
                        std::move(multiplier)};
}

SimReport run_replications(const DgpSpec& spec,
                           const std::vector<std::pair<int, int>>& sizes,
                           const std::vector<Method>& methods,
                           const QuantileGrid& grid, int reps,
                           std::uint64_t base_seed,
                           const std::vector<SimTask>& tasks,
                           const SimOptions& options) {
  if (reps < 1) throw ArgumentError("reps must be >= 1");
  if (sizes.empty() || methods.empty() || tasks.empty()) {
    throw ArgumentError("sizes, methods and tasks must be non-empty");
  }
  spec.validate();
  options.config.validate();
  bool do_estimate = false;
  bool do_select = false;
  for (SimTask t : tasks) {
    if (t == SimTask::Estimate) do_estimate = true;
    if (t == SimTask::SelectRank) do_select = true;
  }
  const QuantileGrid qfm_grid({0.5});

  SimReport report;
  report.replications = reps;
  for (int k = 0; k < reps; ++k) report.seeds.push_back(base_seed + static_cast<std::uint64_t>(k));

  for (const auto& [T, N] : sizes) {
    const std::size_t first_cell = report.cells.size();
    for (Method m : methods) {
      SimCell cell;
      cell.method = m;
      cell.T = T;
      cell.N = N;
      cell.error_family = to_string(spec.error.family);
      cell.variant = to_string(spec.variant);
      cell.replications = reps;
      cell.estimated = do_estimate;
      cell.selected = do_select;
      cell.runs.resize(static_cast<std::size_t>(reps));
      report.cells.push_back(std::move(cell));
    }

    parallel_for(static_cast<std::size_t>(reps), options.workers, [&](std::size_t k) {
      const std::uint64_t seed = report.seeds[k];
      const SimulatedPanel sim = simulate_panel(spec, T, N, seed);
      CqfmConfig config = options.config;
      config.seed = seed;
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const Method m = methods[mi];
        const QuantileGrid& g = m == Method::QFM ? qfm_grid : grid;
        ReplicationResult& res = report.cells[first_cell + mi].runs[k];
        if (do_estimate) {
          try {
            const FactorFit fit = fit_factors(sim.panel, 3, m, g, config);
            const auto r2 = adjusted_r2_span(sim.F0, fit.factors);
            for (int j = 0; j < 3; ++j) res.adj_r2[static_cast<std::size_t>(j)] = r2.values[j];
            res.mse = common_component_mse(sim.F0, sim.L0, fit.factors, fit.loadings);
            res.estimate_ok = true;
          } catch (const std::exception&) {
            res.estimate_ok = false;
          }
        }
        if (do_select) {
          try {
            const int r_max = std::min<int>(options.r_max, std::min(T, N) - 1);
            const auto sel = select_num_factors(sim.panel, r_max, g, config,
                                                options.penalty, m);
            res.chosen_rank = sel.chosen_rank;
            res.select_ok = true;
          } catch (const std::exception&) {
            res.select_ok = false;
          }
        }
      }
    });

    // Aggregate in replication order so sums do not depend on scheduling.
    for (std::size_t c = first_cell; c < report.cells.size(); ++c) {
      SimCell& cell = report.cells[c];
      int est_ok = 0;
      int sel_ok = 0;
      int correct = 0;
      double rank_sum = 0.0;
      for (const auto& run : cell.runs) {
        if (do_estimate) {
          if (run.estimate_ok) {
            ++est_ok;
            for (std::size_t j = 0; j < 3; ++j) cell.mean_adj_r2[j] += run.adj_r2[j];
            cell.mean_mse += run.mse;
          } else {
            ++cell.estimate_failures;
          }
        }
        if (do_select) {
          if (run.select_ok) {
            ++sel_ok;
            rank_sum += run.chosen_rank;
            if (run.chosen_rank == 3) ++correct;
          } else {
            ++cell.select_failures;
          }
        }
      }
      if (est_ok > 0) {
        for (double& v : cell.mean_adj_r2) v /= est_ok;
        cell.mean_mse /= est_ok;
      }
      if (sel_ok > 0) {
        cell.mean_rank = rank_sum / sel_ok;
        cell.prob_rank_correct = static_cast<double>(correct) / sel_ok;
      }
    }
  }
  return report;
}

void write_sim_report_csv(const SimReport& report, std::ostream& os) {
  os << "method,T,N,error_family,variant,metric,value,replications,failures\n";
  for (const auto& cell : report.cells) {
    auto row = [&](const char* metric, double value, int failures) {
      os << to_string(cell.method) << ',' << cell.T << ',' << cell.N << ','
         << cell.error_family << ',' << cell.variant << ',' << metric << ','
         << format_number(value) << ',' << cell.replications << ',' << failures << '\n';
    };
    if (cell.estimated) {
      row("adj_r2_f1", cell.mean_adj_r2[0], cell.estimate_failures);
      row("adj_r2_f2", cell.mean_adj_r2[1], cell.estimate_failures);
      row("adj_r2_f3", cell.mean_adj_r2[2], cell.estimate_failures);
      row("mse", cell.mean_mse, cell.estimate_failures);
    }
    if (cell.selected) {
      row("mean_rank", cell.mean_rank, cell.select_failures);
      row("prob_rank_correct", cell.prob_rank_correct, cell.select_failures);
    }
  }
}

}  // namespace cqfm
