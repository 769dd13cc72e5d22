#include "cqfm/cli.hpp"

#include "cqfm/estimator.hpp"
#include "cqfm/io.hpp"
#include "cqfm/loss.hpp"
#include "cqfm/macro.hpp"
#include "cqfm/selection.hpp"
#include "cqfm/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace cqfm {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

enum class Kind { Int, Real, String, Bool, RealList };

struct Key {
  const char* name;
  Kind kind;
  Json fallback;  // null = no default
  const char* help;
};

const std::vector<Key>& estimator_keys() {
  static const std::vector<Key> keys = {
      {"input", Kind::String, nullptr, "panel CSV (rows = periods, columns = units)"},
      {"K", Kind::Int, 5, "number of equally spaced quantile levels"},
      {"taus", Kind::RealList, nullptr, "explicit quantile levels, comma separated"},
      {"seed", Kind::Int, 1, "random start seed"},
      {"init", Kind::String, "random", "starting values: random or pca"},
      {"tol-outer", Kind::Real, 1e-6, "relative objective change stopping rule"},
      {"tol-inner", Kind::Real, 1e-3, "MM coefficient change stopping rule"},
      {"max-iters", Kind::Int, 1000, "maximum outer iterations"},
      {"max-inner-iters", Kind::Int, 200, "maximum MM iterations per subproblem"},
      {"epsilon", Kind::Real, 1e-6, "MM perturbation"},
      {"method", Kind::String, "cqfm", "cqfm, qfm or pca"},
      {"output-dir", Kind::String, ".", "directory for CSV outputs and manifest.jsonl"},
      {"workers", Kind::Int, 1, "worker threads"},
  };
  return keys;
}

std::vector<Key> command_keys(const std::string& command) {
  std::vector<Key> keys;
  auto take = [&](std::initializer_list<const char*> names) {
    for (const char* n : names) {
      for (const auto& k : estimator_keys()) {
        if (std::string(k.name) == n) keys.push_back(k);
      }
    }
  };
  const std::initializer_list<const char*> tuning = {
      "K", "taus", "init", "tol-outer", "tol-inner", "max-iters", "max-inner-iters",
      "epsilon", "method", "workers"};
  if (command == "fit") {
    keys = estimator_keys();
    keys.push_back({"rank", Kind::Int, nullptr, "number of factors"});
  } else if (command == "select") {
    keys = estimator_keys();
    keys.push_back({"rmax", Kind::Int, 8, "largest candidate rank"});
    keys.push_back({"penalty", Kind::String, "v1", "v1 or v2"});
    keys.push_back({"standardize", Kind::Bool, false, "standardize columns first"});
  } else if (command == "simulate") {
    take(tuning);
    take({"output-dir"});
    keys.push_back({"dgp", Kind::String, "iid", "iid, heteroskedastic or ar1"});
    keys.push_back({"error", Kind::String, "skew-normal", "error family"});
    keys.push_back({"sizes", Kind::String, "50x100", "cells as TxN, comma separated"});
    keys.push_back({"reps", Kind::Int, 20, "replications per cell"});
    keys.push_back({"methods", Kind::String, "cqfm,qfm,pca", "methods, comma separated"});
    keys.push_back({"tasks", Kind::String, "estimate", "estimate and/or select, comma separated"});
    keys.push_back({"base-seed", Kind::Int, 1, "replication k uses base-seed + k"});
    keys.push_back({"rmax", Kind::Int, 8, "largest candidate rank for select"});
    keys.push_back({"penalty", Kind::String, "v1", "v1 or v2"});
  } else if (command == "transform") {
    keys.push_back({"input", Kind::String, nullptr, "FRED-QD layout CSV"});
    keys.push_back({"output", Kind::String, nullptr, "prepared panel CSV"});
    keys.push_back({"standardize", Kind::Bool, false, "standardize columns"});
    keys.push_back({"impute", Kind::String, "none", "drop-rows, mean or none"});
  } else if (command == "forecast") {
    take({"input"});
    keys.back().help = "FRED-QD layout CSV";
    keys.push_back({"output", Kind::String, nullptr, "forecasts CSV"});
    keys.push_back({"target", Kind::String, nullptr, "target series name or 0-based column"});
    keys.push_back({"window", Kind::Int, 120, "rolling window length"});
    keys.push_back({"lags", Kind::Int, 4, "autoregressive lags"});
    keys.push_back({"factors", Kind::Int, 6, "factors (0 = autoregression only)"});
    keys.push_back({"start", Kind::String, nullptr, "date of the first forecast target"});
    keys.push_back({"impute", Kind::String, "mean", "drop-rows, mean or none"});
    keys.push_back({"seed", Kind::Int, 1, "random start seed (offset by origin)"});
    take(tuning);
  }
  return keys;
}

// Flag and config values share this conversion so that both obey one schema.
Json coerce(const Key& key, const Json& v) {
  const std::string where = std::string("'") + key.name + "'";
  auto as_text = [&]() -> std::string {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  switch (key.kind) {
    case Kind::Int: {
      if (v.is_number_integer()) return v;
      const std::string s = as_text();
      long long out = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ArgumentError(where + " expects an integer, got '" + s + "'");
      }
      return out;
    }
    case Kind::Real: {
      if (v.is_number()) return v.get<double>();
      const auto d = parse_number(as_text());
      if (!d) throw ArgumentError(where + " expects a number, got '" + as_text() + "'");
      return *d;
    }
    case Kind::String:
      if (v.is_null()) throw ArgumentError(where + " expects a value");
      return as_text();
    case Kind::Bool:
      if (v.is_boolean()) return v;
      if (as_text() == "true") return true;
      if (as_text() == "false") return false;
      throw ArgumentError(where + " expects true or false");
    case Kind::RealList: {
      Json out = Json::array();
      if (v.is_array()) {
        for (const auto& e : v) {
          if (!e.is_number()) throw ArgumentError(where + " expects numbers");
          out.push_back(e.get<double>());
        }
        return out;
      }
      std::stringstream ss(as_text());
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto d = parse_number(item);
        if (!d) throw ArgumentError(where + " expects numbers, got '" + item + "'");
        out.push_back(*d);
      }
      return out;
    }
  }
  return v;
}

struct Settings {
  Json values = Json::object();
  std::set<std::string> explicit_keys;

  bool has(const std::string& k) const { return values.contains(k) && !values[k].is_null(); }
  const Json& at(const std::string& k) const {
    if (!has(k)) throw ArgumentError("--" + k + " is required");
    return values[k];
  }
  long long integer(const std::string& k) const { return at(k).get<long long>(); }
  int small_int(const std::string& k) const {
    const long long v = integer(k);
    if (v < -1000000000LL || v > 1000000000LL) throw ArgumentError("--" + k + " is out of range");
    return static_cast<int>(v);
  }
  double real(const std::string& k) const { return at(k).get<double>(); }
  std::string text(const std::string& k) const { return at(k).get<std::string>(); }
  bool flag(const std::string& k) const { return at(k).get<bool>(); }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

QuantileGrid grid_from(const Settings& s) {
  if (s.has("taus")) {
    if (s.explicit_keys.count("K")) throw ArgumentError("--K and --taus are mutually exclusive");
    std::vector<double> taus;
    for (const auto& t : s.at("taus")) taus.push_back(t.get<double>());
    return QuantileGrid(std::move(taus));
  }
  return equally_spaced_grid(s.small_int("K"));
}

CqfmConfig config_from(const Settings& s) {
  CqfmConfig c;
  if (s.has("epsilon")) c.mm_epsilon = s.real("epsilon");
  if (s.has("tol-inner")) c.inner_tol = s.real("tol-inner");
  if (s.has("tol-outer")) c.outer_tol = s.real("tol-outer");
  if (s.has("max-iters")) c.max_outer_iters = s.small_int("max-iters");
  if (s.has("max-inner-iters")) c.max_inner_iters = s.small_int("max-inner-iters");
  if (s.has("init")) {
    const std::string init = s.text("init");
    if (init == "random") c.init = InitKind::SeededRandom;
    else if (init == "pca") c.init = InitKind::Pca;
    else throw ArgumentError("--init must be random or pca, got '" + init + "'");
  }
  if (s.has("seed")) {
    const long long seed = s.integer("seed");
    if (seed < 0) throw ArgumentError("--seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
  }
  if (s.has("workers")) c.workers = s.small_int("workers");
  c.validate();
  return c;
}

std::string existing_file(const Settings& s, const std::string& key) {
  const std::string path = s.text(key);
  if (!fs::is_regular_file(path)) throw ArgumentError("--" + key + ": no such file '" + path + "'");
  return path;
}

void ensure_parent(const fs::path& file) {
  const fs::path dir = file.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

std::ofstream open_output(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write '" + path.string() + "'");
  return out;
}

std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

struct Run {
  std::string command;
  Settings settings;
  Json result = Json::object();
  std::vector<std::string> outputs;
  fs::path manifest;
};

void append_manifest(const Run& run, double seconds) {
  Json line;
  line["command"] = run.command;
  line["config"] = run.settings.values;
  line["seed"] = run.settings.has("base-seed") ? run.settings.at("base-seed")
               : run.settings.has("seed")      ? run.settings.at("seed")
                                               : Json(nullptr);
  line["wall_time_s"] = seconds;
  line["outputs"] = run.outputs;
  for (const auto& [k, v] : run.result.items()) line[k] = v;
  ensure_parent(run.manifest);
  std::ofstream out(run.manifest, std::ios::app | std::ios::binary);
  if (!out) throw ArgumentError("cannot write manifest '" + run.manifest.string() + "'");
  out << line.dump() << '\n';
}

void run_fit(Run& run) {
  const Settings& s = run.settings;
  const long long rank = s.integer("rank");
  if (rank < 1) throw ArgumentError("--rank must be >= 1 (got " + std::to_string(rank) + ")");
  const QuantileGrid grid = grid_from(s);
  const CqfmConfig config = config_from(s);
  const Method method = parse_method(s.text("method"));
  const Panel panel = table_to_panel(read_table_csv_file(existing_file(s, "input")));
  if (rank >= std::min(panel.T(), panel.N())) {
    throw ArgumentError("--rank must be < min(T, N) = " +
                        std::to_string(std::min(panel.T(), panel.N())) + " (got " +
                        std::to_string(rank) + ")");
  }
  const FactorFit fit = fit_factors(panel, static_cast<int>(rank), method, grid, config);

  const fs::path dir = s.text("output-dir");
  const auto f_cols = numbered("f", fit.rank);
  const auto times = panel.time_labels().empty() ? numbered("", panel.T()) : panel.time_labels();
  const auto units = panel.var_names().empty() ? numbered("x", panel.N()) : panel.var_names();
  {
    auto out = open_output(dir / "factors.csv");
    write_matrix_csv(out, fit.factors, f_cols, times, "t");
  }
  {
    auto out = open_output(dir / "loadings.csv");
    write_matrix_csv(out, fit.loadings, f_cols, units, "unit");
  }
  {
    std::vector<double> taus = grid.taus();
    if (method == Method::QFM) taus = {grid.size() == 1 ? grid[0] : 0.5};
    auto out = open_output(dir / "intercepts.csv");
    out << "tau,intercept\n";
    for (Eigen::Index k = 0; k < fit.intercepts.size(); ++k) {
      out << format_number(taus[static_cast<std::size_t>(k)]) << ','
          << format_number(fit.intercepts[k]) << '\n';
    }
  }
  run.outputs = {(dir / "factors.csv").string(), (dir / "loadings.csv").string(),
                 (dir / "intercepts.csv").string()};
  run.manifest = dir / "manifest.jsonl";
  run.result["T"] = panel.T();
  run.result["N"] = panel.N();
  run.result["converged"] = method == Method::PCA ? true : fit.converged;
  run.result["iterations"] = fit.iterations;
  run.result["degenerate_solves"] = fit.degenerate_solves;
  run.result["final_objective"] =
      fit.loss_trace.empty() ? objective(panel, fit, grid) : fit.loss_trace.back();
}

void run_select(Run& run) {
  const Settings& s = run.settings;
  const QuantileGrid grid = grid_from(s);
  const CqfmConfig config = config_from(s);
  const Method method = parse_method(s.text("method"));
  const Penalty penalty = parse_penalty(s.text("penalty"));
  Panel panel = table_to_panel(read_table_csv_file(existing_file(s, "input")));
  if (s.flag("standardize")) panel = standardize_columns(panel);
  const int r_max = s.small_int("rmax");
  if (r_max < 1) throw ArgumentError("--rmax must be >= 1");
  const SelectionReport rep = select_num_factors(panel, r_max, grid, config, penalty, method);

  const fs::path dir = s.text("output-dir");
  {
    auto out = open_output(dir / "selection.csv");
    out << "rank,ic\n";
    for (std::size_t i = 0; i < rep.candidate_ranks.size(); ++i) {
      out << rep.candidate_ranks[i] << ',' << format_number(rep.ic_values[i]) << '\n';
    }
  }
  run.outputs = {(dir / "selection.csv").string()};
  run.manifest = dir / "manifest.jsonl";
  run.result["T"] = panel.T();
  run.result["N"] = panel.N();
  run.result["chosen_rank"] = rep.chosen_rank;
  run.result["boundary_warning"] = rep.boundary_warning;
  run.result["ic_values"] = rep.ic_values;
}

void run_simulate(Run& run) {
  const Settings& s = run.settings;
  DgpSpec dgp;
  dgp.variant = parse_dgp_variant(s.text("dgp"));
  dgp.error = ErrorSpec::defaults(parse_error_family(s.text("error")));

  std::vector<std::pair<int, int>> sizes;
  for (const auto& cell : split_list(s.text("sizes"))) {
    const auto x = cell.find('x');
    int T = 0;
    int N = 0;
    const bool ok = x != std::string::npos &&
                    std::from_chars(cell.data(), cell.data() + x, T).ptr == cell.data() + x &&
                    std::from_chars(cell.data() + x + 1, cell.data() + cell.size(), N).ptr ==
                        cell.data() + cell.size();
    if (!ok) throw ArgumentError("--sizes expects TxN cells, got '" + cell + "'");
    sizes.emplace_back(T, N);
  }
  std::vector<Method> methods;
  for (const auto& m : split_list(s.text("methods"))) methods.push_back(parse_method(m));
  std::vector<SimTask> tasks;
  for (const auto& t : split_list(s.text("tasks"))) {
    if (t == "estimate") tasks.push_back(SimTask::Estimate);
    else if (t == "select") tasks.push_back(SimTask::SelectRank);
    else throw ArgumentError("--tasks entries must be estimate or select, got '" + t + "'");
  }
  const long long base_seed = s.integer("base-seed");
  if (base_seed < 0) throw ArgumentError("--base-seed must be >= 0");

  SimOptions opts;
  opts.config = config_from(s);
  opts.workers = opts.config.workers;
  opts.config.workers = 1;
  opts.r_max = s.small_int("rmax");
  opts.penalty = parse_penalty(s.text("penalty"));
  const SimReport rep = run_replications(dgp, sizes, methods, grid_from(s), s.small_int("reps"),
                                         static_cast<std::uint64_t>(base_seed), tasks, opts);

  const fs::path dir = s.text("output-dir");
  {
    auto out = open_output(dir / "simulation.csv");
    write_sim_report_csv(rep, out);
  }
  run.outputs = {(dir / "simulation.csv").string()};
  run.manifest = dir / "manifest.jsonl";
  int est_fail = 0;
  int sel_fail = 0;
  for (const auto& c : rep.cells) {
    est_fail += c.estimate_failures;
    sel_fail += c.select_failures;
  }
  run.result["replication_seeds"] = rep.seeds;
  run.result["estimate_failures"] = est_fail;
  run.result["select_failures"] = sel_fail;
}

void run_transform(Run& run) {
  const Settings& s = run.settings;
  const RawSeriesTable raw = read_fred_csv_file(existing_file(s, "input"));
  const PreparedPanel prep =
      prepare_panel(raw, s.flag("standardize"), parse_impute_policy(s.text("impute")));
  const fs::path output = s.text("output");
  {
    auto out = open_output(output);
    write_panel_csv(out, prep.panel);
  }
  run.outputs = {output.string()};
  run.manifest = output.parent_path() / "manifest.jsonl";
  const PrepManifest& m = prep.manifest;
  run.result["rows_in"] = m.rows_in;
  run.result["rows_trimmed"] = m.rows_trimmed;
  run.result["leading_rows_trimmed"] = m.leading_rows_trimmed;
  run.result["rows_dropped"] = m.rows_dropped;
  run.result["rows_out"] = m.rows_out;
  run.result["cells_imputed"] = m.cells_imputed;
}

void run_forecast(Run& run) {
  const Settings& s = run.settings;
  const RawSeriesTable raw = read_fred_csv_file(existing_file(s, "input"));
  const PreparedPanel prep = prepare_panel(raw, false, parse_impute_policy(s.text("impute")));

  ForecastSpec spec;
  const std::string target = s.text("target");
  const auto& names = prep.panel.var_names();
  const auto hit = std::find(names.begin(), names.end(), target);
  if (hit != names.end()) {
    spec.target_index = static_cast<int>(hit - names.begin());
  } else {
    int idx = -1;
    const auto [ptr, ec] = std::from_chars(target.data(), target.data() + target.size(), idx);
    if (ec != std::errc() || ptr != target.data() + target.size()) {
      throw ArgumentError("--target '" + target + "' is neither a series name nor a column index");
    }
    spec.target_index = idx;
  }
  spec.window = s.small_int("window");
  spec.n_lags = s.small_int("lags");
  spec.n_factors = s.small_int("factors");
  spec.factor_method = parse_method(s.text("method"));
  spec.grid = grid_from(s);
  if (s.has("start")) spec.first_target_date = s.text("start");
  spec.config = config_from(s);
  spec.workers = spec.config.workers;
  spec.config.workers = 1;
  const ForecastResult res = rolling_diffusion_forecast(prep.panel, spec);

  const fs::path output = s.text("output");
  {
    auto out = open_output(output);
    write_forecast_csv(res, out);
  }
  run.outputs = {output.string()};
  run.manifest = output.parent_path() / "manifest.jsonl";
  int ridge = 0;
  for (const auto& p : res.points) ridge += p.ridge ? 1 : 0;
  run.result["n_forecasts"] = res.points.size();
  run.result["rmse"] = res.rmse;
  run.result["ridge_fallbacks"] = ridge;
  run.result["standardize_within_window"] = spec.standardize_window;
  run.result["rows_trimmed"] = prep.manifest.rows_trimmed;
  run.result["cells_imputed"] = prep.manifest.cells_imputed;
}

Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("--config: cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ArgumentError("--config: invalid JSON in '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ArgumentError("--config: top level must be an object");
  return j;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Composite quantile factor models: fit, rank selection, simulation, "
               "macro panel preparation and forecasting.",
               "cqfm"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every command");

  const std::vector<std::string> commands = {"fit", "select", "simulate", "transform", "forecast"};
  const std::map<std::string, std::string> descriptions = {
      {"fit", "fit a factor model to a panel"},
      {"select", "choose the number of factors by information criterion"},
      {"simulate", "Monte Carlo comparison on the three-factor design"},
      {"transform", "apply transformation codes and resolve missing cells"},
      {"forecast", "rolling one-step diffusion-index forecasts"},
  };
  // Flag values arrive as text and go through the same coercion as config
  // file values.
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, bool>> bools;
  std::map<std::string, std::string> config_path;
  std::map<std::string, CLI::App*> subs;
  std::map<std::string, std::vector<std::pair<Key, CLI::Option*>>> opts;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c, descriptions.at(c));
    subs[c] = sub;
    sub->add_option("--config", config_path[c], "JSON file of defaults; flags take precedence");
    for (const Key& k : command_keys(c)) {
      const std::string flag = std::string("--") + k.name;
      std::string help = k.help;
      if (!k.fallback.is_null()) help += " [" + (k.fallback.is_string() ? k.fallback.get<std::string>() : k.fallback.dump()) + "]";
      CLI::Option* o = k.kind == Kind::Bool ? sub->add_flag(flag, bools[c][k.name], help)
                                            : sub->add_option(flag, raw[c][k.name], help);
      opts[c].emplace_back(k, o);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) active = sub;
    }
    err << active->help();
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    Run run;
    run.command = command;
    Settings& s = run.settings;
    const auto& keyed = opts[command];
    for (const auto& [k, o] : keyed) s.values[k.name] = k.fallback;
    if (!config_path[command].empty()) {
      const Json file = load_config_file(config_path[command]);
      for (const auto& [name, value] : file.items()) {
        const auto it = std::find_if(keyed.begin(), keyed.end(),
                                     [&](const auto& kv) { return kv.first.name == name; });
        if (it == keyed.end()) {
          throw ArgumentError("--config: key '" + name + "' is not an option of '" + command + "'");
        }
        s.values[name] = coerce(it->first, value);
        s.explicit_keys.insert(name);
      }
      s.values["config"] = config_path[command];
    }
    for (const auto& [k, o] : keyed) {
      if (o->count() == 0) continue;
      s.values[k.name] = k.kind == Kind::Bool ? Json(bools[command][k.name])
                                              : coerce(k, Json(raw[command][k.name]));
      s.explicit_keys.insert(k.name);
    }

    if (command == "fit") run_fit(run);
    else if (command == "select") run_select(run);
    else if (command == "simulate") run_simulate(run);
    else if (command == "transform") run_transform(run);
    else run_forecast(run);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    append_manifest(run, seconds);
    for (const auto& o : run.outputs) out << "wrote " << o << '\n';
    if (run.result.contains("chosen_rank")) out << "chosen rank " << run.result["chosen_rank"] << '\n';
    return 0;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DegeneracyError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "numeric error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace cqfm
