#include "cqfm/cli.hpp"
#include "cqfm/io.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cqfm;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const char* env = std::getenv("CQFM_TMP");
  const fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "cqfm_cli_test";
  static bool cleaned = false;
  if (!cleaned) {
    fs::remove_all(dir);
    cleaned = true;
  }
  fs::create_directories(dir);
  return dir;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cqfm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json last_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.jsonl");
  std::string line;
  std::string last;
  while (std::getline(in, line)) last = line;
  return nlohmann::json::parse(last);
}

fs::path write_panel(const std::string& name, const MatrixXd& Y) {
  const fs::path p = work_dir() / name;
  std::ofstream out(p);
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) names.push_back("u" + std::to_string(j + 1));
  write_matrix_csv(out, Y, names);
  return p;
}

// FRED-QD layout: names row, tcode row, then dated levels.
fs::path write_fred(const std::string& name, int T, int N) {
  const fs::path p = work_dir() / name;
  const MatrixXd F = cqfm::test::normal_matrix(T, 2, 5);
  const MatrixXd L = cqfm::test::normal_matrix(N, 2, 6);
  const MatrixXd E = cqfm::test::normal_matrix(T, N, 7);
  std::ofstream out(p);
  out << "sasdate";
  for (int j = 0; j < N; ++j) out << ",s" << j;
  out << "\ntransform";
  for (int j = 0; j < N; ++j) out << ',' << (j % 3 == 0 ? 5 : j % 3 == 1 ? 2 : 1);
  out << '\n';
  VectorXd level = VectorXd::Constant(N, 100.0);
  for (int t = 0; t < T; ++t) {
    out << (3 * (t % 4) + 1) << "/1/" << 1970 + t / 4;
    for (int j = 0; j < N; ++j) {
      const double shock = F.row(t).dot(L.row(j)) + 0.5 * E(t, j);
      level[j] = j % 3 == 0 ? level[j] * std::exp(0.01 * shock) : j % 3 == 1 ? level[j] + shock : shock;
      out << ',' << format_number(level[j]);
    }
    out << '\n';
  }
  return p;
}

fs::path rank2_fixture() {
  const auto lr = cqfm::test::noiseless_panel(30, 30, 2, 2);
  return write_panel("rank2.csv", lr.panel.values());
}

fs::path noisy_fixture() {
  const auto lr = cqfm::test::noiseless_panel(40, 30, 3, 3);
  return write_panel("noisy.csv", lr.panel.values() + 0.3 * cqfm::test::normal_matrix(40, 30, 4));
}

}  // namespace

TEST_CASE("fit happy path writes the three CSVs and a manifest line") {
  const fs::path out = work_dir() / "fit1";
  const auto r = cli({"fit", "--input", noisy_fixture().string(), "--rank", "3", "--K", "5",
                      "--seed", "7", "--output-dir", out.string()});
  CHECK(r.code == 0);
  CHECK(r.err.empty());
  for (const char* f : {"factors.csv", "loadings.csv", "intercepts.csv", "manifest.jsonl"}) {
    CHECK(fs::exists(out / f));
  }
  const auto m = last_manifest(out);
  CHECK(m["command"] == "fit");
  CHECK(m["seed"] == 7);
  CHECK(m["config"]["rank"] == 3);
  CHECK(m["config"]["K"] == 5);
  CHECK(m["converged"] == true);
  CHECK(m["outputs"].size() == 3);
  CHECK(m.contains("wall_time_s"));
  const std::string factors = slurp(out / "factors.csv");
  CHECK(factors.rfind("t,f1,f2,f3\n1,", 0) == 0);
  const std::string intercepts = slurp(out / "intercepts.csv");
  CHECK(intercepts.rfind("tau,intercept\n0.16666666666666666,", 0) == 0);
}

TEST_CASE("argument errors exit with code 2") {
  const std::string input = noisy_fixture().string();
  const auto zero = cli({"fit", "--input", input, "--rank", "0"});
  CHECK(zero.code == 2);
  CHECK(zero.err.find("--rank must be >= 1") != std::string::npos);

  const auto unknown = cli({"fit", "--input", input, "--rank", "2", "--frobnicate", "1"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("Usage") != std::string::npos);

  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"fit", "--input", (work_dir() / "missing.csv").string(), "--rank", "2"}).code == 2);
  CHECK(cli({"fit", "--input", input, "--rank", "2", "--K", "3", "--taus", "0.5"}).code == 2);
  CHECK(cli({"fit", "--input", input, "--rank", "two"}).code == 2);
  CHECK(cli({"fit", "--input", input, "--rank", "30"}).code == 2);
  CHECK(cli({"fit", "--input", input, "--rank", "2", "--method", "ols"}).code == 2);
  CHECK(cli({"select", "--input", input, "--penalty", "v7"}).code == 2);
  CHECK(cli({"fit", "--input", input, "--rank", "2", "--tol-outer", "-1"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("degenerate input exits with code 3") {
  const fs::path input = write_panel("constant.csv", MatrixXd::Constant(12, 10, 1.5));
  const auto r = cli({"fit", "--input", input.string(), "--rank", "1", "--K", "3",
                      "--output-dir", (work_dir() / "deg").string()});
  CHECK(r.code == 3);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("select records the chosen rank") {
  const fs::path out = work_dir() / "select";
  const auto r = cli({"select", "--input", rank2_fixture().string(), "--rmax", "8", "--penalty", "v1",
                      "--output-dir", out.string()});
  CHECK(r.code == 0);
  const auto m = last_manifest(out);
  CHECK(m["chosen_rank"] == 2);
  CHECK(m["ic_values"].size() == 8);
  CHECK(slurp(out / "selection.csv").rfind("rank,ic\n1,", 0) == 0);
}

TEST_CASE("explicit quantile list") {
  const fs::path out = work_dir() / "taus";
  const auto r = cli({"fit", "--input", noisy_fixture().string(), "--rank", "2", "--taus",
                      "0.25,0.5,0.75", "--output-dir", out.string()});
  CHECK(r.code == 0);
  CHECK(slurp(out / "intercepts.csv").find("\n0.75,") != std::string::npos);
  CHECK(last_manifest(out)["config"]["taus"].size() == 3);
}

TEST_CASE("config file values sit between defaults and flags") {
  const fs::path cfg = work_dir() / "cfg.json";
  {
    std::ofstream out(cfg);
    out << R"({"rank": 2, "seed": 3, "K": 3, "method": "cqfm"})";
  }
  const fs::path out = work_dir() / "cfgrun";
  const auto r = cli({"fit", "--config", cfg.string(), "--input", noisy_fixture().string(), "--seed",
                      "7", "--output-dir", out.string()});
  CHECK(r.code == 0);
  const auto m = last_manifest(out);
  CHECK(m["config"]["rank"] == 2);
  CHECK(m["config"]["seed"] == 7);
  CHECK(m["config"]["K"] == 3);
  CHECK(m["config"]["tol-outer"] == 1e-6);
  CHECK(m["config"]["config"] == cfg.string());

  const fs::path bad = work_dir() / "bad.json";
  {
    std::ofstream o(bad);
    o << R"({"rnk": 2})";
  }
  CHECK(cli({"fit", "--config", bad.string(), "--input", noisy_fixture().string()}).code == 2);
  {
    std::ofstream o(bad);
    o << "{not json";
  }
  CHECK(cli({"fit", "--config", bad.string(), "--input", noisy_fixture().string()}).code == 2);
}

TEST_CASE("every command reproduces byte-identical CSV output") {
  const std::string panel = noisy_fixture().string();
  const std::string fred = write_fred("fred.csv", 150, 9).string();
  struct Case {
    std::vector<std::string> args;
    std::vector<std::string> files;
    bool dir;
  };
  const std::vector<Case> cases = {
      {{"fit", "--input", panel, "--rank", "3", "--seed", "11"},
       {"factors.csv", "loadings.csv", "intercepts.csv"}, true},
      {{"fit", "--input", panel, "--rank", "2", "--method", "qfm"}, {"factors.csv"}, true},
      {{"fit", "--input", panel, "--rank", "2", "--method", "pca"}, {"loadings.csv"}, true},
      {{"select", "--input", panel, "--rmax", "4", "--standardize"}, {"selection.csv"}, true},
      {{"simulate", "--sizes", "20x20,20x25", "--reps", "2", "--methods", "cqfm,pca", "--tasks",
        "estimate,select", "--rmax", "4", "--K", "3", "--error", "log-normal"},
       {"simulation.csv"}, true},
      {{"transform", "--input", fred, "--standardize", "--impute", "mean"}, {"panel.csv"}, false},
      {{"forecast", "--input", fred, "--target", "s1", "--window", "100", "--factors", "2", "--K",
        "3"},
       {"forecast.csv"}, false},
  };
  int idx = 0;
  for (const auto& c : cases) {
    std::vector<std::string> outputs;
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = work_dir() / ("det" + std::to_string(idx) + "_" + std::to_string(run));
      std::vector<std::string> args = c.args;
      if (c.dir) {
        args.insert(args.end(), {"--output-dir", dir.string()});
      } else {
        args.insert(args.end(), {"--output", (dir / c.files[0]).string()});
      }
      const auto r = cli(args);
      INFO(c.args[0], " ", r.err);
      REQUIRE(r.code == 0);
      std::string bytes;
      for (const auto& f : c.files) bytes += slurp(dir / f);
      outputs.push_back(bytes);
      CHECK(last_manifest(dir)["command"] == c.args[0]);
    }
    CHECK_FALSE(outputs[0].empty());
    CHECK(outputs[0] == outputs[1]);
    ++idx;
  }
}

TEST_CASE("transform and forecast outputs") {
  const std::string fred = write_fred("fred2.csv", 150, 9).string();
  const fs::path dir = work_dir() / "macro";
  const auto t = cli({"transform", "--input", fred, "--output", (dir / "panel.csv").string()});
  CHECK(t.code == 0);
  const auto m = last_manifest(dir);
  CHECK(m["rows_in"] == 150);
  CHECK(m["rows_trimmed"] == 1);
  CHECK(m["rows_out"] == 149);
  CHECK(slurp(dir / "panel.csv").rfind("date,s0,s1,", 0) == 0);

  const auto f = cli({"forecast", "--input", fred, "--target", "2", "--window", "100", "--factors",
                      "0", "--output", (dir / "ar.csv").string()});
  CHECK(f.code == 0);
  const auto fm = last_manifest(dir);
  CHECK(fm["n_forecasts"] == 49);
  CHECK(fm["standardize_within_window"] == true);
  CHECK(cli({"forecast", "--input", fred, "--target", "nope", "--output", (dir / "x.csv").string()})
            .code == 2);
  CHECK(cli({"forecast", "--input", fred, "--target", "s1", "--window", "148", "--output",
             (dir / "x.csv").string()})
            .code == 2);
}

TEST_CASE("worker count does not change the fitted objective") {
  const std::string panel = noisy_fixture().string();
  const fs::path a = work_dir() / "w1";
  const fs::path b = work_dir() / "w4";
  REQUIRE(cli({"fit", "--input", panel, "--rank", "3", "--output-dir", a.string()}).code == 0);
  REQUIRE(cli({"fit", "--input", panel, "--rank", "3", "--workers", "4", "--output-dir", b.string()})
              .code == 0);
  const double oa = last_manifest(a)["final_objective"];
  const double ob = last_manifest(b)["final_objective"];
  CHECK(std::abs(oa - ob) <= 1e-10);
}
