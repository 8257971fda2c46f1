#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "scm/ingest.hpp"

using namespace scm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(SCM_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scm_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

const char* kOneCell = R"({"dgp_cases": ["stationary"], "pre_periods": [10], "n_controls": [5],
  "spillover_ratio": [0.33], "treatment_effect": [3], "spill_ratio": [0.3]})";

// Noise-free panel: treated unit is a fixed mixture of four random donors
// plus an effect of 5 after period 20.
fs::path embedded_effect_panel(const fs::path& dir) {
  std::mt19937_64 rng(101);
  const Matrix donors = oracle::random_matrix(rng, 4, 24);
  const std::vector<double> w{0.1, 0.4, 0.3, 0.2};
  Panel p;
  p.outcomes = Matrix(5, 24);
  p.pre_periods = 20;
  for (std::size_t t = 0; t < 24; ++t) {
    double v = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      p.outcomes(j + 1, t) = donors(j, t);
      v += w[j] * donors(j, t);
    }
    p.outcomes(0, t) = v + (t >= 20 ? 5.0 : 0.0);
  }
  write_panel(dir / "panel.csv", p);
  write_file(dir / "config.json", run_config_for(p).to_json_text());
  return dir / "panel.csv";
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("simulate").code == 1);  // --out is required
  CHECK(run("--version").code == 0);
  CHECK(run("--help").code == 0);

  const fs::path dir = scratch("usage");
  write_file(dir / "bad.json", R"({"replicates": 3})");
  const auto r = run("simulate --spec " + (dir / "bad.json").string() + " --out " + (dir / "o").string());
  CHECK(r.code == 1);
  CHECK(run("--kernel sse9 simulate --spec " + (dir / "bad.json").string() + " --out x").code == 1);
  fs::remove_all(dir);
}

TEST_CASE("simulate: one config with one replication gives five rows, reruns are byte-identical") {
  const fs::path dir = scratch("simulate");
  write_file(dir / "spec.json", kOneCell);
  const std::string base = "simulate --spec " + (dir / "spec.json").string() + " --replications 1 --pe --out ";
  REQUIRE(run(base + (dir / "a").string()).code == 0);
  REQUIRE(run(base + (dir / "b").string() + " --threads 3").code == 0);
  const std::string mspe = slurp(dir / "a" / "mspe.csv");
  CHECK(count_lines(mspe) == 1 + 5);
  for (const char* f : {"mspe.csv", "pe.csv", "marginal_spill_ratio.csv", "marginal_dgp_case.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  // The manifest is itself an accepted spec and reproduces the run.
  REQUIRE(run("simulate --spec " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "c").string()).code == 0);
  CHECK(slurp(dir / "c" / "mspe.csv") == mspe);
  fs::remove_all(dir);
}

TEST_CASE("sweep-iterative writes four variants per case") {
  const fs::path dir = scratch("sweep");
  write_file(dir / "spec.json", kOneCell);
  REQUIRE(run("sweep-iterative --spec " + (dir / "spec.json").string() + " --replications 2 --out " +
              (dir / "o").string()).code == 0);
  const std::string table = slurp(dir / "o" / "iterative_2x2.csv");
  CHECK(table.rfind("dgp_case,replace_pre,use_cleaned,mspe\n", 0) == 0);
  CHECK(count_lines(table) == 1 + 4);
  CHECK(count_lines(slurp(dir / "o" / "iterative_mspe.csv")) == 1 + 4);
  fs::remove_all(dir);
}

TEST_CASE("estimate: embedded effect of 5 is printed for every method") {
  const fs::path dir = scratch("embedded");
  const fs::path panel = embedded_effect_panel(dir);
  const auto r = run("estimate --panel " + panel.string() + " --config " + (dir / "config.json").string() +
                     " --method all --out " + (dir / "all").string());
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  int seen = 0;
  while (std::getline(lines, line)) {
    const auto pos = line.find("effect: ");
    if (pos == std::string::npos) continue;
    ++seen;
    CHECK(std::abs(std::stod(line.substr(pos + 8)) - 5.0) <= 1e-6);
  }
  CHECK(seen == 5);
  for (const char* f : {"unrestricted.csv", "restricted.csv", "iterative.csv", "inclusive.csv", "sp.csv", "gaps.csv"})
    CHECK(fs::exists(dir / "all" / f));
  CHECK(slurp(dir / "all" / "gaps.csv").rfind("time,gap_unrestricted,gap_restricted,gap_iterative,", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("estimate: restricted equals unrestricted with no spillover units") {
  const fs::path dir = scratch("coincide");
  const fs::path panel = embedded_effect_panel(dir);
  const std::string common = "estimate --panel " + panel.string() + " --config " + (dir / "config.json").string();
  REQUIRE(run(common + " --method restricted --out " + (dir / "r.csv").string()).code == 0);
  REQUIRE(run(common + " --method unrestricted --out " + (dir / "u.csv").string()).code == 0);
  const auto r = read_results(dir / "r.csv");
  const auto u = read_results(dir / "u.csv");
  REQUIRE(r.size() == u.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i].counterfactual == u[i].counterfactual);
    CHECK(r[i].gap == u[i].gap);
  }
  CHECK(run(common + " --method ridge --out " + (dir / "x.csv").string()).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("estimate: data errors exit 2") {
  const fs::path dir = scratch("data");
  write_file(dir / "panel.csv", "unit_id,time,outcome\nA,1,1\nA,2,2\nB,1,1\n");
  write_file(dir / "config.json", R"({"treated": "A", "treatment_time": 2, "spillover": []})");
  const auto r = run("estimate --panel " + (dir / "panel.csv").string() + " --config " +
                     (dir / "config.json").string() + " --method unrestricted --out " + (dir / "o.csv").string());
  CHECK(r.code == 2);
  CHECK(run("estimate --panel " + (dir / "missing.csv").string() + " --config " + (dir / "config.json").string() +
            " --out " + (dir / "o.csv").string()).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("estimate: singular inclusive system exits 3") {
  // Treated unit T and flagged unit S share their pre-period path, so each is
  // the other's perfect synthetic control and (I - W) is singular.
  const fs::path dir = scratch("singular");
  write_file(dir / "panel.csv",
             "unit_id,time,outcome\n"
             "T,1,1\nT,2,2\nT,3,1\nT,4,9\n"
             "S,1,1\nS,2,2\nS,3,1\nS,4,4\n"
             "X,1,50\nX,2,60\nX,3,50\nX,4,0\n"
             "Y,1,-50\nY,2,-60\nY,3,-50\nY,4,0\n");
  write_file(dir / "config.json", R"({"treated": "T", "treatment_time": 4, "spillover": ["S"]})");
  const auto r = run("estimate --panel " + (dir / "panel.csv").string() + " --config " +
                     (dir / "config.json").string() + " --method inclusive --out " + (dir / "o.csv").string());
  CHECK(r.code == 3);
  fs::remove_all(dir);
}

TEST_CASE("report: group-by gives one series per method over the grid values") {
  const fs::path dir = scratch("report");
  write_file(dir / "spec.json", R"({"dgp_cases": ["stationary", "i1"], "pre_periods": [10], "n_controls": [5],
    "treatment_effect": [3], "spill_ratio": [0.3]})");
  REQUIRE(run("simulate --spec " + (dir / "spec.json").string() + " --replications 2 --out " + (dir / "o").string()).code == 0);
  const std::string results = (dir / "o" / "mspe.csv").string();
  REQUIRE(run("report --results " + results + " --group-by spillover_ratio --out " + (dir / "m.csv").string()).code == 0);
  const std::string m = slurp(dir / "m.csv");
  CHECK(count_lines(m) == 1 + 2 * 5 * 4);
  REQUIRE(run("report --results " + results + " --group-by dgp_case --out " + (dir / "d.csv").string()).code == 0);
  CHECK(count_lines(slurp(dir / "d.csv")) == 1 + 5 * 2);
  REQUIRE(run("report --results " + results + " --group-by spillover_ratio --format svg --out " +
              (dir / "m.svg").string()).code == 0);
  CHECK(slurp(dir / "m.svg").rfind("<svg", 0) == 0);
  CHECK(run("report --results " + results + " --group-by colour --out " + (dir / "x.csv").string()).code == 1);
  fs::remove_all(dir);
}
