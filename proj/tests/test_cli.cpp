#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dagfit/graph.hpp"
#include "doctest.h"
#include "test_util.hpp"

namespace {

// Exit code of the tool run with the given arguments, output silenced.
int run_cli(const std::string& args) {
  std::string cmd = std::string(DAGFIT_BIN) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool same_bytes(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

struct VarianceTable {
  // (step, K, flag) -> (variance, bound)
  std::map<std::tuple<int, int, int>, std::pair<double, double>> cells;
};

VarianceTable parse_variance(const std::string& path) {
  VarianceTable t;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "step,trace_variance,bound,baseline_flag,K");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(ss, field, ',')) f.push_back(field);
    REQUIRE(f.size() == 5);
    t.cells[{std::stoi(f[0]), std::stoi(f[4]), std::stoi(f[3])}] = {std::stod(f[1]),
                                                                    std::stod(f[2])};
  }
  return t;
}

}  // namespace

TEST_CASE("generate writes the dataset bundle deterministically") {
  testutil::TempDir a("gen_a"), b("gen_b");
  std::string flags = "generate --n 6 --degree 1 --mechanism linear --n-obs 120 "
                      "--n-int 15 --seed 21 --out ";
  CHECK(run_cli(flags + a.str()) == 0);
  CHECK(run_cli(flags + b.str()) == 0);

  for (const char* name :
       {"samples.csv", "regimes.csv", "interventions.json", "truth.json", "truth.csv"}) {
    CHECK(std::filesystem::exists(a.file(name)));
    CHECK(same_bytes(a.file(name), b.file(name)));
  }
  CHECK(std::filesystem::exists(a.file("manifest.json")));
  CHECK(dagfit::is_dag(dagfit::load_graph_json(a.file("truth.json"))));
}

TEST_CASE("generate rejects conflicting density flags") {
  testutil::TempDir tmp("gen_bad");
  CHECK(run_cli("generate --n 6 --degree 1 --edge-prob 0.2 --seed 1 --out " + tmp.str()) ==
        2);
  // Omitting both flags is fine: degree defaults to 1.
  CHECK(run_cli("generate --n 6 --seed 1 --out " + tmp.str()) == 0);
}

TEST_CASE("fit, eval, and replay work end to end") {
  testutil::TempDir data("flow_data"), fit_a("flow_fit_a"), fit_b("flow_fit_b"),
      ev("flow_eval");
  REQUIRE(run_cli("generate --n 5 --degree 1 --mechanism linear --n-obs 250 --n-int 25 "
                  "--seed 33 --out " +
                  data.str()) == 0);

  std::string fit_flags = "fit --data " + data.str() +
                          " --estimator analytic --steps 250 --lr 0.02 --seed 5 "
                          "--threads 2 --out ";
  CHECK(run_cli(fit_flags + fit_a.str()) == 0);
  for (const char* name : {"checkpoint.json", "graph.json", "graph.csv", "history.csv",
                           "manifest.json"})
    CHECK(std::filesystem::exists(fit_a.file(name)));
  CHECK(dagfit::is_dag(dagfit::load_graph_json(fit_a.file("graph.json"))));

  // Same seed and thread count reproduce every artifact byte for byte.
  CHECK(run_cli(fit_flags + fit_b.str()) == 0);
  for (const char* name : {"checkpoint.json", "graph.json", "graph.csv", "history.csv"})
    CHECK(same_bytes(fit_a.file(name), fit_b.file(name)));

  CHECK(run_cli("eval --est " + fit_a.file("graph.json") + " --truth " +
                data.file("truth.json") + " --checkpoint " + fit_a.file("checkpoint.json") +
                " --out " + ev.str()) == 0);
  std::string metrics = slurp(ev.file("metrics.json"));
  CHECK(metrics.find("\"shd\"") != std::string::npos);
  CHECK(metrics.find("\"f1\"") != std::string::npos);
  CHECK(metrics.find("\"kendall_tau\"") != std::string::npos);
}

TEST_CASE("eval of the truth against itself is perfect") {
  testutil::TempDir data("self_data"), ev("self_eval");
  REQUIRE(run_cli("generate --n 5 --degree 1 --mechanism linear --n-obs 60 --n-int 10 "
                  "--seed 44 --out " +
                  data.str()) == 0);
  CHECK(run_cli("eval --est " + data.file("truth.json") + " --truth " +
                data.file("truth.json") + " --out " + ev.str()) == 0);
  std::string metrics = slurp(ev.file("metrics.json"));
  CHECK(metrics.find("\"shd\": 0") != std::string::npos);
  CHECK(metrics.find("\"f1\": 1") != std::string::npos);
}

TEST_CASE("usage and data errors use distinct exit codes") {
  testutil::TempDir data("err_data"), out("err_out");
  REQUIRE(run_cli("generate --n 4 --degree 1 --mechanism linear --n-obs 50 --n-int 5 "
                  "--seed 3 --out " +
                  data.str()) == 0);

  CHECK(run_cli("eval --est " + data.file("truth.json") + " --out " + out.str()) == 2);
  CHECK(run_cli("eval --est " + data.file("truth.json") + " --truth /nosuch/truth.json "
                "--out " +
                out.str()) == 2);
  CHECK(run_cli("fit --data /nonexistent_dir --out " + out.str()) == 3);
  CHECK(run_cli("nonsense") == 2);

  // Corrupt one samples row so the loader sees a short record.
  std::string samples = slurp(data.file("samples.csv"));
  std::size_t cut = samples.rfind(',');
  std::ofstream(data.file("samples.csv"), std::ios::binary)
      << samples.substr(0, cut) << "\n";
  CHECK(run_cli("fit --data " + data.str() + " --steps 20 --out " + out.str()) == 3);
}

TEST_CASE("config file values are overridden by flags") {
  testutil::TempDir data("cfg_data"), out("cfg_out");
  REQUIRE(run_cli("generate --n 4 --degree 1 --mechanism linear --n-obs 120 --n-int 12 "
                  "--seed 8 --out " +
                  data.str()) == 0);

  std::ofstream(data.file("config.json"))
      << R"({"estimator": "analytic", "steps": 60, "learning_rate": 0.02})";
  CHECK(run_cli("fit --data " + data.str() + " --config " + data.file("config.json") +
                " --steps 40 --seed 2 --out " + out.str()) == 0);
  std::string manifest = slurp(out.file("manifest.json"));
  CHECK(manifest.find("\"steps\": 40") != std::string::npos);
  CHECK(manifest.find("\"estimator\": \"analytic\"") != std::string::npos);
}

TEST_CASE("variance subcommand emits labeled honest series") {
  testutil::TempDir data("var_data"), out("var_out");
  REQUIRE(run_cli("generate --n 6 --degree 1 --mechanism linear --n-obs 150 --n-int 15 "
                  "--seed 12 --out " +
                  data.str()) == 0);

  CHECK(run_cli("variance --data " + data.str() +
                " --K 10,25 --repeats 8 --steps 4 --every 2 --batch-size 32 --seed 4 "
                "--out " +
                out.str()) == 0);
  VarianceTable t = parse_variance(out.file("variance.csv"));

  // Two K series, both flags, steps {0, 2, 4}.
  CHECK(t.cells.size() == 12);
  for (const auto& [key, val] : t.cells) {
    auto [step, k, flag] = key;
    CHECK((k == 10 || k == 25));
    CHECK(val.first <= val.second + 1e-9);  // bound holds on every row
    if (flag == 1) {
      auto raw = t.cells.find({step, k, 0});
      REQUIRE(raw != t.cells.end());
      CHECK(val.first <= raw->second.first + 1e-12);  // baseline no worse
    }
  }
}
