#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(UHR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  nlohmann::json j;
  in >> j;
  return j;
}

struct Cleanup {
  std::vector<std::string> paths;
  ~Cleanup() {
    for (const auto& p : paths) std::remove(p.c_str());
  }
  const char* add(const std::string& p) {
    paths.push_back(p);
    return paths.back().c_str();
  }
};

// Deterministic toy stream: y = 2 x1 - x2 + noise.
void write_toy_csv(const std::string& path, int n, bool singular = false) {
  std::mt19937 gen(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::ofstream out(path);
  out << "y,x1,x2\n";
  for (int i = 0; i < n; ++i) {
    const double x1 = normal(gen);
    const double x2 = singular ? 0.0 : normal(gen);
    const double y = 2.0 * x1 - x2 + 0.5 * normal(gen);
    out << y << ',' << x1 << ',' << x2 << '\n';
  }
}

const char* kToySchema = R"({
  "response": {"column": "y"},
  "predictors": [
    {"type": "numeric", "column": "x1"},
    {"type": "numeric", "column": "x2"}
  ],
  "intercept": false
})";

}  // namespace

TEST_CASE("bad invocations exit with the configuration code") {
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("fit --input no_such.csv --schema also_missing.json") == 2);
}

TEST_CASE("schema problems exit with the configuration code") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_sch.csv"), 50);
  write_file(tmp.add("cli_bad_schema.json"), "{ not json");
  CHECK(run_cli("fit --input cli_sch.csv --schema cli_bad_schema.json") == 2);
  write_file(tmp.add("cli_bad_spec.json"), R"({"n_t": 0, "b": 5})");
  CHECK(run_cli("simulate --spec cli_bad_spec.json --out cli_x.csv") == 2);
}

TEST_CASE("numerical failure exits with the numerical code") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_singular.csv"), 60, true);
  write_file(tmp.add("cli_schema_s.json"), kToySchema);
  CHECK(run_cli("fit --input cli_singular.csv --schema cli_schema_s.json "
                "--estimator uhr --batch-size 20") == 3);
}

TEST_CASE("unwritable outputs exit with the input-output code") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_io.csv"), 50);
  write_file(tmp.add("cli_schema_io.json"), kToySchema);
  CHECK(run_cli("fit --input cli_io.csv --schema cli_schema_io.json "
                "--batch-size 25 --report /no_such_dir/report.json") == 4);
}

TEST_CASE("with one batch the updating and pooled robust fits coincide") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_one.csv"), 200);
  write_file(tmp.add("cli_schema_1.json"), kToySchema);
  REQUIRE(run_cli("fit --input cli_one.csv --schema cli_schema_1.json "
                  "--estimator uhr --batch-size 500 --report cli_uhr.json") ==
          0);
  tmp.add("cli_uhr.json");
  REQUIRE(run_cli("fit --input cli_one.csv --schema cli_schema_1.json "
                  "--estimator ohr --batch-size 500 --report cli_ohr.json") ==
          0);
  tmp.add("cli_ohr.json");
  const auto uhr_coef = read_json("cli_uhr.json").at("coef");
  const auto ohr_coef = read_json("cli_ohr.json").at("coef");
  REQUIRE(uhr_coef.size() == 2);
  for (size_t j = 0; j < 2; ++j)
    CHECK(uhr_coef[j].get<double>() ==
          doctest::Approx(ohr_coef[j].get<double>()).epsilon(1e-10));
}

TEST_CASE("a simulated stream fits back to its coefficients") {
  Cleanup tmp;
  write_file(tmp.add("cli_sim.json"),
             R"({"theta0": [1, -1, 2, -2], "n_t": 200, "b": 20,
                 "error_case": 2, "seed": 5})");
  write_file(tmp.add("cli_schema_4.json"), R"({
    "response": {"column": "y"},
    "predictors": [
      {"type": "numeric", "column": "x1"},
      {"type": "numeric", "column": "x2"},
      {"type": "numeric", "column": "x3"},
      {"type": "numeric", "column": "x4"}
    ],
    "intercept": false
  })");
  REQUIRE(run_cli("simulate --spec cli_sim.json --out cli_stream.csv") == 0);
  tmp.add("cli_stream.csv");
  REQUIRE(run_cli("fit --input cli_stream.csv --schema cli_schema_4.json "
                  "--estimator uhr --batch-size 200 --test-split 0.2 "
                  "--report cli_fit.json") == 0);
  tmp.add("cli_fit.json");
  const auto report = read_json("cli_fit.json");
  const double expected[4] = {1, -1, 2, -2};
  for (size_t j = 0; j < 4; ++j)
    CHECK(report.at("coef")[j].get<double>() ==
          doctest::Approx(expected[j]).epsilon(0.15));
  CHECK(report.at("n_train").get<long>() == 3200);
  CHECK(report.at("oos").at("n_test").get<long>() == 800);
  CHECK(report.at("oos").at("mse").get<double>() > 0.0);
}

TEST_CASE("saving and resuming matches the single pass") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_state.csv"), 500);
  write_file(tmp.add("cli_schema_st.json"), kToySchema);
  REQUIRE(run_cli("fit --input cli_state.csv --schema cli_schema_st.json "
                  "--estimator uhr --batch-size 100 "
                  "--report cli_direct.json") == 0);
  tmp.add("cli_direct.json");
  REQUIRE(run_cli("state save --input cli_state.csv "
                  "--schema cli_schema_st.json --batch-size 100 --batches 2 "
                  "--snapshot cli_snap.json") == 0);
  tmp.add("cli_snap.json");
  REQUIRE(run_cli("state resume --input cli_state.csv "
                  "--schema cli_schema_st.json --batch-size 100 "
                  "--snapshot cli_snap.json --report cli_resumed.json") == 0);
  tmp.add("cli_resumed.json");
  const auto direct = read_json("cli_direct.json").at("coef");
  const auto resumed = read_json("cli_resumed.json").at("coef");
  for (size_t j = 0; j < 2; ++j)
    CHECK(resumed[j].get<double>() ==
          doctest::Approx(direct[j].get<double>()).epsilon(1e-12));
}

TEST_CASE("the study runner writes tabulated output") {
  Cleanup tmp;
  write_file(tmp.add("cli_exp.json"), R"({
    "which": "custom",
    "grid": [{"n_t": 50, "b": 4}],
    "cases": [{"error_case": 1}],
    "estimators": ["ols", "uhr"],
    "reps": 3,
    "base_seed": 7
  })");
  REQUIRE(run_cli("bench --spec cli_exp.json --out cli_results.csv") == 0);
  tmp.add("cli_results.csv");
  std::ifstream in("cli_results.csv");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.rfind("# ", 0) == 0);
  REQUIRE(std::getline(in, line));
  CHECK(line.rfind("N,n_t,b,", 0) == 0);
  int rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  CHECK(rows == 2);
}

TEST_CASE("bootstrap errors are reported for non-updating estimators") {
  Cleanup tmp;
  write_toy_csv(tmp.add("cli_boot.csv"), 100);
  write_file(tmp.add("cli_schema_b.json"), kToySchema);
  CHECK(run_cli("fit --input cli_boot.csv --schema cli_schema_b.json "
                "--estimator ols --batch-size 50 --bootstrap 8") == 2);
  REQUIRE(run_cli("fit --input cli_boot.csv --schema cli_schema_b.json "
                  "--estimator uhr --batch-size 50 --bootstrap 8 "
                  "--report cli_boot.json") == 0);
  tmp.add("cli_boot.json");
  const auto report = read_json("cli_boot.json");
  CHECK(report.at("bootstrap_se").size() == 2);
  CHECK(report.at("bootstrap_se")[0].get<double>() > 0.0);
}
