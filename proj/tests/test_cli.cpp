#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli/commands.hpp"
#include "cli/io.hpp"
#include "lassogeom/partition.hpp"
#include "lassogeom/radial.hpp"

using namespace lassogeom;
using namespace lassogeom::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("lassogeom_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  int run_cli(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run(args, out, err);
  }

  std::string gen(bool planted = false, const std::string& seed = "1") {
    std::vector<std::string> args = {"--seed", seed, "--out", dir.string(), "gen", "--n", "4", "--p", "7"};
    if (planted) args.push_back("--planted");
    EXPECT_EQ(run_cli(args), kExitOk) << err.str();
    return (dir / "problem.json").string();
  }

  fs::path dir;
  std::ostringstream out, err;
};

}  // namespace

TEST_F(Cli, GenWritesProblemAndManifest) {
  const std::string path = gen();
  const ProblemInstance prob = read_problem(path);
  EXPECT_EQ(prob.A, gen_bernoulli_matrix(4, 7, 1).A);
  EXPECT_TRUE(prob.y.isZero(0.0));
  const auto m = nlohmann::json::parse(slurp(dir / "gen.manifest.json"));
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seed"], 1);
  EXPECT_TRUE(m.contains("argv"));
  EXPECT_TRUE(m.contains("config"));
  EXPECT_TRUE(m.contains("version"));
  ASSERT_EQ(m["outputs"].size(), 1u);
  const ProblemInstance planted = read_problem(gen(true));
  EXPECT_EQ(planted.y, planted_observation(planted.A, 1));
  EXPECT_GT(planted.y.norm(), 0.0);
}

TEST_F(Cli, PartitionEstimateInsideBounds) {
  const std::string path = gen();
  ASSERT_EQ(run_cli({"--seed", "2", "--out", dir.string(), "--json", "partition", "--problem", path, "--n-samples",
                     "100000"}),
            kExitOk)
      << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "partition.json"));
  const double z = j["polar"]["z"], lo = j["polar"]["z_min"], hi = j["polar"]["z_max"];
  EXPECT_LE(lo, z);
  EXPECT_LE(z, hi);
  EXPECT_EQ(z, z_polar_mc(read_problem(path), 100000, 2).z);
  EXPECT_TRUE(j.contains("naive"));
  EXPECT_EQ(nlohmann::json::parse(out.str()), j);
}

TEST_F(Cli, SolveOnZeroObservation) {
  const std::string path = gen();
  ASSERT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", path, "--n-samples", "10000"}), kExitOk)
      << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "solve.json"));
  for (const char* m : {"polar", "fista"}) {
    for (const auto& v : j[m]["x"]) EXPECT_EQ(v.get<double>(), 0.0) << m;
  }
  EXPECT_TRUE(j["zero_lasso_sufficient"].get<bool>());
}

TEST_F(Cli, SolvePlantedFistaBelowPolar) {
  const std::string path = gen(true);
  ASSERT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", path}), kExitOk) << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "solve.json"));
  EXPECT_LE(j["fista"]["objective"].get<double>(), j["polar"]["objective"].get<double>() + 1e-6);
}

TEST_F(Cli, DiagnoseSummaryAndSeries) {
  const std::string path = gen();
  ASSERT_EQ(run_cli({"--out", dir.string(), "diagnose", "--problem", path, "--sampler", "rw", "--iters", "10000",
                     "--emit-series", "series.csv", "--thin", "10"}),
            kExitOk)
      << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "diagnose.json"));
  const double rate = j["satisfaction_rate"];
  EXPECT_GE(rate, 0.0);
  EXPECT_LE(rate, 1.0);
  EXPECT_EQ(j["mean"].size(), 7u);
  const auto rows = read_csv(dir / "series.csv");
  ASSERT_EQ(rows.front(), (std::vector<std::string>{"t", "norm_x", "q_times_r_theta", "criterion"}));
  EXPECT_EQ(rows.size(), 1u + 1u + 1000u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const bool ok = std::stod(rows[i][1]) <= std::stod(rows[i][2]);
    EXPECT_EQ(rows[i][3], ok ? "1" : "0");
  }
}

TEST_F(Cli, DiagnoseIndependentReportsTv) {
  const std::string path = gen();
  ASSERT_EQ(run_cli({"--out", dir.string(), "diagnose", "--problem", path, "--sampler", "is", "--iters", "1000",
                     "--z", "2.2142"}),
            kExitOk)
      << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "diagnose.json"));
  EXPECT_NEAR(j["tv_constant"].get<double>(), 0.9827, 5e-5);
}

TEST_F(Cli, CurvesColumns) {
  ASSERT_EQ(run_cli({"--out", dir.string(), "curves", "--beta-min", "0.4987", "--beta-max", "45", "--steps", "200"}),
            kExitOk)
      << err.str();
  const auto rows = read_csv(dir / "curves.csv");
  ASSERT_EQ(rows.size(), 201u);
  EXPECT_EQ(rows[0][0], "beta");
  EXPECT_EQ(rows[0].back(), "mode_times_l1");
  EXPECT_NEAR(std::stod(rows[1].back()), 1.1035, 5e-5);
  EXPECT_EQ(std::stod(rows[200][0]), 45.0);
  double prev = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double beta = std::stod(rows[i][0]);
    EXPECT_EQ(rows[i][5], beta <= 13.8 ? "1" : "0");
    const double m = std::stod(rows[i].back());
    EXPECT_GT(m, prev);
    EXPECT_LT(m, 6.0);
    EXPECT_EQ(std::stod(rows[i][1]), phi_beta(beta, 0.0, 0.0, 7));
    prev = m;
  }
}

TEST_F(Cli, TablesShapeAndValues) {
  ASSERT_EQ(run_cli({"--out", dir.string(), "tables", "--n-samples", "20000", "--iters", "20000"}), kExitOk)
      << err.str();
  const auto t2 = read_csv(dir / "table2.csv");
  ASSERT_EQ(t2.size(), 8u);
  EXPECT_EQ(t2[1], (std::vector<std::string>{"2", "0.6672"}));
  EXPECT_EQ(t2[2][1], "0.9446");
  EXPECT_EQ(t2[5], (std::vector<std::string>{"4", "0.9999"}));
  const auto t1 = read_csv(dir / "table1.csv");
  ASSERT_EQ(t1.size(), 3u);
  EXPECT_EQ(t1[1][0], "polar");
  EXPECT_EQ(t1[2][0], "fista");
  EXPECT_EQ(t1[1].size(), 9u);
  EXPECT_LE(std::stod(t1[2][8]), std::stod(t1[1][8]) + 1e-6);
  const auto t3 = read_csv(dir / "table3.csv");
  ASSERT_EQ(t3.size(), 3u);
  for (int r = 1; r <= 2; ++r) {
    ASSERT_EQ(t3[r].size(), 13u);
    double sq = 0.0;
    for (int i = 1; i <= 7; ++i) sq += std::stod(t3[r][i]) * std::stod(t3[r][i]);
    EXPECT_NEAR(std::sqrt(sq), std::stod(t3[r][8]), 1e-12);
  }
}

TEST_F(Cli, ReplayIsByteIdentical) {
  const std::string path = gen(true, "5");
  const std::vector<std::vector<std::string>> runs = {
      {"--seed", "3", "--out", dir.string(), "partition", "--problem", path, "--n-samples", "20000", "--shift"},
      {"--out", dir.string(), "curves", "--steps", "50"},
      {"--seed", "4", "--out", dir.string(), "diagnose", "--problem", path, "--iters", "3000", "--emit-series", "s.csv"},
      {"--seed", "6", "--out", dir.string(), "solve", "--problem", path, "--n-samples", "5000"},
  };
  for (const auto& args : runs) {
    ASSERT_EQ(run_cli(args), kExitOk) << err.str();
  }
  std::map<fs::path, std::string> before;
  for (const auto& e : fs::directory_iterator(dir)) before[e.path()] = slurp(e.path());
  for (const char* cmd : {"partition", "curves", "diagnose", "solve"}) {
    const fs::path m = dir / (std::string(cmd) + ".manifest.json");
    ASSERT_EQ(run_cli({"--replay", m.string()}), kExitOk) << cmd << err.str();
  }
  for (const auto& [p, text] : before) EXPECT_EQ(slurp(p), text) << p;
}

TEST_F(Cli, CsvUsesLfOnly) {
  ASSERT_EQ(run_cli({"--out", dir.string(), "curves", "--steps", "10"}), kExitOk);
  const std::string text = slurp(dir / "curves.csv");
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
  CsvWriter w({"a", "b"});
  w.row({"1", "2"});
  EXPECT_EQ(w.str(), "a,b\n1,2\n");
  EXPECT_THROW(w.row({"1"}), std::exception);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--out", dir.string(), "curves", "--beta-min", "5", "--beta-max", "2"}), kExitFlag);
  EXPECT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", "x.json", "--method", "lars"}), kExitFlag);
  EXPECT_EQ(run_cli({"--no-such-flag"}), kExitFlag);
  EXPECT_EQ(run_cli({}), kExitFlag);
  EXPECT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", (dir / "missing.json").string()}), kExitIo);
  EXPECT_EQ(run_cli({"--replay", (dir / "missing.manifest.json").string()}), kExitIo);
  const std::string path = gen(true);
  EXPECT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", path, "--method", "fista", "--max-iter", "1"}),
            kExitNumeric);
  EXPECT_NE(err.str().find("numeric"), std::string::npos);
  std::ofstream(dir / "bad.json") << "{\"n\": 2, \"p\": 3, \"A\": [1, 2]}";
  EXPECT_EQ(run_cli({"--out", dir.string(), "solve", "--problem", (dir / "bad.json").string()}), kExitIo);
}

TEST(ProblemJson, NestedAndFlatRows) {
  const nlohmann::ordered_json flat = nlohmann::ordered_json::parse(R"({"n":2,"p":3,"A":[1,2,3,4,5,6],"y":[1,-1]})");
  const nlohmann::ordered_json nested =
      nlohmann::ordered_json::parse(R"({"n":2,"p":3,"A":[[1,2,3],[4,5,6]],"y":[1,-1]})");
  const ProblemInstance a = problem_from_json(flat);
  const ProblemInstance b = problem_from_json(nested);
  EXPECT_EQ(a.A, b.A);
  EXPECT_EQ(a.A(1, 0), 4.0);
  EXPECT_EQ(a.A(0, 2), 3.0);
  EXPECT_EQ(a.y(1), -1.0);
  const ProblemInstance c = problem_from_json(problem_to_json(a));
  EXPECT_EQ(c.A, a.A);
  EXPECT_EQ(c.y, a.y);
  EXPECT_THROW(problem_from_json(nlohmann::ordered_json::parse(R"({"n":2,"p":3,"A":[1,2,3]})")), IoError);
}

TEST(Format, RoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 2.2142, 1e-300, -7.25e12}) EXPECT_EQ(std::stod(fmt(v)), v);
  EXPECT_EQ(fmt_fixed(0.94456, 4), "0.9446");
}
