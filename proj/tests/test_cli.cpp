#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "json.hpp"
#include "stratalloc/ingestion.hpp"
#include "stratalloc/objectives.hpp"
#include "stratalloc/solver.hpp"

using namespace stratalloc;
namespace fs = std::filesystem;

namespace {

const std::string kData = STRATALLOC_DATA_DIR;

struct Outcome {
  int status = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(STRATALLOC_CLI) + " " + args + " 2>&1";
  Outcome r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

nlohmann::json json_of(const Outcome& r) {
  EXPECT_EQ(r.status, 0) << r.out;
  return nlohmann::json::parse(r.out);
}

std::vector<long> allocation_of(const nlohmann::json& doc) {
  std::vector<long> n;
  for (const auto& row : doc.at("allocation")) n.push_back(row.at("n_h").get<long>());
  return n;
}

}  // namespace

TEST(Cli, BasalAreaSolveReproducesPublishedRow) {
  const auto doc = json_of(run("solve --data table1 --characteristic BA --total-n 1000 --format json"));
  const std::vector<long> published{10, 94, 144, 136, 191, 113, 81, 109, 122};
  const auto got = allocation_of(doc);
  ASSERT_EQ(got.size(), published.size());
  for (std::size_t h = 0; h < got.size(); ++h) EXPECT_LE(std::abs(got[h] - published[h]), 1);
  EXPECT_EQ(doc.at("solver").at("bound_gap").get<double>(), 0.0);
  EXPECT_TRUE(doc.contains("timestamp"));
}

TEST(Cli, ToySolveMatchesEnumeration) {
  const auto doc = json_of(run("solve --data toy_h2 --model E --total-n 8 --format json"));
  const SurveyDesign d = load_design_json(kData + "/toy_h2.json");
  ModelSpec s;
  s.model = StochasticModel::e;
  const auto best = exhaustive_oracle(build_objective(d, s), ConstraintSet::total_size(d, 8));
  EXPECT_EQ(allocation_of(doc), best.allocation.values());
}

TEST(Cli, ReportFileEqualsStdout) {
  const auto path = fs::temp_directory_path() / "stratalloc_cli_report.txt";
  const Outcome r = run("solve --data toy_h2 --model v --total-n 8 --report " + path.string());
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream in(path);
  std::stringstream file;
  file << in.rdbuf();
  EXPECT_EQ(file.str(), r.out);
  EXPECT_NE(r.out.find("versions:"), std::string::npos);
  EXPECT_NE(r.out.find("seed: 1"), std::string::npos);
  fs::remove(path);
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("solve --data toy_h2 --model p --total-n 8").status, 2);
  EXPECT_EQ(run("solve --data table1 --model v --total-n 1000").status, 2);
  EXPECT_NE(run("solve --data toy_h2 --model nope").status, 0);
  EXPECT_NE(run("").status, 0);
}

TEST(Cli, DataErrorsExitWithOne) {
  const Outcome r = run("solve --data no_such_dataset --total-n 8");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("not found"), std::string::npos);
  EXPECT_EQ(run("solve --data toy_h2 --total-n 1").status, 1);
}

TEST(Cli, SimulateXiCensus) {
  const auto doc = json_of(run("simulate lemma1 --N 40 --n 40 --reps 250 --format json"));
  EXPECT_TRUE(doc.at("census").get<bool>());
  for (const auto& row : doc.at("empirical_cov"))
    for (const auto& v : row) EXPECT_LT(std::abs(v.get<double>()), 1e-20);
}

TEST(Cli, SimulateHajekCanonical) {
  const auto doc = json_of(run("simulate hajek --N 300 --n 30 --format json"));
  EXPECT_GE(doc.at("condition").at("ratio").get<double>(), 1.0 - 1e-12);
  EXPECT_TRUE(doc.at("condition").at("satisfied").get<bool>());
}

TEST(Cli, SimulateFromDatasetStratum) {
  const Outcome r = run("simulate clt --data table1 --stratum 1 --N 500 --n 50 --reps 500");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("alternative_cov"), std::string::npos);
}

TEST(Cli, VerifyOnlyGroup) {
  const Outcome r = run("verify --only matrix-kit");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("PASS [3]"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(run("verify --only nonsense").status, 0);
}

TEST(Cli, VerifyFailsOnCorruptedData) {
  const fs::path dir = fs::temp_directory_path() / "stratalloc_corrupt";
  fs::create_directories(dir);
  {
    std::ifstream in(kData + "/table1.csv");
    std::ofstream out(dir / "table1.csv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("1,11131,", 0) == 0) line = "1,11131,3557,28980,554830";
      out << line << "\n";
    }
  }
  const Outcome r = run("verify --only neyman --data-dir " + dir.string());
  EXPECT_EQ(r.status, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL [1]"), std::string::npos);
  fs::remove_all(dir);
}
