#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evpr/event_io.hpp"
#include "../unit/test_util.hpp"

namespace evpr {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    const std::string cmd = std::string(EVPR_MAKE_FIXTURE) + " " + (dir_->path() / "ref.evb").string() + " " +
                            (dir_->path() / "qry.evb").string() + " 40";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
  }
  static void TearDownTestSuite() { delete dir_; }

  /// Runs the CLI; returns the exit code and keeps stdout/stderr in files.
  int evpr(const std::string& args) {
    const std::string cmd = std::string(EVPR_CLI) + " " + args + " >" + (*dir_ / "stdout").string() + " 2>" +
                            (*dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (*dir_ / name).string(); }
  nlohmann::json error_json() const { return nlohmann::json::parse(slurp(*dir_ / "stderr")); }

  static testing::TempDir* dir_;
};

testing::TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, BuildQueryEvalSelfRetrieval) {
  ASSERT_EQ(evpr("build " + path("ref.evb") + " -o " + path("db")), 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(*dir_ / "stdout"))["frames"], 40);
  ASSERT_EQ(evpr("query " + path("ref.evb") + " --db " + path("db") + " -o " + path("self.jsonl")), 0);
  ASSERT_EQ(evpr("eval " + path("self.jsonl") + " --index-gt --tolerance 0.5 --ks 1,5,10 -r " + path("r.json")), 0);
  const auto report = nlohmann::json::parse(slurp(*dir_ / "r.json"));
  EXPECT_EQ(report["recall"]["1"], 1.0);
  std::vector<std::string> keys;
  for (const auto& [k, v] : report["recall"].items()) keys.push_back(k);
  EXPECT_EQ(keys.size(), 3u);
  EXPECT_TRUE(report["recall"].contains("1") && report["recall"].contains("5") && report["recall"].contains("10"));
}

TEST_F(Cli, ThreadCountDoesNotChangeResults) {
  ASSERT_EQ(evpr("build " + path("ref.evb") + " -o " + path("db_t")), 0);
  for (const char* mode : {"global", "keypoint", "keypoint+depth"}) {
    const std::string m = std::string(" --mode ") + mode;
    ASSERT_EQ(evpr("--threads 1" + m + " query " + path("qry.evb") + " --db " + path("db_t") + " -o " + path("a.jsonl")), 0);
    ASSERT_EQ(evpr("--threads 4" + m + " query " + path("qry.evb") + " --db " + path("db_t") + " -o " + path("b.jsonl")), 0);
    ASSERT_EQ(evpr("--threads 2" + m + " query " + path("qry.evb") + " --db " + path("db_t") + " --online -o " +
                   path("c.jsonl")),
              0);
    const auto a = slurp(*dir_ / "a.jsonl");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(*dir_ / "b.jsonl")) << mode;
    EXPECT_EQ(a, slurp(*dir_ / "c.jsonl")) << mode;
  }
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(evpr("--set gamma=0.5 build " + path("ref.evb") + " -o " + path("x")), 2);
  EXPECT_EQ(error_json()["category"], "config");
  EXPECT_EQ(evpr("frobnicate"), 2);
  EXPECT_EQ(error_json()["error"], "usage");
  EXPECT_EQ(evpr("build " + path("missing.evb") + " -o " + path("x")), 2);
}

TEST_F(Cli, DataErrorsExitThree) {
  { std::ofstream(*dir_ / "bad.evb", std::ios::binary) << "EVPRgarbage"; }
  EXPECT_EQ(evpr("build " + path("bad.evb") + " -o " + path("x")), 3);
  const auto err = error_json();
  EXPECT_EQ(err["category"], "data");
  EXPECT_TRUE(err.contains("message"));
  EXPECT_EQ(evpr("query " + path("qry.evb") + " --db " + path("nowhere")), 3);
  EXPECT_EQ(error_json()["error"], "MissingArtifact");
}

TEST_F(Cli, ManifestMismatchExitsBeforeQuerying) {
  ASSERT_EQ(evpr("build " + path("ref.evb") + " -o " + path("db_m")), 0);
  EXPECT_NE(evpr("--set gamma=3 query " + path("qry.evb") + " --db " + path("db_m") + " -o " + path("m.jsonl")), 0);
  EXPECT_EQ(error_json()["error"], "ManifestMismatch");
  EXPECT_TRUE(!std::filesystem::exists(*dir_ / "m.jsonl") || slurp(*dir_ / "m.jsonl").empty());
}

TEST_F(Cli, ProviderErrorsExitFour) {
  EXPECT_EQ(evpr("--set global_provider=subprocess:false build " + path("ref.evb") + " -o " + path("x")), 4);
  EXPECT_EQ(error_json()["category"], "provider");
}

TEST_F(Cli, BenchWithNoQueriesIsEmpty) {
  ASSERT_EQ(evpr("build " + path("ref.evb") + " -o " + path("db_b")), 0);
  EventStream empty;
  empty.geometry = {128, 96};
  write_binary(empty, *dir_ / "empty.evb");
  ASSERT_EQ(evpr("bench " + path("empty.evb") + " --db " + path("db_b") + " -o " + path("bench.json")), 0);
  const auto j = nlohmann::json::parse(slurp(*dir_ / "bench.json"));
  EXPECT_TRUE(j["per_query"].empty());
  EXPECT_EQ(j["summary"]["measured"], 0);
}

TEST_F(Cli, ExportAndConvertGps) {
  ASSERT_EQ(evpr("build " + path("ref.evb") + " -o " + path("db_e")), 0);
  ASSERT_EQ(evpr("export --db " + path("db_e") + " --query " + path("qry.evb") + " -o " + path("d.csv")), 0);
  std::istringstream csv(slurp(*dir_ / "d.csv"));
  std::string line;
  size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 40u);

  { std::ofstream(*dir_ / "gps.csv") << "id,lat,lon\n0,-27.47,153.02\n1,-27.471,153.02\n"; }
  ASSERT_EQ(evpr("convert-gps " + path("gps.csv") + " -o " + path("local.csv")), 0);
  const auto local = slurp(*dir_ / "local.csv");
  EXPECT_EQ(local.rfind("id,x,y\n0,0,0\n", 0), 0u) << local;
}

}  // namespace
}  // namespace evpr
