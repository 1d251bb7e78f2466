#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abmsim/cli/cli.hpp"

namespace fs = std::filesystem;
using abmsim::cli::dispatch;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("abmsim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(config()) << R"({"horizon_steps": 30, "population": {"size": 600},
      "epi": {"R0": 3.0, "initial_infected_fraction": 0.02}})";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string config() const { return (dir_ / "c.json").string(); }
  std::string out(const char* name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateTwiceGivesIdenticalFiles) {
  auto a = call({"simulate", "--config", config(), "--seed", "7", "--out", out("a")});
  auto b = call({"simulate", "--config", config(), "--seed", "7", "--out", out("b"), "--threads", "1"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"trajectory_daily.csv", "trajectory_monthly.csv", "trajectory.meta.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const auto info = json::parse(slurp(dir_ / "a" / "run.json"));
  EXPECT_EQ(info["seed"], 7);
  EXPECT_TRUE(info.contains("config_hash"));
  EXPECT_TRUE(info.contains("version"));
  EXPECT_EQ(info["config"]["horizon_steps"], 30);
}

TEST_F(Cli, MissingConfigIsUsageError) {
  auto r = call({"simulate", "--seed", "7", "--out", out("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--config"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(Cli, SeedIsMandatoryForRuns) {
  EXPECT_EQ(call({"simulate", "--config", config(), "--out", out("x")}).code, 2);
  EXPECT_EQ(call({"analyze", "poll", "--config", config(), "--out", out("x"), "--query", "{}"}).code, 2);
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  auto r = call({"simulate", "--config", config(), "--seed", "1", "--out", out("x"), "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_EQ(call({}).code, 2);
}

TEST_F(Cli, CounterfactualReportCarriesBothHashes) {
  auto r = call({"analyze", "counterfactual", "--config", config(), "--seed", "3", "--patch", R"({"epi.R0": 5.5})",
                 "--seeds", "2", "--out", out("cf")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(slurp(dir_ / "cf" / "counterfactual.json"));
  EXPECT_NE(rep["baseline_hash"], rep["patched_hash"]);
  EXPECT_EQ(rep["runs"].size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "cf" / "counterfactual_deltas.csv"));
}

TEST_F(Cli, BadPatchIsDomainError) {
  auto r = call({"simulate", "--config", config(), "--seed", "3", "--patch", R"({"epi.nothing": 1})", "--out",
                 out("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("epi.nothing"), std::string::npos);
}

TEST_F(Cli, ValidateEchoesDefaults) {
  auto r = call({"validate", config()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["epi"]["infectious_period"], 7);
  EXPECT_EQ(j["population"]["size"], 600);
}

TEST_F(Cli, ValidateListsEveryError) {
  std::ofstream(dir_ / "bad.json") << R"({"epi": {"beta": -1, "latent_period": -2}})";
  auto r = call({"validate", (dir_ / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/epi/beta"), std::string::npos);
  EXPECT_NE(r.err.find("/epi/latent_period"), std::string::npos);
  EXPECT_EQ(call({"validate", (dir_ / "missing.json").string()}).code, 1);
}

TEST_F(Cli, ProspectiveAndPollWriteReports) {
  std::ofstream(dir_ / "v.json") << R"({"horizon_steps": 60, "population": {"size": 500},
    "execution": {"mode": "mean_field"},
    "epi": {"R0": 2.0, "mortality": 0.02},
    "vaccine": {"enabled": true, "daily_supply": 10, "dose_gap": 21}})";
  auto p = call({"analyze", "prospective", "--config", (dir_ / "v.json").string(), "--seed", "1", "--protocol-b",
                 R"({"dose_gap": 81})", "--grid", "0.5,0.9", "--out", out("pro")});
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(json::parse(slurp(dir_ / "pro" / "fitness.json"))["points"].size(), 2u);
  auto q = call({"analyze", "poll", "--config", config(), "--seed", "1", "--query",
                 R"({"group_by": ["gender"], "metric": "infection_rate"})", "--out", out("poll")});
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_EQ(json::parse(slurp(dir_ / "poll" / "poll.json"))["rows"].size(), 2u);
  auto bad = call({"analyze", "poll", "--config", config(), "--seed", "1", "--query", R"({"metric": "joy"})",
                   "--out", out("poll2")});
  EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, CalibrateFromConfig) {
  auto r = call({"calibrate", "--config", config(), "--seed", "2", "--from-config", "--epochs", "3", "--hidden", "4",
                 "--out", out("cal")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = json::parse(slurp(dir_ / "cal" / "calibration.json"));
  EXPECT_EQ(model["history"].size(), 4u);
  EXPECT_EQ(model["net"]["hidden"], 4);
  EXPECT_TRUE(fs::exists(dir_ / "cal" / "fitted_daily.csv"));
}
