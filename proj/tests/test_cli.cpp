// Drives the paircorr binary end to end through a shell.

#include <gtest/gtest.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "paircorr/json_export.hpp"

namespace fs = std::filesystem;
using paircorr::Json;

namespace {

struct RunResult {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PAIRCORR_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

constexpr const char* kConfig = R"(n_trials = 3000
trial_duration = 20us
seed = 5
[rate]
field1 = 300
field2 = 300
[pairs]
rate = 1.0
[meta]
Delta = 20
)";

// Tag files record their own command line; everything else must match.
std::string without_command(std::string s) {
  const auto at = s.find("provenance.command");
  return at == std::string::npos ? s : s.erase(at, s.find('\n', at) - at);
}

// One scratch directory per test, removed afterwards.
class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("paircorr_cli_" + std::string(info->name()) + "_" + std::to_string(getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_text(dir_ / "run.cfg", kConfig);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Simulated tags plus a full analysis in <dir>/run.
  void simulate_and_analyze() {
    ASSERT_EQ(run("simulate " + path("run.cfg") + " -o " + path("tags.csv")).status, 0);
    const auto r = run("analyze " + path("tags.csv") + " --out-dir " + path("run") +
                       " --pairs cross --autos --gc2 --cs --bin 10 --tau-max 200ns --window 10us");
    ASSERT_EQ(r.status, 0) << r.output;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateIsDeterministic) {
  const auto a = run("simulate " + path("run.cfg") + " -o " + path("a.csv"));
  const auto b = run("simulate " + path("run.cfg") + " -o " + path("b.csv"));
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0) << b.output;
  const auto text = slurp(dir_ / "a.csv");
  EXPECT_NE(text.find("provenance.config_sha256"), std::string::npos);
  // Boolean comparisons: a failing EXPECT_EQ on large strings prints a diff.
  EXPECT_TRUE(without_command(text) == without_command(slurp(dir_ / "b.csv")));

  // More workers produce the same events.
  ASSERT_EQ(run("simulate " + path("run.cfg") + " -o " + path("c.csv") + " --workers 3").status, 0);
  EXPECT_TRUE(without_command(text) == without_command(slurp(dir_ / "c.csv")));
}

TEST_F(Cli, AnalyzeRerunIsByteIdentical) {
  simulate_and_analyze();
  const auto first = snapshot(dir_ / "run");
  for (const char* f : {"g2_1a2a.csv", "g2_1b2b.csv", "g2_1a1b.csv", "g2_2a2b.csv", "R1.csv", "R2.csv",
                        "cs_report.json", "manifest.json"})
    EXPECT_TRUE(first.count(f)) << f;
  EXPECT_FALSE(first.count("timing.json"));
  simulate_and_analyze();
  const auto second = snapshot(dir_ / "run");
  ASSERT_EQ(second.size(), first.size());
  for (const auto& [name, text] : first) EXPECT_TRUE(second.at(name) == text) << name;
}

TEST_F(Cli, OutputsCarryProvenance) {
  simulate_and_analyze();
  for (const auto& [name, text] : snapshot(dir_ / "run")) {
    if (name.ends_with(".csv")) {
      EXPECT_NE(text.find("# command="), std::string::npos) << name;
      EXPECT_NE(text.find("# input0_sha256="), std::string::npos) << name;
      EXPECT_NE(text.find("# info.meta.Delta=20"), std::string::npos) << name;
    } else {
      const auto j = Json::parse(text);
      EXPECT_TRUE(j.contains("provenance")) << name;
    }
  }
  ASSERT_EQ(run("fit " + path("run/g2_1a2a.csv") + " --model fast --out " + path("run/fast")).status, 0);
  EXPECT_TRUE(Json::parse(slurp(dir_ / "run/fast.json")).contains("provenance"));
  EXPECT_NE(slurp(dir_ / "run/fast_overlay.csv").find("# command="), std::string::npos);
}

TEST_F(Cli, CsNeedsEveryCrossPair) {
  ASSERT_EQ(run("simulate " + path("run.cfg") + " -o " + path("tags.csv")).status, 0);
  const auto r = run("analyze " + path("tags.csv") + " --out-dir " + path("run") + " --pairs 1a2b,1b2a --cs");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
}

TEST_F(Cli, DegenerateWavepacketIsRejected) {
  write_text(dir_ / "bad.cfg", std::string(kConfig) + "[wavepacket]\nf = 0\n");
  const auto r = run("simulate " + path("bad.cfg") + " -o " + path("tags.csv"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "tags.csv"));
}

TEST_F(Cli, FitModels) {
  simulate_and_analyze();
  auto r = run("fit " + path("run/g2_1a2a.csv") + " --model fast --out " + path("fast"));
  ASSERT_EQ(r.status, 0) << r.output;
  auto j = Json::parse(slurp(dir_ / "fast.json"));
  EXPECT_EQ(j["protocol"], "fast");
  EXPECT_GT(j["fixed_params"].size() + j["free_params"].size(), 0u);

  r = run("fit " + path("run/g2_1a2a.csv") + " --model fast --fix f=1 --out " + path("fixed"));
  ASSERT_EQ(r.status, 0) << r.output;
  j = Json::parse(slurp(dir_ / "fixed.json"));
  EXPECT_EQ(j["fixed_params"]["f"], 1.0);

  write_text(dir_ / "chi.csv", "od,chi\n0,1.0\n5,3.4\n10,5.7\n15,8.1\n20,10.3\n");
  r = run("fit " + path("chi.csv") + " --model chi-od --out " + path("chi"));
  ASSERT_EQ(r.status, 0) << r.output;
  j = Json::parse(slurp(dir_ / "chi.json"));
  EXPECT_EQ(j["fixed_params"]["b"], 1.0);

  r = run("fit " + path("run/g2_1a1b.csv") + " --model doppler-global --out " + path("dop"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("error:"), std::string::npos);

  r = run("fit " + path("run/g2_1a2a.csv") + " --model spline --out " + path("x"));
  EXPECT_NE(r.status, 0);
}

TEST_F(Cli, ReportOnRunDirectory) {
  simulate_and_analyze();
  ASSERT_EQ(run("fit " + path("run/g2_1a2a.csv") + " --model fast --out " + path("run/fast")).status, 0);
  const auto r = run("report " + path("run") + " --reference f=1.26,chi=5.3");
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = Json::parse(slurp(dir_ / "run/report.json"));
  EXPECT_TRUE(j.contains("provenance"));
  EXPECT_TRUE(fs::exists(dir_ / "run/report.txt"));
}

TEST_F(Cli, ReportListsMissingInputs) {
  fs::create_directories(dir_ / "empty");
  const auto r = run("report " + path("empty"));
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("manifest.json"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("cs_report.json"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("fit"), std::string::npos) << r.output;
}
