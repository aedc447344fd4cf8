#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status = -1;
  std::string output;  // stdout and stderr
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(MFCVAR_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mfcvar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Small, fast variant of the first example.
const std::string kSmall =
    "--preset example1-corr09 --set surrogate.training_size=30 --set surrogate.quadrature=20000 "
    "--set risk.samples=2000 --set benchmark.samples=2000 --set benchmark.trials=2 ";

}  // namespace

TEST_F(Cli, TableHeader) {
  const Outcome o = run_cli("run " + kSmall + "--trials 1 --method mcs --out " + path("out"));
  ASSERT_EQ(o.status, 0) << o.output;
  const std::string table = slurp(path("out/table.csv"));
  EXPECT_EQ(table.substr(0, table.find('\n')), "method,cvar_estimate,mrd_pct,nrmsd_pct,hf,lf_model,lf_surrogate");
  EXPECT_NE(table.find("\nmcs,"), std::string::npos);
  EXPECT_NE(table.find("\nbenchmark,"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("out/report.json")));
  EXPECT_TRUE(fs::exists(path("out/timing.json")));
}

TEST_F(Cli, RepeatedRunIsByteIdentical) {
  const std::string args = "run " + kSmall + "--trials 1 --method surrogate_mcs --out ";
  ASSERT_EQ(run_cli(args + path("a")).status, 0);
  ASSERT_EQ(run_cli(args + path("b") + " --threads 2").status, 0);
  EXPECT_EQ(slurp(path("a/report.json")), slurp(path("b/report.json")));
  EXPECT_EQ(slurp(path("a/table.csv")), slurp(path("b/table.csv")));
}

TEST_F(Cli, PredictEmptyPointsGivesHeaderOnly) {
  ASSERT_EQ(run_cli("fit " + kSmall + "-o " + path("s.json")).status, 0);
  std::ofstream(path("empty.csv")) << "x1,x2\n";
  const Outcome o = run_cli("predict --artifact " + path("s.json") + " --points " + path("empty.csv"));
  EXPECT_EQ(o.status, 0) << o.output;
  EXPECT_EQ(o.output, "x1,x2,mean,variance,epsilon\n");
}

TEST_F(Cli, PredictAtTrainingPointHasZeroVariance) {
  ASSERT_EQ(run_cli("fit " + kSmall + "-o " + path("s.json")).status, 0);
  const auto j = nlohmann::json::parse(slurp(path("s.json")));
  const auto& x = j["training_inputs"][3];
  const double y = j["training_outputs"][3];
  {
    std::ofstream pts(path("pts.csv"));
    pts.precision(17);
    pts << x[0].get<double>() << ',' << x[1].get<double>() << '\n';
  }
  const Outcome o = run_cli("predict --artifact " + path("s.json") + " --points " + path("pts.csv") + " -o " +
                            path("pred.csv"));
  ASSERT_EQ(o.status, 0) << o.output;
  std::istringstream in(slurp(path("pred.csv")));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::vector<double> v;
  std::stringstream cells(row);
  for (std::string c; std::getline(cells, c, ',');) v.push_back(std::stod(c));
  ASSERT_EQ(v.size(), 5u);
  EXPECT_NEAR(v[2], y, 1e-8 * std::max(1.0, std::abs(y)));
  EXPECT_NEAR(v[3], 0.0, 1e-10);
}

TEST_F(Cli, FitWithTooFewSamplesCitesRule) {
  const Outcome o = run_cli("fit --preset example1-corr09 --set surrogate.training_size=5 -o " + path("s.json"));
  EXPECT_EQ(o.status, 2);
  EXPECT_NE(o.output.find("surrogate.training_size"), std::string::npos) << o.output;
  EXPECT_NE(o.output.find("basis size"), std::string::npos) << o.output;
  EXPECT_FALSE(fs::exists(path("s.json")));
}

TEST_F(Cli, Example2MfisHfUsesWholeBudget) {
  const Outcome o = run_cli(
      "run --preset example2 --trials 1 --method mfis_hf --set surrogate.quadrature=100000 "
      "--set benchmark.mode=none --out " +
      path("out"));
  ASSERT_EQ(o.status, 0) << o.output;
  const auto j = nlohmann::json::parse(slurp(path("out/report.json")));
  bool found = false;
  for (const auto& m : j["methods"]) {
    if (m["method"] != "mfis_hf") continue;
    found = true;
    for (const auto& t : m["trials"]) {
      EXPECT_EQ(t["counts"]["hf"], 400);
      EXPECT_EQ(t["surrogate"]["training_size"], 200);
    }
  }
  EXPECT_TRUE(found);
}

TEST_F(Cli, ArtifactVersionMismatchRejected) {
  ASSERT_EQ(run_cli("fit " + kSmall + "-o " + path("s.json")).status, 0);
  auto j = nlohmann::json::parse(slurp(path("s.json")));
  j["version"] = 99;
  std::ofstream(path("bad.json")) << j.dump();
  std::ofstream(path("pts.csv")) << "0,0\n";
  const Outcome o = run_cli("predict --artifact " + path("bad.json") + " --points " + path("pts.csv"));
  EXPECT_EQ(o.status, 1);
  EXPECT_NE(o.output.find("incompatible artifact"), std::string::npos) << o.output;
}

TEST_F(Cli, UnknownSettingIsUsageError) {
  const Outcome o = run_cli("run --preset example1-corr09 --set risk.nonsense=1 --out " + path("out"));
  EXPECT_EQ(o.status, 2);
  EXPECT_NE(o.output.find("risk.nonsense"), std::string::npos) << o.output;
}

TEST_F(Cli, ServeModelAnswersLineByLine) {
  std::ofstream(path("in.txt")) << "0 0\n1 1\n";
  const Outcome o = run_cli("serve-model --name rastrigin < " + path("in.txt"));
  EXPECT_EQ(o.status, 0);
  EXPECT_EQ(o.output, "20\n18\n");
}

TEST_F(Cli, ConfigFileWithInlineComments) {
  std::ofstream(path("c.ini")) << "[run]\ntrials = 1   ; one trial\n\n[input]\nmarginals = 2*gaussian(0,2)  # two\n"
                                  "correlation = 1-2:0.9\n\n[model]\nname = rastrigin\n\n[risk]\nsamples = 1000\n\n"
                                  "[benchmark]\nmode = none\n";
  const Outcome o = run_cli("run --config " + path("c.ini") + " --out " + path("out"));
  EXPECT_EQ(o.status, 0) << o.output;
  EXPECT_TRUE(fs::exists(path("out/table.csv")));
}
