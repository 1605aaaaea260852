#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mvb/cli.hpp"
#include "test_support.hpp"

namespace mvb {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

const std::vector<std::string> kTinyNet{
    "--set", "network.backbone_scale=0.0625", "--set", "network.input_size=32",
    "--set", "network.head_widths=[8]",       "--set", "network.embedding_width=8",
    "--set", "train.preprocess.resize_to=36", "--set", "train.preprocess.crop_to=32"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"generate", "--out", "x", "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--out", "x", "--profile", "laptop"}).code, cli::kExitUsage);
}

TEST(Cli, RuntimeFailuresExitWithOne) {
  testing::TempDir dir("cli");
  const auto r = run({"eval", "--checkpoint", (dir.path() / "missing.mvbckpt").string(), "--data",
                      dir.path().string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, HelpListsSubcommandsAndFlags) {
  const auto top = run({"--help"});
  EXPECT_EQ(top.code, cli::kExitOk);
  for (const char* sub : {"generate", "pairs", "train", "mine", "eval", "ablate", "report"}) {
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
  }
  const auto tr = run({"train", "--help"});
  EXPECT_EQ(tr.code, cli::kExitOk);
  for (const char* flag : {"--variant", "--se", "--mask", "--ats", "--iterations", "--set", "--seed"}) {
    EXPECT_NE(tr.out.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, BinaryReportsExitCodes) {
  const std::string cli = MVB_CLI_PATH;
  EXPECT_EQ(std::system((cli + " --version > /dev/null").c_str()), 0);
  const int status = std::system((cli + " generate --nope > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), cli::kExitUsage);
}

TEST(Cli, GeneratePairsTrainMineEvalReport) {
  testing::TempDir dir("cli");
  const auto data = dir.path() / "data";
  auto r = run({"generate", "--identities", "6", "--test-identities", "2", "--image-size", "40", "--seed", "3",
                "--out", data.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(data / "train" / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(data / "test" / "manifest.jsonl"));
  EXPECT_EQ(read_json(data / "provenance.json")["seed"], 3);

  r = run({"pairs", "--data", data.string(), "--out", (dir.path() / "pairs" / "pairs.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "pairs" / "pairs.tsv"));

  const auto run_dir = dir.path() / "run";
  r = run(with({"train", "--data", data.string(), "--out", run_dir.string(), "--iterations", "2",
                "--batch-pairs", "4", "--variant", "basic", "--se", "--log-every", "1"},
               kTinyNet));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint.mvbckpt", "train_log.jsonl", "pairs.tsv", "config.json", "provenance.json"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  EXPECT_EQ(read_json(run_dir / "config.json")["network"]["variant"], "BASIC");
  EXPECT_EQ(read_json(run_dir / "config.json")["network"]["use_se"], true);

  r = run({"mine", "--checkpoint", (run_dir / "checkpoint.mvbckpt").string(), "--data", data.string(), "--out",
           (dir.path() / "mined" / "pairs.tsv").string(), "--set", "train.mining.threshold=0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("added"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir.path() / "mined" / "pairs.tsv"));

  r = run({"eval", "--checkpoint", (run_dir / "checkpoint.mvbckpt").string(), "--data", data.string(), "--plot",
           (dir.path() / "cmc.svg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CMC@1"), std::string::npos);
  const auto report = run_dir / "eval" / "report.json";
  ASSERT_TRUE(fs::exists(report));
  EXPECT_TRUE(fs::exists(run_dir / "eval" / "scores.tsv"));
  EXPECT_TRUE(fs::exists(dir.path() / "cmc.svg"));

  r = run({"report", "--input", report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("CMC@3"), std::string::npos);
}

TEST(Cli, DataRootFromEnvironment) {
  testing::TempDir dir("cli");
  const auto data = dir.path() / "data";
  ASSERT_EQ(run({"generate", "--identities", "4", "--test-identities", "1", "--image-size", "40", "--out",
                 data.string()}).code, 0);
  ::unsetenv(cli::kDataRootEnv);
  EXPECT_EQ(run({"pairs", "--out", (dir.path() / "p.tsv").string()}).code, cli::kExitUsage);
  ::setenv(cli::kDataRootEnv, data.string().c_str(), 1);
  EXPECT_EQ(run({"pairs", "--out", (dir.path() / "p.tsv").string()}).code, 0);
  ::unsetenv(cli::kDataRootEnv);
}

TEST(Cli, AblationProducesOneRowPerConfiguration) {
  testing::TempDir dir("cli");
  const auto data = dir.path() / "data";
  ASSERT_EQ(run({"generate", "--identities", "6", "--test-identities", "2", "--image-size", "40", "--out",
                 data.string()}).code, 0);
  const auto grid = dir.path() / "grid.json";
  std::ofstream(grid) << R"({"rows": [{"merged": true}, {"merged": true, "ats": true, "se": true, "mask": true}]})";
  const auto out = dir.path() / "ablate";
  const auto r = run(with({"ablate", "--data", data.string(), "--grid", grid.string(), "--out", out.string(),
                           "--iterations", "3", "--batch-pairs", "4", "--set", "train.mining.base_epochs=1"},
                          kTinyNet));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(out / "ablation.json");
  ASSERT_EQ(j["rows"].size(), 2U);
  EXPECT_TRUE(fs::exists(out / "table.txt"));
  EXPECT_TRUE(fs::exists(out / "cmc.svg"));

  const auto rep = run({"report", "--input", (out / "ablation.json").string()});
  ASSERT_EQ(rep.code, 0);
  EXPECT_NE(rep.out.find("Rank1(%)"), std::string::npos);
}

}  // namespace
}  // namespace mvb
