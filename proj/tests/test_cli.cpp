#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace rgn::cli {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rgntpp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rgn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

  void generate() {
    const CliResult r = run({"generate", "--process", "hawkes", "--mu", "0.2,0.2", "--alpha",
                             "0.5,0.3,0.3,0.5", "--horizon", "15", "--num-seq", "20", "--seed", "4",
                             "--out", path("data")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }

  std::vector<std::string> train_args(const std::string& out) const {
    return {"train", "--train", path("data/train.jsonl"), "--validation", path("data/validation.jsonl"),
            "--test", path("data/test.jsonl"), "--epochs", "2", "--hidden-dim", "6", "--edge-dim", "4",
            "--batch-size", "4", "--seed", "3", "--out", path(out)};
  }

  fs::path dir_;
};

TEST_F(CliTest, FullPipeline) {
  generate();
  for (const char* f : {"train.jsonl", "validation.jsonl", "test.jsonl", "generate_config.json"})
    EXPECT_TRUE(fs::exists(path("data/") + f)) << f;

  CliResult r = run(train_args("run"));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"train_config.json", "metrics.csv", "checkpoint.json", "best_nll.json",
                        "best_accuracy.json", "best_rmse.json", "train_summary.json"})
    EXPECT_TRUE(fs::exists(path("run/") + f)) << f;
  // The echoed config is a valid run config that names the seed.
  const RunConfig echoed = load_run_config(path("run/train_config.json"));
  EXPECT_EQ(echoed.train.seed, 3u);
  EXPECT_EQ(echoed.model.num_types, 2u);

  r = run({"evaluate", "--checkpoint", path("run/best_nll.json"), "--data", path("data/test.jsonl"),
           "--generator", path("data/generate_config.json"), "--out", path("eval")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string metrics = slurp(path("eval/eval_metrics.json"));
  EXPECT_NE(metrics.find("nll_per_event"), std::string::npos);
  EXPECT_NE(metrics.find("oracle_nll_per_event"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("eval/eval_metrics.csv")));

  r = run({"gof", "--checkpoint", path("run/best_nll.json"), "--data", path("data/test.jsonl"),
           "--out", path("gof")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(path("gof/pp.csv")).substr(0, 25), "model_cdf,empirical_cdf\n0");
  EXPECT_NE(slurp(path("gof/ks.json")).find("ks_statistic"), std::string::npos);

  r = run({"gof", "--generator", path("data/generate_config.json"), "--data", path("data/test.jsonl"),
           "--out", path("gof_true")});
  ASSERT_EQ(r.code, kExitOk) << r.err;

  r = run({"inspect-attention", "--checkpoint", path("run/best_nll.json"), "--data",
           path("data/test.jsonl"), "--sequence", "0", "--out", path("att")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(path("att/attention.csv")).substr(0, 45), "event_index,layer,head,receiver,sender,weight");

  r = run({"complexity", "--num-types", "22", "--heads", "16", "--gat-layers", "2", "--length", "72",
           "--out", path("cx")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(slurp(path("cx/complexity.json")).find("1115136"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("cx/complexity_config.json")));
}

TEST_F(CliTest, SameSeedGivesIdenticalMetricsCsv) {
  generate();
  ASSERT_EQ(run(train_args("a")).code, kExitOk);
  ASSERT_EQ(run(train_args("b")).code, kExitOk);
  const std::string a = slurp(path("a/metrics.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("b/metrics.csv")));
}

TEST_F(CliTest, MissingDatasetNamesPath) {
  const std::string missing = path("nope/train.jsonl");
  const CliResult r = run({"train", "--train", missing, "--validation", missing, "--out", path("x")});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownConfigKeyRejected) {
  std::ofstream(path("bad.json")) << R"({"train":{"epochs":2,"learning_rate":0.1}})";
  const CliResult r = run({"train", "--config", path("bad.json")});
  EXPECT_EQ(r.code, kExitConfigError);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadFlagsAndHelp) {
  EXPECT_EQ(run({"generate", "--num-seq", "many"}).code, kExitConfigError);
  EXPECT_EQ(run({"bogus"}).code, kExitConfigError);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(RunConfig, RoundTrip) {
  RunConfig c;
  c.model.num_types = 3;
  c.model.hidden_dim = 12;
  c.train.epochs = 7;
  c.train.weights.time = 2.5;
  c.train_path = "a.jsonl";
  c.output_dir = "somewhere";
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_EQ(back.train.weights.time, 2.5);
  EXPECT_EQ(back.train_path, "a.jsonl");
  EXPECT_EQ(back.output_dir, "somewhere");
}

TEST(RunConfig, MissingNumTypesMeansInfer) {
  const RunConfig c = run_config_from_json(R"({"model":{"hidden_dim":8}})");
  EXPECT_EQ(c.model.num_types, 0u);
  EXPECT_EQ(c.model.hidden_dim, 8u);
  EXPECT_ANY_THROW((void)run_config_from_json(R"({"modle":{}})"));
}

}  // namespace
}  // namespace rgn::cli
