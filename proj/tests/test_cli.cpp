#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "cli.hpp"

namespace attnflow::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("attnflow_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "model.json") << R"({"n_layers": 3, "n_heads": 2, "d_model": 8, "d_head": 4,
      "d_mlp": 16, "vocab_size": 40, "max_seq_len": 48, "init_seed": 1})";
    std::ofstream(dir_ / "train.json") << R"({"learning_rate": 0.01, "batch_size": 12, "n_steps": 80})";
    ASSERT_EQ(call({"gen-task", "--family", "moving-direction", "--n", "12", "--seed", "3", "--out",
                    path("data.jsonl")}),
              kOk);
    ASSERT_EQ(call({"train", "--data", path("data.jsonl"), "--model-config", path("model.json"),
                    "--train-config", path("train.json"), "--out-checkpoint", path("model.ckpt"),
                    "--quiet"}),
              kOk);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static int call(std::vector<std::string> args) {
    args.insert(args.begin(), "attnflow");
    return run(args);
  }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(call({}), kUsage);
  EXPECT_EQ(call({"--help"}), kOk);
  EXPECT_EQ(call({"frobnicate"}), kUsage);
  EXPECT_EQ(call({"gen-task", "--family", "moving-direction"}), kUsage);
  EXPECT_EQ(call({"gen-task", "--family", "bogus", "--n", "3", "--out", path("bogus.jsonl")}), kUsage);
  EXPECT_FALSE(fs::exists(path("bogus.jsonl")));
  EXPECT_EQ(call({"knockout", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--window-k", "4", "--out", path("k.csv")}),
            kUsage);
  EXPECT_EQ(call({"knockout", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--flow", "sideways", "--out", path("k.csv")}),
            kUsage);
  EXPECT_EQ(call({"knockout", "--checkpoint", path("missing.ckpt"), "--data", path("data.jsonl"),
                  "--out", path("k.csv")}),
            kUsage);
  EXPECT_EQ(call({"pathways", "--checkpoint", path("model.ckpt"), "--data", path("missing.jsonl"),
                  "--random-seed", "1", "--edge-budget", "10", "--out", path("p.csv")}),
            kUsage);
  EXPECT_EQ(call({"pathways", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--out", path("p.csv")}),
            kUsage);
}

TEST_F(Cli, GenTaskIsReproducibleAndHasManifest) {
  ASSERT_EQ(call({"gen-task", "--family", "event-order", "--n", "20", "--seed", "9", "--out", path("a.jsonl")}), kOk);
  ASSERT_EQ(call({"gen-task", "--family", "event-order", "--n", "20", "--seed", "9", "--out", path("b.jsonl")}), kOk);
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
  EXPECT_EQ(line_count(path("a.jsonl")), 20u);
  const auto m = nlohmann::json::parse(slurp(path("a.jsonl.manifest.json")));
  EXPECT_EQ(m.at("command"), "gen-task");
  EXPECT_EQ(m.at("outputs").size(), 1u);
  EXPECT_EQ(m.at("outputs")[0].at("sha256").get<std::string>().size(), 64u);
}

TEST_F(Cli, TrainWritesCheckpointHistoryAndManifest) {
  EXPECT_TRUE(fs::exists(path("model.ckpt")));
  EXPECT_EQ(first_line(path("model.ckpt.history.csv")), "step,loss");
  EXPECT_EQ(line_count(path("model.ckpt.history.csv")), 81u);
  const auto m = nlohmann::json::parse(slurp(path("model.ckpt.manifest.json")));
  EXPECT_TRUE(m.at("results").contains("train_accuracy"));
}

TEST_F(Cli, KnockoutThenSelectRangesThenPathways) {
  ASSERT_EQ(call({"knockout", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--flow", "cross-frame,video-question,question-last", "--window-k", "1",
                  "--out", path("ko.csv")}),
            kOk);
  EXPECT_EQ(first_line(path("ko.csv")),
            "task,example_id,flow,window_k,center_layer,p_base,p_knockout,pct_change");
  ASSERT_EQ(call({"select-ranges", "--knockout", path("ko.csv"), "--interval", "1", "--threshold",
                  "1000", "--out", path("pc.json")}),
            kOk);
  const auto pc = nlohmann::json::parse(slurp(path("pc.json")));
  EXPECT_EQ(pc.at("video_inbound_cutoff"), 3);
  ASSERT_EQ(call({"pathways", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--pathway-config", path("pc.json"), "--random-seed", "4", "--out", path("pw.csv")}),
            kOk);
  std::ifstream in(path("pw.csv"));
  std::string header, full, effective, random;
  std::getline(in, header);
  std::getline(in, full);
  std::getline(in, effective);
  std::getline(in, random);
  EXPECT_EQ(header, "attention_type,edge_count,edge_fraction,accuracy");
  EXPECT_EQ(full.rfind("full,", 0), 0u);
  EXPECT_EQ(effective.rfind("effective,", 0), 0u);
  EXPECT_EQ(random.rfind("random,", 0), 0u);
  // Same budget: the edge_count column agrees.
  auto count = [](const std::string& row) {
    const auto a = row.find(',') + 1;
    return row.substr(a, row.find(',', a) - a);
  };
  EXPECT_EQ(count(effective), count(random));
}

TEST_F(Cli, ProbesWriteExpectedHeaders) {
  ASSERT_EQ(call({"probe-prob", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--no-filter", "--out", path("prob.csv")}),
            kOk);
  EXPECT_EQ(first_line(path("prob.csv")), "layer,option_token,is_true,probability");
  ASSERT_EQ(call({"logitlens", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--no-filter", "--out", path("lens.csv")}),
            kOk);
  EXPECT_EQ(first_line(path("lens.csv")), "layer,category,count,total_video_tokens,frequency");
  EXPECT_TRUE(fs::exists(path("lens.normalised.csv")));
  ASSERT_EQ(call({"attnmap", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--layer", "0,2", "--head", "1", "--out", path("attn.csv")}),
            kOk);
  EXPECT_EQ(first_line(path("attn.csv")), "layer,head,query_index,key_index,weight");
  // 2 layers x 1 head x question (9 tokens) x video (32 tokens)
  EXPECT_EQ(line_count(path("attn.csv")), 1u + 2u * 9u * 32u);
  EXPECT_EQ(call({"attnmap", "--checkpoint", path("model.ckpt"), "--data", path("data.jsonl"),
                  "--layer", "7", "--out", path("attn.csv")}),
            kUsage);
}

TEST_F(Cli, IncompatibleCheckpointIsRejected) {
  ASSERT_EQ(call({"gen-task", "--family", "moving-direction", "--n", "2", "--frames", "8", "--out",
                  path("long.jsonl")}),
            kOk);
  EXPECT_EQ(call({"pathways", "--checkpoint", path("model.ckpt"), "--data", path("long.jsonl"),
                  "--random-seed", "1", "--edge-budget", "10", "--out", path("p.csv")}),
            kUsage);
}

}  // namespace
}  // namespace attnflow::cli
