#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace attnflow::cli {

struct GenTaskOptions {
  std::string family;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t frames = 4;
  std::size_t tokens_per_frame = 8;
  bool open_ended = false;
  std::string out;
};

struct TrainOptions {
  std::string data;
  std::string model_config;
  std::string train_config;
  std::string out_checkpoint;
  bool quiet = false;
};

struct KnockoutOptions {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> flows{"cross-frame"};
  std::size_t window_k = 9;
  std::optional<std::size_t> max_examples;
  std::string out;
};

struct LogitLensOptions {
  std::string checkpoint;
  std::string data;
  std::string keywords;  // JSON file; empty means the vocabulary tags
  bool no_filter = false;
  std::optional<std::size_t> max_examples;
  std::string out;
};

struct ProbeProbOptions {
  std::string checkpoint;
  std::string data;
  bool no_filter = false;
  std::optional<std::size_t> max_examples;
  std::string out;
};

struct AttnMapOptions {
  std::string checkpoint;
  std::string data;
  std::size_t example = 0;
  std::vector<std::size_t> layers;  // empty: all
  std::vector<std::size_t> heads;   // empty: all
  std::string queries = "question";
  std::string keys = "video";
  std::string pathway_config;
  std::string out;
};

struct PathwaysOptions {
  std::string checkpoint;
  std::string data;
  std::string pathway_config;
  std::optional<std::uint64_t> random_seed;
  std::optional<std::size_t> edge_budget;
  std::string out;
};

struct SelectRangesOptions {
  std::vector<std::string> knockout_csvs;
  std::size_t interval = 5;
  double threshold = -5.0;
  std::string out;
};

using Argv = std::vector<std::string>;

int cmd_gen_task(const GenTaskOptions& o, const Argv& argv);
int cmd_train(const TrainOptions& o, const Argv& argv);
int cmd_knockout(const KnockoutOptions& o, const Argv& argv);
int cmd_logitlens(const LogitLensOptions& o, const Argv& argv);
int cmd_probe_prob(const ProbeProbOptions& o, const Argv& argv);
int cmd_attnmap(const AttnMapOptions& o, const Argv& argv);
int cmd_pathways(const PathwaysOptions& o, const Argv& argv);
int cmd_select_ranges(const SelectRangesOptions& o, const Argv& argv);
int cmd_plot(const std::vector<std::string>& passthrough);

}  // namespace attnflow::cli
