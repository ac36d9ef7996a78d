#include "cli.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace attnflow::cli {

int run(const std::vector<std::string>& args) {
  CLI::App app{"attnflow: attention-flow experiments on a miniature decoder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ATTNFLOW_VERSION);

  GenTaskOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-task", "Generate a synthetic video QA dataset (JSONL)");
  gen_cmd->add_option("--family", gen.family, "moving-direction | event-order | count-at-start")->required();
  gen_cmd->add_option("--n", gen.n, "Number of examples")->required();
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--frames", gen.frames, "Frames per video");
  gen_cmd->add_option("--tokens-per-frame", gen.tokens_per_frame, "Tokens per frame");
  gen_cmd->add_flag("--open-ended", gen.open_ended, "Answer with the content word, no options");
  gen_cmd->add_option("--out", gen.out, "Output JSONL path")->required();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train the model on a dataset");
  train_cmd->add_option("--data", train.data, "Dataset JSONL")->required();
  train_cmd->add_option("--model-config", train.model_config, "Model config JSON");
  train_cmd->add_option("--train-config", train.train_config, "Training config JSON");
  train_cmd->add_option("--out-checkpoint", train.out_checkpoint, "Checkpoint path")->required();
  train_cmd->add_flag("--quiet", train.quiet, "No per-step loss on stderr");

  KnockoutOptions ko;
  auto* ko_cmd = app.add_subcommand("knockout", "Windowed attention-knockout sweeps");
  ko_cmd->add_option("--checkpoint", ko.checkpoint)->required();
  ko_cmd->add_option("--data", ko.data)->required();
  ko_cmd->add_option("--flow", ko.flows, "Flow name(s), comma separated")->delimiter(',');
  ko_cmd->add_option("--window-k", ko.window_k, "Odd window size");
  ko_cmd->add_option("--max-examples", ko.max_examples, "Use only the first N examples");
  ko_cmd->add_option("--out", ko.out, "Output CSV")->required();

  LogitLensOptions lens;
  auto* lens_cmd = app.add_subcommand("logitlens", "Keyword frequencies of decoded video tokens");
  lens_cmd->add_option("--checkpoint", lens.checkpoint)->required();
  lens_cmd->add_option("--data", lens.data)->required();
  lens_cmd->add_option("--keywords", lens.keywords, "JSON {category: [tokens]}");
  lens_cmd->add_flag("--no-filter", lens.no_filter, "Keep incorrectly answered examples");
  lens_cmd->add_option("--max-examples", lens.max_examples);
  lens_cmd->add_option("--out", lens.out, "Output CSV")->required();

  ProbeProbOptions prob;
  auto* prob_cmd = app.add_subcommand("probe-prob", "Layer-wise option probabilities at the last position");
  prob_cmd->add_option("--checkpoint", prob.checkpoint)->required();
  prob_cmd->add_option("--data", prob.data)->required();
  prob_cmd->add_flag("--no-filter", prob.no_filter, "Keep incorrectly answered examples");
  prob_cmd->add_option("--max-examples", prob.max_examples);
  prob_cmd->add_option("--out", prob.out, "Output CSV")->required();

  AttnMapOptions amap;
  auto* amap_cmd = app.add_subcommand("attnmap", "Dump attention weights between two segments");
  amap_cmd->add_option("--checkpoint", amap.checkpoint)->required();
  amap_cmd->add_option("--data", amap.data)->required();
  amap_cmd->add_option("--example", amap.example, "Dataset position");
  amap_cmd->add_option("--layer", amap.layers, "Layer(s); default all")->delimiter(',');
  amap_cmd->add_option("--head", amap.heads, "Head(s); default all")->delimiter(',');
  amap_cmd->add_option("--queries", amap.queries, "Query segment selector");
  amap_cmd->add_option("--keys", amap.keys, "Key segment selector");
  amap_cmd->add_option("--pathway-config", amap.pathway_config, "Apply an effective pathway");
  amap_cmd->add_option("--out", amap.out, "Output CSV")->required();

  PathwaysOptions pw;
  auto* pw_cmd = app.add_subcommand("pathways", "Accuracy under full, effective and random attention");
  pw_cmd->add_option("--checkpoint", pw.checkpoint)->required();
  pw_cmd->add_option("--data", pw.data)->required();
  pw_cmd->add_option("--pathway-config", pw.pathway_config);
  pw_cmd->add_option("--random-seed", pw.random_seed);
  pw_cmd->add_option("--edge-budget", pw.edge_budget, "Enabled edges per sequence for the random row");
  pw_cmd->add_option("--out", pw.out, "Output CSV")->required();

  SelectRangesOptions sel;
  auto* sel_cmd = app.add_subcommand("select-ranges", "Derive a pathway config from knockout CSVs");
  sel_cmd->add_option("--knockout", sel.knockout_csvs, "Knockout CSV(s)")->required();
  sel_cmd->add_option("--interval", sel.interval, "Layers per interval");
  sel_cmd->add_option("--threshold", sel.threshold, "Mean pct_change below which an interval is kept");
  sel_cmd->add_option("--out", sel.out, "Output pathway config JSON")->required();

  auto* plot_cmd = app.add_subcommand("plot", "Render CSVs with the Python plotkit package");
  plot_cmd->allow_extras();
  plot_cmd->prefix_command();

  std::vector<std::string> argv(args.begin(), args.end());
  if (argv.empty()) argv.emplace_back("attnflow");
  try {
    std::vector<std::string> rev(argv.rbegin(), argv.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_task(gen, argv);
    if (*train_cmd) return cmd_train(train, argv);
    if (*ko_cmd) return cmd_knockout(ko, argv);
    if (*lens_cmd) return cmd_logitlens(lens, argv);
    if (*prob_cmd) return cmd_probe_prob(prob, argv);
    if (*amap_cmd) return cmd_attnmap(amap, argv);
    if (*pw_cmd) return cmd_pathways(pw, argv);
    if (*sel_cmd) return cmd_select_ranges(sel, argv);
    if (*plot_cmd) return cmd_plot(plot_cmd->remaining());
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace attnflow::cli
