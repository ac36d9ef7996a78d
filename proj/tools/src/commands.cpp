#include "commands.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spawn.h>
#include <sys/wait.h>

#include "attnflow/parallel.hpp"
#include "attnflow/pathways.hpp"
#include "attnflow/probes.hpp"
#include "attnflow/rng.hpp"
#include "attnflow/synthvqa.hpp"
#include "attnflow/training.hpp"
#include "cli.hpp"
#include "manifest.hpp"
#include "table_io.hpp"

extern char** environ;

namespace attnflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kKnockoutHeader =
    "task,example_id,flow,window_k,center_layer,p_base,p_knockout,pct_change";
constexpr std::string_view kLensHeader = "layer,category,count,total_video_tokens,frequency";
constexpr std::string_view kProbHeader = "layer,option_token,is_true,probability";
constexpr std::string_view kPathwaysHeader = "attention_type,edge_count,edge_fraction,accuracy";
constexpr std::string_view kAttnHeader = "layer,head,query_index,key_index,weight";

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Loader failures are input problems, reported as usage errors.
template <typename F>
auto as_config(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::vector<Example> load_dataset(const std::string& path, std::optional<std::size_t> limit = {}) {
  if (!fs::exists(path)) throw ConfigError("data file not found: " + path);
  auto data = as_config(path, [&] { return read_jsonl(path); });
  if (data.empty()) throw ConfigError(path + ": no examples");
  if (limit && *limit < data.size()) data.resize(*limit);
  return data;
}

ModelParams load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  return as_config(path, [&] { return load_params(path); });
}

void check_compatible(const ModelConfig& config, std::span<const Example> data) {
  for (const Example& ex : data) {
    if (ex.tokens.size() > config.max_seq_len) {
      throw ConfigError(fmt::format("example {} has {} tokens, model accepts {}", ex.id,
                                    ex.tokens.size(), config.max_seq_len));
    }
    for (TokenId t : ex.tokens) {
      if (t >= config.vocab_size) {
        throw ConfigError(fmt::format("example {} uses token {} outside the model vocabulary",
                                      ex.id, t));
      }
    }
  }
}

std::vector<Example> subset(std::span<const Example> data, const std::vector<std::size_t>& keep) {
  std::vector<Example> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(data[i]);
  return out;
}

void write_done(RunManifest& manifest, const fs::path& primary) {
  manifest.write(primary);
  std::cout << "wrote " << primary.string() << '\n';
}

}  // namespace

int cmd_gen_task(const GenTaskOptions& o, const Argv& argv) {
  RunManifest manifest("gen-task", argv);
  const TaskFamily family = as_config("--family", [&] { return parse_family(o.family); });
  const FrameLayout layout{o.frames, o.tokens_per_frame};
  auto data = as_config("gen-task", [&] { return generate(family, o.n, o.seed, layout, o.open_ended); });
  const LabelCheck check = verify_labels(data);
  if (!check.ok) throw std::runtime_error("generated labels failed verification: " + check.reason);

  write_jsonl(data, o.out);
  manifest.set_config("family", o.family);
  manifest.set_config("n", o.n);
  manifest.set_config("frames", o.frames);
  manifest.set_config("tokens_per_frame", o.tokens_per_frame);
  manifest.set_config("open_ended", o.open_ended);
  manifest.set_seed("seed", o.seed);
  manifest.add_output(o.out);
  manifest.set_result("examples", data.size());
  write_done(manifest, o.out);
  return kOk;
}

int cmd_train(const TrainOptions& o, const Argv& argv) {
  RunManifest manifest("train", argv);
  const auto data = load_dataset(o.data);
  ModelConfig mc;
  TrainConfig tc;
  if (!o.model_config.empty()) {
    mc = as_config(o.model_config, [&] { return model_config_from_json(load_json(o.model_config)); });
  }
  if (!o.train_config.empty()) {
    tc = as_config(o.train_config, [&] { return train_config_from_json(load_json(o.train_config)); });
  }
  as_config("model config", [&] { mc.validate(); return 0; });
  as_config("train config", [&] { tc.validate(); return 0; });
  check_compatible(mc, data);

  const auto labeled = to_labeled(data);
  const FitResult fit_result = fit(mc, labeled, tc, [&](std::size_t step, double l) {
    if (!o.quiet && (step % 100 == 0 || step + 1 == tc.n_steps)) {
      std::cerr << fmt::format("step {:>5}  loss {:.4f}\n", step, l);
    }
  });

  save_params(fit_result.params, o.out_checkpoint);
  const fs::path history = o.out_checkpoint + ".history.csv";
  CsvWriter csv(history, "step,loss");
  for (std::size_t s = 0; s < fit_result.report.losses.size(); ++s) {
    csv.row({std::to_string(s), format_real(fit_result.report.losses[s])});
  }
  csv.close();

  manifest.set_config("model", to_json(mc));
  manifest.set_config("train", to_json(tc));
  manifest.set_seed("init_seed", mc.init_seed);
  manifest.set_seed("train_seed", tc.train_seed);
  manifest.add_input(o.data);
  if (!o.model_config.empty()) manifest.add_input(o.model_config);
  if (!o.train_config.empty()) manifest.add_input(o.train_config);
  manifest.add_output(o.out_checkpoint);
  manifest.add_output(history);
  manifest.set_result("train_accuracy", fit_result.report.train_accuracy);
  if (fit_result.report.heldout_accuracy) {
    manifest.set_result("heldout_accuracy", *fit_result.report.heldout_accuracy);
  }
  manifest.set_result("final_loss", fit_result.report.losses.empty() ? 0.0 : fit_result.report.losses.back());
  std::cout << fmt::format("train_accuracy {:.4f}", fit_result.report.train_accuracy);
  if (fit_result.report.heldout_accuracy) {
    std::cout << fmt::format("  heldout_accuracy {:.4f}", *fit_result.report.heldout_accuracy);
  }
  std::cout << '\n';
  write_done(manifest, o.out_checkpoint);
  return kOk;
}

int cmd_knockout(const KnockoutOptions& o, const Argv& argv) {
  RunManifest manifest("knockout", argv);
  std::vector<Flow> flows;
  for (const auto& f : o.flows) flows.push_back(as_config("--flow", [&] { return parse_flow(f); }));
  const ModelParams params = load_checkpoint(o.checkpoint);
  as_config("--window-k", [&] { return knockout_window(0, o.window_k, params.config.n_layers); });
  const auto data = load_dataset(o.data, o.max_examples);
  check_compatible(params.config, data);

  const auto kept = correct_subset(params, data);
  auto examples = subset(data, kept);
  std::stable_sort(examples.begin(), examples.end(),
                   [](const Example& a, const Example& b) { return a.id < b.id; });

  CsvWriter csv(o.out, kKnockoutHeader);
  json means = json::object();
  for (Flow flow : flows) {
    std::vector<SweepCurve> curves(examples.size());
    parallel_for(examples.size(), [&](std::size_t i) {
      curves[i] = knockout_sweep(params, examples[i].tokens, examples[i].spans, flow, o.window_k);
    });
    std::map<TaskFamily, std::vector<SweepCurve>> by_task;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const std::string task(family_name(examples[i].family));
      for (const SweepPoint& p : curves[i].points) {
        csv.row({task, std::to_string(examples[i].id), curves[i].flow, std::to_string(o.window_k),
                 std::to_string(p.center_layer), format_real(p.p_base), format_real(p.p_knockout),
                 format_real(p.pct_change)});
      }
      by_task[examples[i].family].push_back(curves[i]);
    }
    for (const auto& [family, task_curves] : by_task) {
      const SweepCurve mean = mean_curve(task_curves);
      const std::string task(family_name(family));
      for (const SweepPoint& p : mean.points) {
        csv.row({task, "mean", mean.flow, std::to_string(o.window_k), std::to_string(p.center_layer),
                 format_real(p.p_base), format_real(p.p_knockout), format_real(p.pct_change)});
        means[task][mean.flow].push_back(p.pct_change);
      }
    }
  }
  csv.close();

  manifest.set_config("flows", o.flows);
  manifest.set_config("window_k", o.window_k);
  if (o.max_examples) manifest.set_config("max_examples", *o.max_examples);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.data);
  manifest.add_output(o.out);
  manifest.set_result("total", data.size());
  manifest.set_result("kept", kept.size());
  manifest.set_result("mean_pct_change", means);
  std::cout << fmt::format("kept {}/{} correctly answered examples\n", kept.size(), data.size());
  write_done(manifest, o.out);
  return kOk;
}

namespace {

KeywordSets load_keywords(const std::string& path) {
  if (path.empty()) return KeywordSets::from_vocab();
  const json j = load_json(path);
  if (!j.is_object()) throw ConfigError(path + ": keyword config must be an object");
  KeywordSets sets;
  for (const auto& [name, entries] : j.items()) {
    std::vector<TokenId> ids;
    for (const auto& e : entries) {
      ids.push_back(as_config(path, [&] {
        return e.is_string() ? token_id(e.get<std::string>()) : e.get<TokenId>();
      }));
    }
    sets.categories.emplace_back(name, std::move(ids));
  }
  as_config(path, [&] { sets.validate(); return 0; });
  return sets;
}

void write_lens(const fs::path& path, const LogitLensReport& report, std::size_t n_layers) {
  CsvWriter csv(path, kLensHeader);
  for (std::size_t l = 0; l < report.cells.size() && l <= n_layers; ++l) {
    for (std::size_t c = 0; c < report.categories.size(); ++c) {
      const LensCell& cell = report.cells[l][c];
      csv.row({std::to_string(l), report.categories[c], std::to_string(cell.count),
               std::to_string(cell.total_video_tokens), format_real(cell.frequency)});
    }
  }
  csv.close();
}

fs::path sibling(const fs::path& primary, std::string_view suffix) {
  fs::path p = primary;
  p.replace_filename(primary.stem().string() + std::string(suffix) + primary.extension().string());
  return p;
}

}  // namespace

int cmd_logitlens(const LogitLensOptions& o, const Argv& argv) {
  RunManifest manifest("logitlens", argv);
  const KeywordSets keywords = load_keywords(o.keywords);
  const ModelParams params = load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o.data, o.max_examples);
  check_compatible(params.config, data);
  for (const auto& [name, ids] : keywords.categories) {
    for (TokenId id : ids) {
      if (id >= params.config.vocab_size) throw ConfigError("keyword token outside model vocabulary");
    }
  }

  std::vector<std::size_t> kept(data.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  if (!o.no_filter) kept = correct_subset(params, data);
  const auto examples = subset(data, kept);

  LogitLensReport report;
  if (!examples.empty()) report = logit_lens_report(params, examples, keywords);
  const fs::path normalised = sibling(o.out, ".normalised");
  write_lens(o.out, report, params.config.n_layers);
  write_lens(normalised, report.max_normalised(), params.config.n_layers);

  json categories = json::object();
  for (const auto& [name, ids] : keywords.categories) {
    for (TokenId id : ids) categories[name].push_back(token_text(id));
    if (ids.empty()) categories[name] = json::array();
  }
  manifest.set_config("keywords", categories);
  manifest.set_config("filter_correct", !o.no_filter);
  if (o.max_examples) manifest.set_config("max_examples", *o.max_examples);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.data);
  if (!o.keywords.empty()) manifest.add_input(o.keywords);
  manifest.add_output(o.out);
  manifest.add_output(normalised);
  manifest.set_result("total", data.size());
  manifest.set_result("kept", kept.size());
  write_done(manifest, o.out);
  return kOk;
}

int cmd_probe_prob(const ProbeProbOptions& o, const Argv& argv) {
  RunManifest manifest("probe-prob", argv);
  const ModelParams params = load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o.data, o.max_examples);
  check_compatible(params.config, data);

  std::vector<std::size_t> kept(data.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  if (!o.no_filter) kept = correct_subset(params, data);

  std::vector<AnswerProbCurve> curves(kept.size());
  std::vector<unsigned char> head_mismatch(kept.size(), 0);
  parallel_for(kept.size(), [&](std::size_t i) {
    const Example& ex = data[kept[i]];
    curves[i] = answer_prob_curve(params, ex.tokens, ex.spans, ex.candidates, ex.answer_token);
    // The deepest row must be the model's own output distribution.
    const ForwardTrace trace = forward(params, ex.tokens);
    const auto row = trace.logits.row(ex.spans.last_index);
    Vector p(row.begin(), row.end());
    softmax(p);
    const std::size_t last = curves[i].probabilities.rows() - 1;
    for (std::size_t c = 0; c < ex.candidates.size(); ++c) {
      if (curves[i].probabilities(last, c) != p[ex.candidates[c]]) head_mismatch[i] = 1;
    }
  });
  if (std::any_of(head_mismatch.begin(), head_mismatch.end(), [](unsigned char m) { return m; })) {
    throw std::runtime_error("final-layer probabilities differ from the model output");
  }

  // (layer, token, is_true) -> (sum, count)
  std::map<std::tuple<std::size_t, TokenId, bool>, std::pair<double, std::size_t>> acc;
  for (const AnswerProbCurve& c : curves) {
    for (std::size_t l = 0; l < c.probabilities.rows(); ++l) {
      for (std::size_t k = 0; k < c.candidates.size(); ++k) {
        auto& cell = acc[{l, c.candidates[k], c.is_true[k]}];
        cell.first += c.probabilities(l, k);
        ++cell.second;
      }
    }
  }
  CsvWriter csv(o.out, kProbHeader);
  for (const auto& [key, cell] : acc) {
    const auto& [layer, token, is_true] = key;
    csv.row({std::to_string(layer), token_text(token), is_true ? "true" : "false",
             format_real(cell.first / static_cast<double>(cell.second))});
  }
  csv.close();

  manifest.set_config("filter_correct", !o.no_filter);
  if (o.max_examples) manifest.set_config("max_examples", *o.max_examples);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.data);
  manifest.add_output(o.out);
  manifest.set_result("total", data.size());
  manifest.set_result("kept", kept.size());
  write_done(manifest, o.out);
  return kOk;
}

int cmd_attnmap(const AttnMapOptions& o, const Argv& argv) {
  RunManifest manifest("attnmap", argv);
  const auto queries = as_config("--queries", [&] { return SegmentSelector::parse(o.queries); });
  const auto keys = as_config("--keys", [&] { return SegmentSelector::parse(o.keys); });
  const ModelParams params = load_checkpoint(o.checkpoint);
  const auto data = load_dataset(o.data);
  if (o.example >= data.size()) throw ConfigError("--example beyond the dataset");
  const Example& ex = data[o.example];
  check_compatible(params.config, std::span(&ex, 1));

  const std::size_t n_layers = params.config.n_layers;
  std::vector<std::size_t> layers = o.layers, heads = o.heads;
  if (layers.empty())
    for (std::size_t l = 0; l < n_layers; ++l) layers.push_back(l);
  if (heads.empty())
    for (std::size_t h = 0; h < params.config.n_heads; ++h) heads.push_back(h);
  for (std::size_t l : layers)
    if (l >= n_layers) throw ConfigError("--layer out of range");
  for (std::size_t h : heads)
    if (h >= params.config.n_heads) throw ConfigError("--head out of range");

  std::optional<InterventionSchedule> schedule;
  if (!o.pathway_config.empty()) {
    const auto pc = as_config(o.pathway_config, [&] {
      return pathway_config_from_json(load_json(o.pathway_config));
    });
    schedule = as_config(o.pathway_config, [&] { return effective_schedule(pc, ex.spans, n_layers); });
  }
  as_config("selectors", [&] { select(ex.spans, queries); return select(ex.spans, keys); });

  CsvWriter csv(o.out, kAttnHeader);
  for (std::size_t l : layers) {
    for (std::size_t h : heads) {
      const AttentionMap m = attention_map(params, ex.tokens, ex.spans, l, h, queries, keys,
                                           schedule ? &*schedule : nullptr);
      for (std::size_t i = 0; i < m.queries.size(); ++i) {
        for (std::size_t j = 0; j < m.keys.size(); ++j) {
          csv.row({std::to_string(l), std::to_string(h), std::to_string(m.queries[i]),
                   std::to_string(m.keys[j]), format_real(m.weights(i, j))});
        }
      }
    }
  }
  csv.close();

  manifest.set_config("example", o.example);
  manifest.set_config("example_id", ex.id);
  manifest.set_config("layers", layers);
  manifest.set_config("heads", heads);
  manifest.set_config("queries", queries.to_string());
  manifest.set_config("keys", keys.to_string());
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.data);
  if (!o.pathway_config.empty()) manifest.add_input(o.pathway_config);
  manifest.add_output(o.out);
  write_done(manifest, o.out);
  return kOk;
}

int cmd_pathways(const PathwaysOptions& o, const Argv& argv) {
  RunManifest manifest("pathways", argv);
  if (o.pathway_config.empty() && !o.random_seed) {
    throw ConfigError("pathways: give --pathway-config, --random-seed, or both");
  }
  if (o.random_seed && o.pathway_config.empty() && !o.edge_budget) {
    throw ConfigError("pathways: --random-seed needs --edge-budget or --pathway-config");
  }
  std::optional<PathwayConfig> pc;
  if (!o.pathway_config.empty()) {
    pc = as_config(o.pathway_config, [&] { return pathway_config_from_json(load_json(o.pathway_config)); });
  }
  const ModelParams params = load_checkpoint(o.checkpoint);
  const std::size_t n_layers = params.config.n_layers;
  if (pc) as_config(o.pathway_config, [&] { pc->validate(n_layers); return 0; });
  const auto data = load_dataset(o.data);
  check_compatible(params.config, data);
  const std::size_t n = data.size();

  std::vector<std::size_t> full_edges(n), effective_edges(n), random_budget(n);
  for (std::size_t i = 0; i < n; ++i) {
    full_edges[i] = full_causal_edges(data[i].spans.seq_len(), n_layers);
    if (pc) {
      const auto s = effective_schedule(*pc, data[i].spans, n_layers);
      effective_edges[i] = count_enabled_edges(&s, data[i].spans.seq_len(), n_layers);
    }
    random_budget[i] = pc && !o.edge_budget ? effective_edges[i] : o.edge_budget.value_or(0);
    if (o.random_seed && random_budget[i] > full_edges[i]) {
      throw ConfigError(fmt::format("--edge-budget {} exceeds the {} causal edges of example {}",
                                    random_budget[i], full_edges[i], data[i].id));
    }
  }

  auto mean = [&](const std::vector<std::size_t>& v) {
    double s = 0.0;
    for (std::size_t x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
  };
  auto fraction = [&](const std::vector<std::size_t>& v) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += static_cast<double>(v[i]);
      b += static_cast<double>(full_edges[i]);
    }
    return a / b;
  };

  CsvWriter csv(o.out, kPathwaysHeader);
  const double full_acc = accuracy(params, data).accuracy;
  csv.row({"full", format_real(mean(full_edges)), format_real(1.0), format_real(full_acc)});
  json results = {{"full", {{"edge_count", mean(full_edges)}, {"accuracy", full_acc}}}};
  if (pc) {
    const double acc = accuracy(params, data, [&](const SpanMap& m, std::size_t l) {
      return effective_schedule(*pc, m, l);
    }).accuracy;
    csv.row({"effective", format_real(mean(effective_edges)), format_real(fraction(effective_edges)),
             format_real(acc)});
    results["effective"] = {{"edge_count", mean(effective_edges)}, {"accuracy", acc}};
  }
  if (o.random_seed) {
    // Schedules are keyed by dataset position so every example draws its own pattern.
    std::vector<InterventionSchedule> schedules;
    schedules.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      schedules.push_back(random_schedule(data[i].spans, n_layers, random_budget[i],
                                          derive_seed(*o.random_seed, i)));
    }
    std::vector<TokenId> predictions(n);
    parallel_for(n, [&](std::size_t i) {
      const ForwardTrace t = forward(params, data[i].tokens, &schedules[i]);
      predictions[i] = argmax_token(t.logits.row(data[i].spans.last_index), data[i].candidates);
    });
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += predictions[i] == data[i].answer_token;
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    csv.row({"random", format_real(mean(random_budget)), format_real(fraction(random_budget)),
             format_real(acc)});
    results["random"] = {{"edge_count", mean(random_budget)}, {"accuracy", acc}};
    manifest.set_seed("random_seed", *o.random_seed);
  }
  csv.close();

  if (pc) manifest.set_config("pathway", to_json(*pc));
  if (o.edge_budget) manifest.set_config("edge_budget", *o.edge_budget);
  manifest.add_input(o.checkpoint);
  manifest.add_input(o.data);
  if (!o.pathway_config.empty()) manifest.add_input(o.pathway_config);
  manifest.add_output(o.out);
  manifest.set_result("examples", n);
  manifest.set_result("rows", results);
  write_done(manifest, o.out);
  return kOk;
}

int cmd_select_ranges(const SelectRangesOptions& o, const Argv& argv) {
  RunManifest manifest("select-ranges", argv);
  if (o.interval == 0) throw ConfigError("--interval must be >= 1");
  // flow -> layer -> (sum over tasks, count)
  std::map<std::string, std::map<std::size_t, std::pair<double, std::size_t>>> acc;
  for (const auto& path : o.knockout_csvs) {
    const CsvTable t = read_csv(path, kKnockoutHeader);
    for (const auto& row : t.rows) {
      if (row[1] != "mean") continue;
      const std::size_t layer = as_config(path, [&] { return std::stoul(row[4]); });
      const double v = as_config(path, [&] { return std::stod(row[7]); });
      auto& cell = acc[row[2]][layer];
      cell.first += v;
      ++cell.second;
    }
    manifest.add_input(path);
  }
  if (acc.empty()) throw ConfigError("select-ranges: no mean rows in the knockout CSVs");

  std::map<std::string, std::vector<double>> curves;
  for (const auto& [flow, layers] : acc) {
    std::vector<double> curve;
    for (const auto& [layer, cell] : layers) {
      if (layer != curve.size()) throw ConfigError("select-ranges: flow " + flow + " misses layers");
      curve.push_back(cell.first / static_cast<double>(cell.second));
    }
    curves[flow] = std::move(curve);
  }
  const SweepTable table =
      as_config("select-ranges", [&] { return sweep_table_from_curves(curves, o.interval, o.threshold); });
  const auto ranges = select_effective_ranges(table);
  const PathwayConfig pc =
      as_config("select-ranges", [&] { return pathway_config_from_ranges(ranges, table.n_layers); });

  std::ofstream out(o.out);
  if (!out) throw std::runtime_error("cannot write " + o.out);
  out << to_json(pc).dump(2) << '\n';
  out.close();

  json table_json = json::object();
  json selected = json::object();
  for (const auto& [flow, means] : table.rows) table_json[flow] = means;
  for (const auto& [flow, rs] : ranges) {
    selected[flow] = json::array();
    for (const LayerRange& r : rs) selected[flow].push_back(layer_label(r));
    std::cout << fmt::format("{:<28}", flow);
    for (double m : table.rows.at(flow)) std::cout << fmt::format(" {:>7.1f}", m);
    std::cout << '\n';
  }
  manifest.set_config("interval", o.interval);
  manifest.set_config("threshold", o.threshold);
  manifest.add_output(o.out);
  manifest.set_result("n_layers", table.n_layers);
  manifest.set_result("interval_means", table_json);
  manifest.set_result("selected", selected);
  write_done(manifest, o.out);
  return kOk;
}

int cmd_plot(const std::vector<std::string>& passthrough) {
  std::vector<std::string> args{"python3", "-m", "plotkit"};
  args.insert(args.end(), passthrough.begin(), passthrough.end());
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  cargs.push_back(nullptr);
  pid_t pid = 0;
  if (posix_spawnp(&pid, "python3", nullptr, nullptr, cargs.data(), environ) != 0) {
    std::cerr << "plot: python3 not available\n";
    return kRuntime;
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return kRuntime;
  }
  if (!WIFEXITED(status)) return kRuntime;
  const int code = WEXITSTATUS(status);
  // python exits 1 when the module cannot be found.
  return code == 0 ? kOk : (code == 2 ? kUsage : kRuntime);
}

}  // namespace attnflow::cli
