#include "attnflow/probes.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "attnflow/parallel.hpp"

namespace attnflow {

double percent_change(double p_base, double p_knockout) {
  if (!(p_base > 0.0)) throw std::invalid_argument("percent_change: p_base must be > 0");
  return 100.0 * (p_knockout - p_base) / p_base;
}

namespace {

struct FlowInfo {
  Flow flow;
  std::string_view name;
};

constexpr FlowInfo kFlows[] = {
    {Flow::None, "none"},
    {Flow::CrossFrame, "cross-frame"},
    {Flow::VideoToQuestion, "video-question"},
    {Flow::VideoToLast, "video-last"},
    {Flow::QuestionToLast, "question-last"},
    {Flow::NonOptionToLast, "non-option-question-last"},
    {Flow::TrueOptionToLast, "true-option-last"},
    {Flow::FalseOptionsToLast, "false-options-last"},
    {Flow::VideoToTrueOption, "video-true-option"},
    {Flow::NonOptionToTrueOption, "non-option-question-true-option"},
};

Vector last_position_probs(const ForwardTrace& trace) {
  const auto row = trace.logits.row(trace.logits.rows() - 1);
  Vector p(row.begin(), row.end());
  softmax(p);
  return p;
}

using WindowBuilder = std::function<InterventionSchedule(LayerRange)>;

SweepCurve run_sweep(const ModelParams& params, std::span<const TokenId> tokens,
                     std::size_t window_k, std::string name, const WindowBuilder& build) {
  const std::size_t n_layers = params.config.n_layers;
  knockout_window(0, window_k, n_layers);  // validates k
  const Vector base = last_position_probs(forward(params, tokens));
  const TokenId answer = argmax_token(base, {});
  SweepCurve curve{std::move(name), window_k, answer, {}};
  curve.points.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const InterventionSchedule schedule = build(knockout_window(l, window_k, n_layers));
    double p_knock = base[answer];
    if (!schedule.empty()) p_knock = last_position_probs(forward(params, tokens, &schedule))[answer];
    curve.points[l] = {l, base[answer], p_knock, percent_change(base[answer], p_knock)};
  }
  return curve;
}

}  // namespace

std::string_view flow_name(Flow flow) {
  for (const FlowInfo& f : kFlows)
    if (f.flow == flow) return f.name;
  return "?";
}

Flow parse_flow(std::string_view name) {
  for (const FlowInfo& f : kFlows)
    if (f.name == name) return f.flow;
  throw std::invalid_argument("unknown flow: " + std::string(name));
}

std::vector<Flow> all_flows() {
  std::vector<Flow> out;
  for (const FlowInfo& f : kFlows) out.push_back(f.flow);
  return out;
}

InterventionSchedule flow_schedule(Flow flow, const SpanMap& map, LayerRange layers,
                                   std::size_t n_layers) {
  using S = SegmentSelector;
  InterventionSchedule empty(n_layers, map.seq_len());
  auto pair = [&](const S& src, const S& dst) {
    return block(InterventionSchedule(n_layers, map.seq_len()), src, dst, layers, map);
  };
  switch (flow) {
    case Flow::None:
      if (layers.first > layers.last || layers.last >= n_layers) {
        throw std::invalid_argument("flow_schedule: invalid layer range");
      }
      return empty;
    case Flow::CrossFrame: return cross_frame_schedule(map, layers, n_layers);
    case Flow::VideoToQuestion: return pair(S::all_video(), S::whole_question());
    case Flow::VideoToLast: return pair(S::all_video(), S::last());
    case Flow::QuestionToLast: return pair(S::whole_question(), S::last());
    case Flow::NonOptionToLast: return pair(S::non_option_question(), S::last());
    case Flow::TrueOptionToLast: return pair(S::true_option(), S::last());
    case Flow::FalseOptionsToLast: return pair(S::false_options(), S::last());
    case Flow::VideoToTrueOption: return pair(S::all_video(), S::true_option());
    case Flow::NonOptionToTrueOption: return pair(S::non_option_question(), S::true_option());
  }
  return empty;
}

SweepCurve knockout_sweep(const ModelParams& params, std::span<const TokenId> tokens,
                          const SpanMap& map, Flow flow, std::size_t window_k) {
  const std::size_t n_layers = params.config.n_layers;
  return run_sweep(params, tokens, window_k, std::string(flow_name(flow)), [&](LayerRange r) {
    return flow_schedule(flow, map, r, n_layers);
  });
}

SweepCurve knockout_sweep(const ModelParams& params, std::span<const TokenId> tokens,
                          const SpanMap& map, const SegmentSelector& source,
                          const SegmentSelector& target, std::size_t window_k) {
  const std::size_t n_layers = params.config.n_layers;
  return run_sweep(params, tokens, window_k, source.to_string() + "->" + target.to_string(),
                   [&](LayerRange r) {
                     return block(InterventionSchedule(n_layers, map.seq_len()), source, target, r,
                                  map);
                   });
}

AnswerProbCurve answer_prob_curve(const ModelParams& params, std::span<const TokenId> tokens,
                                  const SpanMap& map, std::span<const TokenId> candidates,
                                  TokenId true_token) {
  for (TokenId c : candidates) {
    if (c >= params.config.vocab_size) {
      throw std::invalid_argument("answer_prob_curve: candidate outside vocabulary");
    }
  }
  const ForwardTrace trace = forward(params, tokens);
  AnswerProbCurve curve;
  curve.candidates.assign(candidates.begin(), candidates.end());
  for (TokenId c : candidates) curve.is_true.push_back(c == true_token);
  curve.probabilities = Matrix(trace.hidden.size(), candidates.size());
  for (std::size_t l = 0; l < trace.hidden.size(); ++l) {
    Vector p = logits_from_hidden(params, trace.hidden[l].row(map.last_index));
    softmax(p);
    for (std::size_t c = 0; c < candidates.size(); ++c) curve.probabilities(l, c) = p[candidates[c]];
  }
  return curve;
}

void KeywordSets::validate() const {
  std::set<TokenId> seen;
  for (const auto& [name, ids] : categories) {
    for (TokenId id : ids) {
      if (!seen.insert(id).second) {
        throw std::invalid_argument("keyword sets: token " + std::to_string(id) +
                                    " appears in more than one category");
      }
    }
  }
}

KeywordSets KeywordSets::from_vocab() {
  KeywordSets k;
  for (auto& [name, ids] : keyword_categories()) k.categories.emplace_back(name, ids);
  return k;
}

LogitLensReport LogitLensReport::max_normalised() const {
  LogitLensReport out = *this;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double mx = 0.0;
    for (const auto& layer : cells) mx = std::max(mx, layer[c].frequency);
    if (mx == 0.0) continue;
    for (auto& layer : out.cells) layer[c].frequency /= mx;
  }
  return out;
}

LogitLensReport logit_lens_report(const ModelParams& params, std::span<const Example> examples,
                                  const KeywordSets& keywords) {
  if (examples.empty()) throw std::invalid_argument("logit_lens_report: no examples");
  keywords.validate();
  const std::size_t n_layers = params.config.n_layers;
  const std::size_t n_cat = keywords.categories.size();
  std::vector<int> category_of_token(params.config.vocab_size, -1);
  for (std::size_t c = 0; c < n_cat; ++c) {
    for (TokenId id : keywords.categories[c].second) {
      if (id < category_of_token.size()) category_of_token[id] = static_cast<int>(c);
    }
  }

  // counts[example][layer][category]
  std::vector<std::vector<std::vector<std::size_t>>> counts(
      examples.size(), std::vector<std::vector<std::size_t>>(n_layers + 1, std::vector<std::size_t>(n_cat, 0)));
  parallel_for(examples.size(), [&](std::size_t e) {
    const Example& ex = examples[e];
    const ForwardTrace trace = forward(params, ex.tokens);
    for (std::size_t l = 0; l <= n_layers; ++l) {
      for (Index pos : select(ex.spans, SegmentSelector::all_video())) {
        const Vector logits = logits_from_hidden(params, trace.hidden[l].row(pos));
        const int cat = category_of_token[argmax_token(logits, {})];
        if (cat >= 0) ++counts[e][l][static_cast<std::size_t>(cat)];
      }
    }
  });

  std::size_t total_video = 0;
  for (const Example& ex : examples) total_video += ex.spans.video_tokens();
  LogitLensReport report;
  for (const auto& [name, ids] : keywords.categories) report.categories.push_back(name);
  report.cells.assign(n_layers + 1, std::vector<LensCell>(n_cat));
  for (std::size_t l = 0; l <= n_layers; ++l) {
    for (std::size_t c = 0; c < n_cat; ++c) {
      std::size_t count = 0;
      for (std::size_t e = 0; e < examples.size(); ++e) count += counts[e][l][c];
      report.cells[l][c] = {count, total_video,
                            static_cast<double>(count) / static_cast<double>(total_video)};
    }
  }
  return report;
}

AttentionMap attention_map(const ModelParams& params, std::span<const TokenId> tokens,
                           const SpanMap& map, std::size_t layer, std::size_t head,
                           const SegmentSelector& queries, const SegmentSelector& keys,
                           const InterventionSchedule* schedule) {
  if (layer >= params.config.n_layers || head >= params.config.n_heads) {
    throw std::invalid_argument("attention_map: layer or head out of range");
  }
  if (map.seq_len() != tokens.size()) {
    throw std::invalid_argument("attention_map: span map does not match the sequence");
  }
  AttentionMap out{select(map, queries), select(map, keys), {}};
  const ForwardTrace trace = forward(params, tokens, schedule, true);
  const Matrix& w = trace.weights(layer, head);
  out.weights = Matrix(out.queries.size(), out.keys.size());
  for (std::size_t i = 0; i < out.queries.size(); ++i)
    for (std::size_t j = 0; j < out.keys.size(); ++j) out.weights(i, j) = w(out.queries[i], out.keys[j]);
  return out;
}

AccuracyResult accuracy(const ModelParams& params, std::span<const Example> dataset,
                        const ScheduleBuilder& schedule) {
  AccuracyResult result;
  if (dataset.empty()) return result;
  result.predictions.resize(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const Example& ex = dataset[i];
    std::optional<InterventionSchedule> s;
    if (schedule) s = schedule(ex.spans, params.config.n_layers);
    const ForwardTrace trace = forward(params, ex.tokens, s ? &*s : nullptr);
    result.predictions[i] = argmax_token(trace.logits.row(ex.spans.last_index), ex.candidates);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    correct += result.predictions[i] == dataset[i].answer_token ? 1 : 0;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return result;
}

std::vector<std::size_t> correct_subset(const ModelParams& params,
                                        std::span<const Example> dataset) {
  std::vector<unsigned char> ok(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const ForwardTrace trace = forward(params, dataset[i].tokens);
    ok[i] = argmax_token(trace.logits.row(dataset[i].spans.last_index), {}) ==
            dataset[i].answer_token;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (ok[i]) kept.push_back(i);
  return kept;
}

SweepCurve mean_curve(std::span<const SweepCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("mean_curve: no curves");
  SweepCurve mean = curves.front();
  mean.answer = 0;
  for (SweepPoint& p : mean.points) p.p_base = p.p_knockout = p.pct_change = 0.0;
  for (const SweepCurve& c : curves) {
    if (c.flow != mean.flow || c.window_k != mean.window_k || c.points.size() != mean.points.size()) {
      throw std::invalid_argument("mean_curve: curves disagree in flow, window or depth");
    }
    for (std::size_t l = 0; l < c.points.size(); ++l) {
      mean.points[l].p_base += c.points[l].p_base;
      mean.points[l].p_knockout += c.points[l].p_knockout;
      mean.points[l].pct_change += c.points[l].pct_change;
    }
  }
  const double n = static_cast<double>(curves.size());
  for (SweepPoint& p : mean.points) {
    p.p_base /= n;
    p.p_knockout /= n;
    p.pct_change /= n;
  }
  return mean;
}

SweepSummary sweep_dataset(const ModelParams& params, std::span<const Example> dataset,
                           Flow flow, std::size_t window_k) {
  SweepSummary summary;
  summary.total = dataset.size();
  summary.kept = correct_subset(params, dataset);
  summary.curves.resize(summary.kept.size());
  parallel_for(summary.kept.size(), [&](std::size_t i) {
    const Example& ex = dataset[summary.kept[i]];
    summary.curves[i] = knockout_sweep(params, ex.tokens, ex.spans, flow, window_k);
  });
  if (!summary.curves.empty()) summary.mean = mean_curve(summary.curves);
  return summary;
}

}  // namespace attnflow
