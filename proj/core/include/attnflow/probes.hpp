#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnflow/model.hpp"
#include "attnflow/schedule.hpp"
#include "attnflow/segments.hpp"
#include "attnflow/synthvqa.hpp"

namespace attnflow {

// 100 * (p_knockout - p_base) / p_base. Throws when p_base <= 0.
double percent_change(double p_base, double p_knockout);

// Named source -> target interactions used by knockout sweeps.
enum class Flow {
  None,
  CrossFrame,
  VideoToQuestion,
  VideoToLast,
  QuestionToLast,
  NonOptionToLast,
  TrueOptionToLast,
  FalseOptionsToLast,
  VideoToTrueOption,
  NonOptionToTrueOption,
};

std::string_view flow_name(Flow flow);  // "cross-frame", "video-question", ...
Flow parse_flow(std::string_view name);
std::vector<Flow> all_flows();

// Schedule blocking `flow` over `layers`. Flow::None yields an empty schedule.
InterventionSchedule flow_schedule(Flow flow, const SpanMap& map, LayerRange layers,
                                   std::size_t n_layers);

struct SweepPoint {
  std::size_t center_layer = 0;
  double p_base = 0.0;
  double p_knockout = 0.0;
  double pct_change = 0.0;
};

struct SweepCurve {
  std::string flow;
  std::size_t window_k = 9;
  TokenId answer = 0;
  std::vector<SweepPoint> points;  // one per center layer, ascending
};

// Windowed knockout at every center layer. p is the last-position softmax
// probability of the unintervened argmax token.
SweepCurve knockout_sweep(const ModelParams& params, std::span<const TokenId> tokens,
                          const SpanMap& map, Flow flow, std::size_t window_k);
SweepCurve knockout_sweep(const ModelParams& params, std::span<const TokenId> tokens,
                          const SpanMap& map, const SegmentSelector& source,
                          const SegmentSelector& target, std::size_t window_k);

struct AnswerProbCurve {
  std::vector<TokenId> candidates;
  std::vector<bool> is_true;
  // (n_layers + 1) x candidates; row l decodes hidden[l] at the last position.
  Matrix probabilities;
};

AnswerProbCurve answer_prob_curve(const ModelParams& params, std::span<const TokenId> tokens,
                                  const SpanMap& map, std::span<const TokenId> candidates,
                                  TokenId true_token);

struct KeywordSets {
  std::vector<std::pair<std::string, std::vector<TokenId>>> categories;

  // Throws when a token appears in two categories.
  void validate() const;
  static KeywordSets from_vocab();
};

struct LensCell {
  std::size_t count = 0;
  std::size_t total_video_tokens = 0;
  double frequency = 0.0;
};

struct LogitLensReport {
  std::vector<std::string> categories;
  // [layer][category], layers 0..n_layers.
  std::vector<std::vector<LensCell>> cells;

  // Copy with each category's frequencies divided by that category's maximum
  // over layers (all-zero categories stay zero).
  LogitLensReport max_normalised() const;
};

// Top-1 decoding of every video position at every layer, counted per category.
LogitLensReport logit_lens_report(const ModelParams& params, std::span<const Example> examples,
                                  const KeywordSets& keywords);

struct AttentionMap {
  std::vector<Index> queries;
  std::vector<Index> keys;
  Matrix weights;  // queries x keys
};

AttentionMap attention_map(const ModelParams& params, std::span<const TokenId> tokens,
                           const SpanMap& map, std::size_t layer, std::size_t head,
                           const SegmentSelector& queries, const SegmentSelector& keys,
                           const InterventionSchedule* schedule = nullptr);

// Builds a per-example schedule from its span map and the model depth.
using ScheduleBuilder = std::function<InterventionSchedule(const SpanMap&, std::size_t n_layers)>;

struct AccuracyResult {
  double accuracy = 0.0;
  std::vector<TokenId> predictions;  // argmax over each example's candidates
};

AccuracyResult accuracy(const ModelParams& params, std::span<const Example> dataset,
                        const ScheduleBuilder& schedule = {});

// Examples whose unintervened top-1 token at the last position is the answer.
std::vector<std::size_t> correct_subset(const ModelParams& params,
                                        std::span<const Example> dataset);

struct SweepSummary {
  std::size_t total = 0;
  std::vector<std::size_t> kept;   // dataset positions that passed the filter
  std::vector<SweepCurve> curves;  // aligned with kept
  SweepCurve mean;
};

// Sweeps over the correctly answered subset and averages pointwise.
SweepSummary sweep_dataset(const ModelParams& params, std::span<const Example> dataset,
                           Flow flow, std::size_t window_k);

// Pointwise mean of curves sharing flow, window and layer count.
SweepCurve mean_curve(std::span<const SweepCurve> curves);

}  // namespace attnflow
