#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnflow/schedule.hpp"
#include "attnflow/segments.hpp"

namespace attnflow {

// Which flows stay enabled when everything else is blocked. Ranges are
// inclusive and 0-based; cutoffs are exclusive layer bounds (flows into that
// segment are allowed only at layers < cutoff). Template ("other") tokens are
// treated as question tokens.
struct PathwayConfig {
  std::vector<LayerRange> cross_frame;
  std::vector<LayerRange> video_to_question;
  std::vector<LayerRange> question_to_last;
  std::vector<LayerRange> video_to_last;  // blocked everywhere when empty
  std::vector<LayerRange> last_to_last;   // blocked everywhere when empty
  std::size_t video_inbound_cutoff = 0;
  std::size_t question_inbound_cutoff = 0;
  std::size_t intra_frame_enabled_until = 0;
  std::size_t intra_question_enabled_until = 0;

  // Throws std::invalid_argument on ranges outside [0, n_layers) or cutoffs
  // that would cut a flow before its range ends.
  void validate(std::size_t n_layers) const;
  bool operator==(const PathwayConfig&) const = default;
};

nlohmann::json to_json(const PathwayConfig& config);
PathwayConfig pathway_config_from_json(const nlohmann::json& j);

enum class EdgeCategory {
  IntraFrame,
  CrossFrame,
  VideoToQuestion,
  IntraQuestion,
  QuestionToLast,
  VideoToLast,
  LastToLast,
};
constexpr std::size_t kEdgeCategories = 7;

std::string_view edge_category_name(EdgeCategory c);

// Category of the causal pair (target t, source s <= t).
EdgeCategory classify_edge(const SpanMap& map, Index target, Index source);
bool edge_enabled(const PathwayConfig& config, EdgeCategory category, std::size_t layer);

// Complement schedule: blocks every causal pair the config does not enable.
InterventionSchedule effective_schedule(const PathwayConfig& config, const SpanMap& map,
                                        std::size_t n_layers);

// Blocks causal pairs drawn uniformly without replacement (over all layers,
// self-pairs included) until exactly `target_enabled_edges` remain.
InterventionSchedule random_schedule(const SpanMap& map, std::size_t n_layers,
                                     std::size_t target_enabled_edges, std::uint64_t seed);

// Mean %p_change per flow over consecutive layer intervals of `interval`
// layers (the last may be shorter).
struct SweepTable {
  std::size_t n_layers = 0;
  std::size_t interval = 5;
  double threshold = -5.0;
  std::map<std::string, std::vector<double>> rows;

  std::size_t n_intervals() const { return (n_layers + interval - 1) / interval; }
  LayerRange interval_range(std::size_t i) const;
  void validate() const;
};

// Per flow: intervals whose mean is strictly below the threshold, with
// adjacent selected intervals merged.
std::map<std::string, std::vector<LayerRange>> select_effective_ranges(const SweepTable& sweep);

// Interval means from per-layer mean %p_change curves.
SweepTable sweep_table_from_curves(const std::map<std::string, std::vector<double>>& per_layer,
                                   std::size_t interval, double threshold);

// Config from selected ranges keyed "cross-frame", "video-question",
// "question-last" and, when present, "video-last" and "last-last"; other keys
// are ignored. Video positions stop receiving after the last
// video->question layer, question positions after the last question->last
// layer; intra-segment attention runs until those cutoffs.
PathwayConfig pathway_config_from_ranges(const std::map<std::string, std::vector<LayerRange>>& ranges,
                                         std::size_t n_layers);

// "L6-15" style label (1-based).
std::string layer_label(const LayerRange& r);

}  // namespace attnflow
