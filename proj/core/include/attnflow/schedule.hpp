#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnflow/segments.hpp"

namespace attnflow {

// Inclusive, 0-based layer range [first, last].
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;

  bool contains(std::size_t l) const { return l >= first && l <= last; }
  std::size_t size() const { return last - first + 1; }
  bool operator==(const LayerRange&) const = default;
};

// Every target position in `targets` is barred from reading every position
// in `sources`. Pairs with source > target are allowed but carry no edge.
struct BlockRect {
  std::vector<Index> targets;  // sorted, unique
  std::vector<Index> sources;  // sorted, unique
  bool empty() const { return targets.empty() || sources.empty(); }
  bool operator==(const BlockRect&) const = default;
};

// Per-layer set of blocked (target, source) attention pairs; applied as an
// additive -inf on the pre-softmax scores of every head.
class InterventionSchedule {
 public:
  InterventionSchedule(std::size_t n_layers, std::size_t seq_len);

  std::size_t n_layers() const { return layers_.size(); }
  std::size_t seq_len() const { return seq_len_; }

  // Adds a rectangle to one layer. Empty rectangles and exact duplicates are
  // ignored. Throws std::out_of_range on bad layer or position indices.
  void add(std::size_t layer, BlockRect rect);

  const std::vector<BlockRect>& rects(std::size_t layer) const { return layers_.at(layer); }
  bool has_blocks(std::size_t layer) const { return !layers_.at(layer).empty(); }
  bool empty() const;

  // Dense seq_len x seq_len row-major mask: mask[t * N + s] = 1 when blocked.
  std::vector<unsigned char> blocked_mask(std::size_t layer) const;
  // Distinct blocked pairs with s <= t, sorted by (t, s).
  std::vector<std::pair<Index, Index>> blocked_causal_pairs(std::size_t layer) const;
  std::size_t blocked_causal_count(std::size_t layer) const;

  // Union under blocked-set semantics. Shapes must match.
  InterventionSchedule merged(const InterventionSchedule& other) const;

 private:
  std::size_t seq_len_;
  std::vector<std::vector<BlockRect>> layers_;
};

// Adds source -> target blocking over `layers` (inclusive). An empty
// selector resolution is a no-op; an invalid layer range throws.
InterventionSchedule block(InterventionSchedule schedule, const SegmentSelector& source,
                           const SegmentSelector& target, LayerRange layers,
                           const SpanMap& map);

// Blocks every frame i >= 1 from reading frames [0, i) over `layers`.
InterventionSchedule cross_frame_schedule(const SpanMap& map, LayerRange layers,
                                          std::size_t n_layers);

struct KnockoutSpec {
  SegmentSelector source = SegmentSelector::all_video();
  SegmentSelector target = SegmentSelector::last();
  std::size_t center_layer = 0;
  std::size_t window_k = 9;
};

// [l - k/2, l + k/2] clipped to [0, n_layers). k must be odd.
LayerRange knockout_window(std::size_t center_layer, std::size_t window_k, std::size_t n_layers);

InterventionSchedule windowed(const KnockoutSpec& spec, const SpanMap& map, std::size_t n_layers);

// L * N(N+1)/2.
std::size_t full_causal_edges(std::size_t seq_len, std::size_t n_layers);

// Enabled causal (query, key) pairs summed over layers. A null schedule means
// full causal attention.
std::size_t count_enabled_edges(const InterventionSchedule* schedule, std::size_t seq_len,
                                std::size_t n_layers);

// Sorted index set <-> list of half-open [begin, end) runs.
std::vector<Range> to_runs(const std::vector<Index>& sorted_indices);

nlohmann::json to_json(const InterventionSchedule& schedule);
InterventionSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace attnflow
