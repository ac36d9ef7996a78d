#include "attnflow/schedule.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace attnflow {

InterventionSchedule::InterventionSchedule(std::size_t n_layers, std::size_t seq_len)
    : seq_len_(seq_len), layers_(n_layers) {}

void InterventionSchedule::add(std::size_t layer, BlockRect rect) {
  if (layer >= layers_.size()) throw std::out_of_range("schedule: layer index out of range");
  auto normalise = [this](std::vector<Index>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (!v.empty() && v.back() >= seq_len_) {
      throw std::out_of_range("schedule: position index out of range");
    }
  };
  normalise(rect.targets);
  normalise(rect.sources);
  if (rect.empty()) return;
  auto& rects = layers_[layer];
  if (std::find(rects.begin(), rects.end(), rect) != rects.end()) return;
  rects.push_back(std::move(rect));
}

bool InterventionSchedule::empty() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const auto& r) { return r.empty(); });
}

std::vector<unsigned char> InterventionSchedule::blocked_mask(std::size_t layer) const {
  std::vector<unsigned char> mask(seq_len_ * seq_len_, 0);
  for (const BlockRect& rect : layers_.at(layer)) {
    for (Index t : rect.targets) {
      unsigned char* row = mask.data() + t * seq_len_;
      for (Index s : rect.sources) row[s] = 1;
    }
  }
  return mask;
}

std::vector<std::pair<Index, Index>> InterventionSchedule::blocked_causal_pairs(
    std::size_t layer) const {
  std::vector<std::pair<Index, Index>> pairs;
  if (!has_blocks(layer)) return pairs;
  const auto mask = blocked_mask(layer);
  for (Index t = 0; t < seq_len_; ++t)
    for (Index s = 0; s <= t; ++s)
      if (mask[t * seq_len_ + s]) pairs.emplace_back(t, s);
  return pairs;
}

std::size_t InterventionSchedule::blocked_causal_count(std::size_t layer) const {
  if (!has_blocks(layer)) return 0;
  const auto mask = blocked_mask(layer);
  std::size_t n = 0;
  for (Index t = 0; t < seq_len_; ++t)
    for (Index s = 0; s <= t; ++s) n += mask[t * seq_len_ + s];
  return n;
}

InterventionSchedule InterventionSchedule::merged(const InterventionSchedule& other) const {
  if (other.n_layers() != n_layers() || other.seq_len() != seq_len()) {
    throw std::invalid_argument("schedule merge: shape mismatch");
  }
  InterventionSchedule out = *this;
  for (std::size_t l = 0; l < other.n_layers(); ++l)
    for (const BlockRect& r : other.rects(l)) out.add(l, r);
  return out;
}

InterventionSchedule block(InterventionSchedule schedule, const SegmentSelector& source,
                           const SegmentSelector& target, LayerRange layers,
                           const SpanMap& map) {
  if (layers.first > layers.last || layers.last >= schedule.n_layers()) {
    throw std::invalid_argument("block: invalid layer range");
  }
  if (map.seq_len() != schedule.seq_len()) {
    throw std::invalid_argument("block: span map length does not match schedule");
  }
  BlockRect rect{select(map, target), select(map, source)};
  if (rect.empty()) return schedule;
  for (std::size_t l = layers.first; l <= layers.last; ++l) schedule.add(l, rect);
  return schedule;
}

InterventionSchedule cross_frame_schedule(const SpanMap& map, LayerRange layers,
                                          std::size_t n_layers) {
  if (map.n_frames() == 0) throw std::invalid_argument("cross_frame_schedule: no frames");
  if (layers.first > layers.last || layers.last >= n_layers) {
    throw std::invalid_argument("cross_frame_schedule: invalid layer range");
  }
  InterventionSchedule schedule(n_layers, map.seq_len());
  for (std::size_t f = 1; f < map.n_frames(); ++f) {
    schedule = block(std::move(schedule), SegmentSelector::frames_before(f),
                     SegmentSelector::frame(f), layers, map);
  }
  return schedule;
}

LayerRange knockout_window(std::size_t center_layer, std::size_t window_k, std::size_t n_layers) {
  if (window_k == 0 || window_k % 2 == 0) {
    throw std::invalid_argument("knockout window size k must be odd");
  }
  if (center_layer >= n_layers) throw std::invalid_argument("knockout center layer out of range");
  const std::size_t half = window_k / 2;
  return {center_layer >= half ? center_layer - half : 0,
          std::min(center_layer + half, n_layers - 1)};
}

InterventionSchedule windowed(const KnockoutSpec& spec, const SpanMap& map, std::size_t n_layers) {
  const LayerRange window = knockout_window(spec.center_layer, spec.window_k, n_layers);
  return block(InterventionSchedule(n_layers, map.seq_len()), spec.source, spec.target, window, map);
}

std::size_t full_causal_edges(std::size_t seq_len, std::size_t n_layers) {
  return n_layers * seq_len * (seq_len + 1) / 2;
}

std::size_t count_enabled_edges(const InterventionSchedule* schedule, std::size_t seq_len,
                                std::size_t n_layers) {
  std::size_t total = full_causal_edges(seq_len, n_layers);
  if (schedule == nullptr) return total;
  if (schedule->seq_len() != seq_len || schedule->n_layers() != n_layers) {
    throw std::invalid_argument("count_enabled_edges: schedule shape mismatch");
  }
  for (std::size_t l = 0; l < n_layers; ++l) total -= schedule->blocked_causal_count(l);
  return total;
}

std::vector<Range> to_runs(const std::vector<Index>& sorted_indices) {
  std::vector<Range> runs;
  for (Index i : sorted_indices) {
    if (!runs.empty() && runs.back().end == i) {
      ++runs.back().end;
    } else {
      runs.push_back({i, i + 1});
    }
  }
  return runs;
}

namespace {
nlohmann::json runs_json(const std::vector<Index>& idx) {
  nlohmann::json j = nlohmann::json::array();
  for (const Range& r : to_runs(idx)) j.push_back({r.begin, r.end});
  return j;
}
std::vector<Index> runs_from(const nlohmann::json& j) {
  std::vector<Index> out;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2) throw std::invalid_argument("schedule json: bad range");
    for (Index i = r.at(0).get<Index>(); i < r.at(1).get<Index>(); ++i) out.push_back(i);
  }
  return out;
}
}  // namespace

nlohmann::json to_json(const InterventionSchedule& schedule) {
  nlohmann::json layers = nlohmann::json::object();
  for (std::size_t l = 0; l < schedule.n_layers(); ++l) {
    if (!schedule.has_blocks(l)) continue;
    nlohmann::json blocks = nlohmann::json::array();
    for (const BlockRect& r : schedule.rects(l)) {
      blocks.push_back({{"targets", runs_json(r.targets)}, {"sources", runs_json(r.sources)}});
    }
    layers[std::to_string(l)] = std::move(blocks);
  }
  return {{"n_layers", schedule.n_layers()}, {"seq_len", schedule.seq_len()}, {"layers", layers}};
}

InterventionSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    InterventionSchedule schedule(j.at("n_layers").get<std::size_t>(),
                                  j.at("seq_len").get<std::size_t>());
    for (const auto& [key, blocks] : j.at("layers").items()) {
      const std::size_t layer = std::stoul(key);
      for (const auto& b : blocks) {
        schedule.add(layer, {runs_from(b.at("targets")), runs_from(b.at("sources"))});
      }
    }
    return schedule;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("schedule json: ") + e.what());
  }
}

}  // namespace attnflow
