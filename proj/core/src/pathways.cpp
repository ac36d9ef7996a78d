#include "attnflow/pathways.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "attnflow/rng.hpp"

namespace attnflow {

namespace {

bool in_any(const std::vector<LayerRange>& ranges, std::size_t l) {
  return std::any_of(ranges.begin(), ranges.end(), [l](const LayerRange& r) { return r.contains(l); });
}

std::size_t end_of(const std::vector<LayerRange>& ranges) {
  std::size_t e = 0;
  for (const LayerRange& r : ranges) e = std::max(e, r.last + 1);
  return e;
}

nlohmann::json ranges_json(const std::vector<LayerRange>& ranges) {
  nlohmann::json j = nlohmann::json::array();
  for (const LayerRange& r : ranges) j.push_back({r.first, r.last});
  return j;
}

std::vector<LayerRange> ranges_from(const nlohmann::json& j) {
  std::vector<LayerRange> out;
  for (const auto& r : j) {
    if (!r.is_array() || r.size() != 2) throw std::invalid_argument("pathway config: range must be [first, last]");
    out.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
  }
  return out;
}

}  // namespace

void PathwayConfig::validate(std::size_t n_layers) const {
  for (const auto* ranges : {&cross_frame, &video_to_question, &question_to_last, &video_to_last,
                             &last_to_last}) {
    for (const LayerRange& r : *ranges) {
      if (r.first > r.last || r.last >= n_layers) {
        throw std::invalid_argument("pathway config: layer range outside [0, n_layers)");
      }
    }
  }
  for (std::size_t cutoff : {video_inbound_cutoff, question_inbound_cutoff,
                             intra_frame_enabled_until, intra_question_enabled_until}) {
    if (cutoff > n_layers) throw std::invalid_argument("pathway config: cutoff beyond model depth");
  }
  if (video_inbound_cutoff < end_of(cross_frame)) {
    throw std::invalid_argument("pathway config: video cutoff precedes the end of cross-frame range");
  }
  if (question_inbound_cutoff < end_of(video_to_question)) {
    throw std::invalid_argument(
        "pathway config: question cutoff precedes the end of video->question range");
  }
}

nlohmann::json to_json(const PathwayConfig& c) {
  return {{"cross_frame", ranges_json(c.cross_frame)},
          {"video_to_question", ranges_json(c.video_to_question)},
          {"question_to_last", ranges_json(c.question_to_last)},
          {"video_to_last", ranges_json(c.video_to_last)},
          {"last_to_last", ranges_json(c.last_to_last)},
          {"video_inbound_cutoff", c.video_inbound_cutoff},
          {"question_inbound_cutoff", c.question_inbound_cutoff},
          {"intra_frame_enabled_until", c.intra_frame_enabled_until},
          {"intra_question_enabled_until", c.intra_question_enabled_until}};
}

PathwayConfig pathway_config_from_json(const nlohmann::json& j) {
  PathwayConfig c;
  try {
    c.cross_frame = ranges_from(j.at("cross_frame"));
    c.video_to_question = ranges_from(j.at("video_to_question"));
    c.question_to_last = ranges_from(j.at("question_to_last"));
    if (j.contains("video_to_last")) c.video_to_last = ranges_from(j.at("video_to_last"));
    if (j.contains("last_to_last")) c.last_to_last = ranges_from(j.at("last_to_last"));
    c.video_inbound_cutoff = j.at("video_inbound_cutoff").get<std::size_t>();
    c.question_inbound_cutoff = j.at("question_inbound_cutoff").get<std::size_t>();
    c.intra_frame_enabled_until = j.value("intra_frame_enabled_until", c.video_inbound_cutoff);
    c.intra_question_enabled_until = j.value("intra_question_enabled_until", c.question_inbound_cutoff);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("pathway config json: ") + e.what());
  }
  return c;
}

std::string_view edge_category_name(EdgeCategory c) {
  switch (c) {
    case EdgeCategory::IntraFrame: return "intra-frame";
    case EdgeCategory::CrossFrame: return "cross-frame";
    case EdgeCategory::VideoToQuestion: return "video-question";
    case EdgeCategory::IntraQuestion: return "intra-question";
    case EdgeCategory::QuestionToLast: return "question-last";
    case EdgeCategory::VideoToLast: return "video-last";
    case EdgeCategory::LastToLast: return "last-last";
  }
  return "?";
}

EdgeCategory classify_edge(const SpanMap& map, Index target, Index source) {
  if (source > target) throw std::invalid_argument("classify_edge: non-causal pair");
  const SegmentCategory tc = category_of(map, target);
  const SegmentCategory sc = category_of(map, source);
  const bool src_video = sc == SegmentCategory::Video;
  switch (tc) {
    case SegmentCategory::Video:
      return frame_of(map, target) == frame_of(map, source) ? EdgeCategory::IntraFrame
                                                            : EdgeCategory::CrossFrame;
    case SegmentCategory::Question:
    case SegmentCategory::Other:
      return src_video ? EdgeCategory::VideoToQuestion : EdgeCategory::IntraQuestion;
    case SegmentCategory::Last:
      if (src_video) return EdgeCategory::VideoToLast;
      return sc == SegmentCategory::Last ? EdgeCategory::LastToLast : EdgeCategory::QuestionToLast;
  }
  throw std::logic_error("classify_edge: unreachable");
}

bool edge_enabled(const PathwayConfig& c, EdgeCategory category, std::size_t l) {
  switch (category) {
    case EdgeCategory::IntraFrame:
      return l < c.intra_frame_enabled_until && l < c.video_inbound_cutoff;
    case EdgeCategory::CrossFrame:
      return in_any(c.cross_frame, l) && l < c.video_inbound_cutoff;
    case EdgeCategory::VideoToQuestion:
      return in_any(c.video_to_question, l) && l < c.question_inbound_cutoff;
    case EdgeCategory::IntraQuestion:
      return l < c.intra_question_enabled_until && l < c.question_inbound_cutoff;
    case EdgeCategory::QuestionToLast: return in_any(c.question_to_last, l);
    case EdgeCategory::VideoToLast: return in_any(c.video_to_last, l);
    case EdgeCategory::LastToLast: return in_any(c.last_to_last, l);
  }
  return false;
}

InterventionSchedule effective_schedule(const PathwayConfig& config, const SpanMap& map,
                                        std::size_t n_layers) {
  config.validate(n_layers);
  const std::size_t n = map.seq_len();
  std::vector<std::vector<EdgeCategory>> category(n);
  for (Index t = 0; t < n; ++t)
    for (Index s = 0; s <= t; ++s) category[t].push_back(classify_edge(map, t, s));

  InterventionSchedule schedule(n_layers, n);
  for (std::size_t l = 0; l < n_layers; ++l) {
    bool enabled[kEdgeCategories];
    for (std::size_t c = 0; c < kEdgeCategories; ++c) {
      enabled[c] = edge_enabled(config, static_cast<EdgeCategory>(c), l);
    }
    for (Index t = 0; t < n; ++t) {
      BlockRect rect{{t}, {}};
      for (Index s = 0; s <= t; ++s) {
        if (!enabled[static_cast<std::size_t>(category[t][s])]) rect.sources.push_back(s);
      }
      schedule.add(l, std::move(rect));
    }
  }
  return schedule;
}

InterventionSchedule random_schedule(const SpanMap& map, std::size_t n_layers,
                                     std::size_t target_enabled_edges, std::uint64_t seed) {
  const std::size_t n = map.seq_len();
  const std::size_t per_layer = n * (n + 1) / 2;
  const std::size_t total = per_layer * n_layers;
  if (target_enabled_edges > total) {
    throw std::invalid_argument("random_schedule: edge budget exceeds full causal count");
  }
  const std::size_t to_block = total - target_enabled_edges;

  std::vector<std::size_t> ids(total);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < to_block; ++i) {
    std::swap(ids[i], ids[i + rng.below(total - i)]);
  }
  std::sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(to_block));

  // Causal pairs are numbered layer-major, then row-major over (t, s <= t).
  InterventionSchedule schedule(n_layers, n);
  std::size_t k = 0;
  while (k < to_block) {
    const std::size_t layer = ids[k] / per_layer;
    std::size_t within = ids[k] % per_layer;
    Index t = 0;
    while ((t + 1) * (t + 2) / 2 <= within) ++t;
    BlockRect rect{{t}, {}};
    const std::size_t row_begin = layer * per_layer + t * (t + 1) / 2;
    const std::size_t row_end = row_begin + t + 1;
    while (k < to_block && ids[k] < row_end) {
      rect.sources.push_back(ids[k] - row_begin);
      ++k;
    }
    schedule.add(layer, std::move(rect));
  }
  return schedule;
}

LayerRange SweepTable::interval_range(std::size_t i) const {
  return {i * interval, std::min((i + 1) * interval, n_layers) - 1};
}

void SweepTable::validate() const {
  if (rows.empty()) throw std::invalid_argument("sweep table: no rows");
  if (interval == 0 || n_layers == 0) throw std::invalid_argument("sweep table: empty layer span");
  for (const auto& [flow, values] : rows) {
    if (values.size() != n_intervals()) {
      throw std::invalid_argument("sweep table: row '" + flow + "' does not partition the layers");
    }
  }
}

std::map<std::string, std::vector<LayerRange>> select_effective_ranges(const SweepTable& sweep) {
  sweep.validate();
  std::map<std::string, std::vector<LayerRange>> out;
  for (const auto& [flow, values] : sweep.rows) {
    std::vector<LayerRange> ranges;
    bool open = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < sweep.threshold) {
        const LayerRange r = sweep.interval_range(i);
        if (open) {
          ranges.back().last = r.last;
        } else {
          ranges.push_back(r);
        }
        open = true;
      } else {
        open = false;
      }
    }
    out[flow] = std::move(ranges);
  }
  return out;
}

SweepTable sweep_table_from_curves(const std::map<std::string, std::vector<double>>& per_layer,
                                   std::size_t interval, double threshold) {
  if (per_layer.empty()) throw std::invalid_argument("sweep table: no curves");
  SweepTable table;
  table.n_layers = per_layer.begin()->second.size();
  table.interval = interval;
  table.threshold = threshold;
  if (interval == 0) throw std::invalid_argument("sweep table: interval must be >= 1");
  for (const auto& [flow, curve] : per_layer) {
    if (curve.size() != table.n_layers) {
      throw std::invalid_argument("sweep table: curves disagree in depth");
    }
    std::vector<double> means;
    for (std::size_t i = 0; i < table.n_intervals(); ++i) {
      const LayerRange r = table.interval_range(i);
      double sum = 0.0;
      for (std::size_t l = r.first; l <= r.last; ++l) sum += curve[l];
      means.push_back(sum / static_cast<double>(r.size()));
    }
    table.rows[flow] = std::move(means);
  }
  return table;
}

PathwayConfig pathway_config_from_ranges(
    const std::map<std::string, std::vector<LayerRange>>& ranges, std::size_t n_layers) {
  auto get = [&](const char* key) {
    const auto it = ranges.find(key);
    return it == ranges.end() ? std::vector<LayerRange>{} : it->second;
  };
  PathwayConfig c;
  c.cross_frame = get("cross-frame");
  c.video_to_question = get("video-question");
  c.question_to_last = get("question-last");
  c.video_to_last = get("video-last");
  c.last_to_last = get("last-last");
  c.video_inbound_cutoff = std::max(end_of(c.video_to_question), end_of(c.cross_frame));
  c.question_inbound_cutoff = std::max(end_of(c.question_to_last), end_of(c.video_to_question));
  c.intra_frame_enabled_until = c.video_inbound_cutoff;
  c.intra_question_enabled_until = c.question_inbound_cutoff;
  c.validate(n_layers);
  return c;
}

std::string layer_label(const LayerRange& r) {
  return "L" + std::to_string(r.first + 1) + "-" + std::to_string(r.last + 1);
}

}  // namespace attnflow
