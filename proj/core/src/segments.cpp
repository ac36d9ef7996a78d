#include "attnflow/segments.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace attnflow {

std::size_t video_token_count(std::size_t n_frames, std::size_t tokens_per_frame) {
  if (n_frames == 0 || tokens_per_frame == 0) {
    throw std::invalid_argument("video_token_count: frames and tokens_per_frame must be >= 1");
  }
  return n_frames * tokens_per_frame;
}

std::size_t SpanMap::video_tokens() const {
  std::size_t n = 0;
  for (const Range& r : frame_spans) n += r.size();
  return n;
}

void SpanMap::validate() const {
  const std::size_t n = seq_len();
  std::vector<int> owner(n, 0);
  auto claim = [&](const Range& r, const char* what) {
    if (r.end > n) throw std::invalid_argument(std::string("span map: ") + what + " exceeds sequence");
    for (Index i = r.begin; i < r.end; ++i) {
      if (owner[i]++) throw std::invalid_argument(std::string("span map: ") + what + " overlaps another span");
    }
  };
  if (frame_spans.empty()) throw std::invalid_argument("span map: no frames");
  Index expect = 0;
  for (const Range& r : frame_spans) {
    if (r.empty() || r.begin != expect) {
      throw std::invalid_argument("span map: frame spans must be contiguous, non-empty and start at 0");
    }
    expect = r.end;
    claim(r, "frame span");
  }
  claim(non_option_question_span, "question span");
  std::size_t n_true = 0;
  for (const OptionSpan& o : option_spans) {
    if (o.range.empty()) throw std::invalid_argument("span map: empty option span");
    claim(o.range, "option span");
    n_true += o.is_true ? 1 : 0;
  }
  if (!option_spans.empty() && n_true != 1) {
    throw std::invalid_argument("span map: exactly one option must be true");
  }
  for (const Range& r : other_spans) claim(r, "other span");
  claim(Range{last_index, last_index + 1}, "last index");
  for (Index i = 0; i < n; ++i) {
    if (owner[i] != 1) throw std::invalid_argument("span map: spans do not cover the sequence");
  }
  const Index video_end = frame_spans.back().end;
  auto after_video = [&](const Range& r) { return r.empty() || r.begin >= video_end; };
  if (!after_video(non_option_question_span) ||
      !std::all_of(other_spans.begin(), other_spans.end(), after_video) ||
      last_index < video_end) {
    throw std::invalid_argument("span map: frame spans must precede text spans");
  }
  Index q_begin = non_option_question_span.begin, q_end = non_option_question_span.end;
  for (const OptionSpan& o : option_spans) {
    q_begin = std::min(q_begin, o.range.begin);
    q_end = std::max(q_end, o.range.end);
  }
  if (question_span != Range{q_begin, q_end}) {
    throw std::invalid_argument("span map: question span must cover question and options");
  }
}

SpanMap build_span_map(const FrameLayout& layout, const QuestionTemplate& question,
                       std::size_t n_options, std::size_t true_option_index,
                       bool open_ended) {
  video_token_count(layout.n_frames, layout.tokens_per_frame);
  if (question.question_tokens == 0) {
    throw std::invalid_argument("build_span_map: question needs at least one token");
  }
  if (!open_ended) {
    if (n_options == 0) throw std::invalid_argument("build_span_map: multiple choice needs options");
    if (question.option_tokens == 0) {
      throw std::invalid_argument("build_span_map: option_tokens must be >= 1");
    }
    if (true_option_index >= n_options) {
      throw std::invalid_argument("build_span_map: true_option_index out of range");
    }
  }

  SpanMap map;
  Index pos = 0;
  for (std::size_t f = 0; f < layout.n_frames; ++f) {
    map.frame_spans.push_back({pos, pos + layout.tokens_per_frame});
    pos += layout.tokens_per_frame;
  }
  if (question.prefix_tokens > 0) {
    map.other_spans.push_back({pos, pos + question.prefix_tokens});
    pos += question.prefix_tokens;
  }
  map.non_option_question_span = {pos, pos + question.question_tokens};
  pos += question.question_tokens;
  if (!open_ended) {
    for (std::size_t o = 0; o < n_options; ++o) {
      map.option_spans.push_back({{pos, pos + question.option_tokens}, o == true_option_index});
      pos += question.option_tokens;
    }
  }
  map.question_span = {map.non_option_question_span.begin, pos};
  if (question.suffix_tokens > 0) {
    map.other_spans.push_back({pos, pos + question.suffix_tokens});
    pos += question.suffix_tokens;
  }
  map.last_index = pos;
  map.validate();
  return map;
}

bool SegmentSelector::may_be_empty() const {
  return kind_ == Kind::FramesBefore || kind_ == Kind::FalseOptions || kind_ == Kind::Other;
}

std::string SegmentSelector::to_string() const {
  switch (kind_) {
    case Kind::AllVideo: return "video";
    case Kind::Frame: return "frame:" + std::to_string(frame_);
    case Kind::FramesBefore: return "frames-before:" + std::to_string(frame_);
    case Kind::NonOptionQuestion: return "non-option-question";
    case Kind::TrueOption: return "true-option";
    case Kind::FalseOptions: return "false-options";
    case Kind::WholeQuestion: return "question";
    case Kind::Last: return "last";
    case Kind::Other: return "other";
    case Kind::All: return "all";
  }
  return "?";
}

SegmentSelector SegmentSelector::parse(std::string_view text) {
  auto with_index = [&](std::string_view prefix) -> std::size_t {
    const std::string rest(text.substr(prefix.size()));
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (rest.empty() || used != rest.size()) {
      throw std::invalid_argument("bad selector index: " + std::string(text));
    }
    return v;
  };
  if (text == "video") return all_video();
  if (text == "non-option-question") return non_option_question();
  if (text == "true-option") return true_option();
  if (text == "false-options") return false_options();
  if (text == "question") return whole_question();
  if (text == "last") return last();
  if (text == "other") return other();
  if (text == "all") return all();
  if (text.starts_with("frame:")) return frame(with_index("frame:"));
  if (text.starts_with("frames-before:")) return frames_before(with_index("frames-before:"));
  throw std::invalid_argument("unknown selector: " + std::string(text));
}

namespace {
void append(std::vector<Index>& out, const Range& r) {
  for (Index i = r.begin; i < r.end; ++i) out.push_back(i);
}
}  // namespace

std::vector<Index> select(const SpanMap& map, const SegmentSelector& selector) {
  using Kind = SegmentSelector::Kind;
  std::vector<Index> out;
  switch (selector.kind()) {
    case Kind::AllVideo:
      for (const Range& r : map.frame_spans) append(out, r);
      break;
    case Kind::Frame:
      if (selector.frame_index() >= map.n_frames()) {
        throw std::invalid_argument("select: frame index out of range");
      }
      append(out, map.frame_spans[selector.frame_index()]);
      break;
    case Kind::FramesBefore:
      if (selector.frame_index() > map.n_frames()) {
        throw std::invalid_argument("select: frames-before index out of range");
      }
      for (std::size_t f = 0; f < selector.frame_index(); ++f) append(out, map.frame_spans[f]);
      break;
    case Kind::NonOptionQuestion:
      append(out, map.non_option_question_span);
      break;
    case Kind::TrueOption:
      for (const OptionSpan& o : map.option_spans)
        if (o.is_true) append(out, o.range);
      break;
    case Kind::FalseOptions:
      for (const OptionSpan& o : map.option_spans)
        if (!o.is_true) append(out, o.range);
      break;
    case Kind::WholeQuestion:
      append(out, map.non_option_question_span);
      for (const OptionSpan& o : map.option_spans) append(out, o.range);
      break;
    case Kind::Last:
      out.push_back(map.last_index);
      break;
    case Kind::Other:
      for (const Range& r : map.other_spans) append(out, r);
      break;
    case Kind::All:
      append(out, {0, map.seq_len()});
      break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty() && !selector.may_be_empty()) {
    throw std::invalid_argument("select: selector '" + selector.to_string() +
                                "' resolves to no positions");
  }
  return out;
}

SegmentCategory category_of(const SpanMap& map, Index position) {
  if (position == map.last_index) return SegmentCategory::Last;
  for (const Range& r : map.frame_spans)
    if (r.contains(position)) return SegmentCategory::Video;
  if (map.question_span.contains(position)) return SegmentCategory::Question;
  for (const Range& r : map.other_spans)
    if (r.contains(position)) return SegmentCategory::Other;
  throw std::invalid_argument("category_of: position outside the sequence");
}

std::size_t frame_of(const SpanMap& map, Index position) {
  for (std::size_t f = 0; f < map.frame_spans.size(); ++f)
    if (map.frame_spans[f].contains(position)) return f;
  throw std::invalid_argument("frame_of: not a video position");
}

namespace {
nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.begin, r.end}); }
Range range_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("span map: range must be [begin, end]");
  return {j.at(0).get<Index>(), j.at(1).get<Index>()};
}
}  // namespace

nlohmann::json to_json(const SpanMap& map) {
  nlohmann::json j;
  j["frames"] = nlohmann::json::array();
  for (const Range& r : map.frame_spans) j["frames"].push_back(range_json(r));
  j["question"] = range_json(map.question_span);
  j["non_option_question"] = range_json(map.non_option_question_span);
  j["options"] = nlohmann::json::array();
  for (const OptionSpan& o : map.option_spans) {
    j["options"].push_back({{"range", range_json(o.range)}, {"is_true", o.is_true}});
  }
  j["other"] = nlohmann::json::array();
  for (const Range& r : map.other_spans) j["other"].push_back(range_json(r));
  j["last_index"] = map.last_index;
  return j;
}

SpanMap span_map_from_json(const nlohmann::json& j) {
  SpanMap map;
  try {
    for (const auto& r : j.at("frames")) map.frame_spans.push_back(range_from(r));
    map.question_span = range_from(j.at("question"));
    map.non_option_question_span = range_from(j.at("non_option_question"));
    for (const auto& o : j.at("options")) {
      map.option_spans.push_back({range_from(o.at("range")), o.at("is_true").get<bool>()});
    }
    for (const auto& r : j.at("other")) map.other_spans.push_back(range_from(r));
    map.last_index = j.at("last_index").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("span map json: ") + e.what());
  }
  map.validate();
  return map;
}

}  // namespace attnflow
