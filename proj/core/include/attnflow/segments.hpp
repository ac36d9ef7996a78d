#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace attnflow {

using Index = std::size_t;

// Half-open index range [begin, end).
struct Range {
  Index begin = 0;
  Index end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool contains(Index i) const { return i >= begin && i < end; }
  bool operator==(const Range&) const = default;
};

// Video layout: T frames, each a 1-D strip of tokens_per_frame positions.
struct FrameLayout {
  std::size_t n_frames = 4;
  std::size_t tokens_per_frame = 8;

  std::size_t video_tokens() const { return n_frames * tokens_per_frame; }
  bool operator==(const FrameLayout&) const = default;
};

// N_v = T x tokens_per_frame. Throws std::invalid_argument on zero inputs.
std::size_t video_token_count(std::size_t n_frames, std::size_t tokens_per_frame);

// Text layout following the video:
//   [prefix: other] [question] [option 0] ... [option n-1] [suffix: other] [last]
struct QuestionTemplate {
  std::size_t prefix_tokens = 1;
  std::size_t question_tokens = 4;
  std::size_t option_tokens = 2;
  std::size_t suffix_tokens = 0;
  bool operator==(const QuestionTemplate&) const = default;
};

struct OptionSpan {
  Range range;
  bool is_true = false;
  bool operator==(const OptionSpan&) const = default;
};

struct SpanMap {
  std::vector<Range> frame_spans;
  Range question_span;             // non-option question plus options
  Range non_option_question_span;
  std::vector<OptionSpan> option_spans;
  std::vector<Range> other_spans;
  Index last_index = 0;

  std::size_t seq_len() const { return last_index + 1; }
  std::size_t n_frames() const { return frame_spans.size(); }
  bool open_ended() const { return option_spans.empty(); }
  std::size_t video_tokens() const;

  // Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
  bool operator==(const SpanMap&) const = default;
};

SpanMap build_span_map(const FrameLayout& layout, const QuestionTemplate& question,
                       std::size_t n_options, std::size_t true_option_index,
                       bool open_ended);

class SegmentSelector {
 public:
  enum class Kind {
    AllVideo,
    Frame,
    FramesBefore,
    NonOptionQuestion,
    TrueOption,
    FalseOptions,
    WholeQuestion,
    Last,
    Other,
    All,
  };

  static SegmentSelector all_video() { return SegmentSelector(Kind::AllVideo); }
  static SegmentSelector frame(std::size_t i) { return SegmentSelector(Kind::Frame, i); }
  static SegmentSelector frames_before(std::size_t i) {
    return SegmentSelector(Kind::FramesBefore, i);
  }
  static SegmentSelector non_option_question() {
    return SegmentSelector(Kind::NonOptionQuestion);
  }
  static SegmentSelector true_option() { return SegmentSelector(Kind::TrueOption); }
  static SegmentSelector false_options() { return SegmentSelector(Kind::FalseOptions); }
  static SegmentSelector whole_question() { return SegmentSelector(Kind::WholeQuestion); }
  static SegmentSelector last() { return SegmentSelector(Kind::Last); }
  static SegmentSelector other() { return SegmentSelector(Kind::Other); }
  static SegmentSelector all() { return SegmentSelector(Kind::All); }

  Kind kind() const { return kind_; }
  std::size_t frame_index() const { return frame_; }
  // True for kinds that may legitimately resolve to nothing.
  bool may_be_empty() const;

  // "video", "frame:2", "frames-before:2", "question", "true-option", ...
  std::string to_string() const;
  static SegmentSelector parse(std::string_view text);

  bool operator==(const SegmentSelector&) const = default;

 private:
  explicit SegmentSelector(Kind kind, std::size_t frame = 0) : kind_(kind), frame_(frame) {}
  Kind kind_;
  std::size_t frame_;
};

// Sorted, duplicate-free positions selected from the map. Throws
// std::invalid_argument for Frame(i) with i >= T, FramesBefore(i) with i > T,
// and for kinds that must be non-empty but resolve to nothing.
std::vector<Index> select(const SpanMap& map, const SegmentSelector& selector);

enum class SegmentCategory { Video, Question, Other, Last };
SegmentCategory category_of(const SpanMap& map, Index position);
// Frame index of a video position; throws if `position` is not video.
std::size_t frame_of(const SpanMap& map, Index position);

nlohmann::json to_json(const SpanMap& map);
SpanMap span_map_from_json(const nlohmann::json& j);

}  // namespace attnflow
