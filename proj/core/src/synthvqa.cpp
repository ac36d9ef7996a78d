#include "attnflow/synthvqa.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "attnflow/rng.hpp"

namespace attnflow {

namespace {

const std::vector<VocabEntry>& build_vocab() {
  using T = TokenTag;
  static const std::vector<std::pair<const char*, TokenTag>> entries = {
      {"<pad>", T::Special},  {"<q>", T::Special},      {"<ans>", T::Special},
      {"bg", T::Function},    {"marker", T::Spatial},   {"dot", T::Spatial},
      {"circle", T::Spatial}, {"square", T::Spatial},   {"star", T::Spatial},
      {"cross", T::Spatial},  {"A", T::Function},       {"B", T::Function},
      {"C", T::Function},     {"D", T::Function},       {"left", T::Temporal},
      {"right", T::Temporal}, {"first", T::Temporal},   {"second", T::Temporal},
      {"before", T::Temporal}, {"after", T::Temporal},  {"move", T::Temporal},
      {"start", T::Temporal}, {"where", T::Function},   {"does", T::Function},
      {"which", T::Function}, {"appears", T::Function}, {"how", T::Function},
      {"many", T::Function},  {"at", T::Function},      {"?", T::Function},
      {"0", T::Function},     {"1", T::Function},       {"2", T::Function},
      {"3", T::Function},     {"then", T::Temporal},    {"next", T::Temporal},
      {"tree", T::Spatial},   {"house", T::Spatial},
  };
  static const std::vector<VocabEntry> table = [] {
    std::vector<VocabEntry> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      out.push_back({static_cast<TokenId>(i), entries[i].first, entries[i].second});
    }
    return out;
  }();
  return table;
}

const std::vector<TokenId>& event_symbols() {
  static const std::vector<TokenId> ids = {token_id("circle"), token_id("square"),
                                           token_id("star"), token_id("cross")};
  return ids;
}

const std::vector<TokenId>& letters() {
  static const std::vector<TokenId> ids = {token_id("A"), token_id("B"), token_id("C"),
                                           token_id("D")};
  return ids;
}

const std::vector<TokenId>& digits() {
  static const std::vector<TokenId> ids = {token_id("0"), token_id("1"), token_id("2"),
                                           token_id("3")};
  return ids;
}

std::vector<TokenId> question_words(TaskFamily family) {
  std::vector<std::string_view> words;
  switch (family) {
    case TaskFamily::MovingDirection: words = {"where", "does", "marker", "move", "?"}; break;
    case TaskFamily::EventOrder: words = {"which", "appears", "first", "?"}; break;
    case TaskFamily::CountAtStart: words = {"how", "many", "dot", "at", "start", "?"}; break;
  }
  std::vector<TokenId> out;
  for (auto w : words) out.push_back(token_id(w));
  return out;
}

std::size_t n_options(TaskFamily family) {
  return family == TaskFamily::CountAtStart ? 4 : 2;
}

// Answer words the family can produce (open-ended candidates).
std::vector<TokenId> answer_words(TaskFamily family) {
  switch (family) {
    case TaskFamily::MovingDirection: return {token_id("left"), token_id("right")};
    case TaskFamily::EventOrder: return event_symbols();
    case TaskFamily::CountAtStart: return digits();
  }
  return {};
}

// Largest per-frame move whose direction is unambiguous on a cyclic strip.
std::size_t max_step(std::size_t width) { return std::min<std::size_t>(2, (width - 1) / 2); }

void check_layout(TaskFamily family, const FrameLayout& layout) {
  if (layout.n_frames == 0 || layout.tokens_per_frame == 0) {
    throw std::invalid_argument("generate: layout must have frames and tokens");
  }
  switch (family) {
    case TaskFamily::MovingDirection:
      if (layout.tokens_per_frame < 3 || layout.n_frames < 2) {
        throw std::invalid_argument("moving-direction needs tokens_per_frame >= 3 and >= 2 frames");
      }
      break;
    case TaskFamily::EventOrder:
      if (layout.n_frames < 2) throw std::invalid_argument("event-order needs >= 2 frames");
      break;
    case TaskFamily::CountAtStart:
      if (layout.tokens_per_frame < 3) {
        throw std::invalid_argument("count-at-start needs tokens_per_frame >= 3");
      }
      break;
  }
}

struct VideoAndAnswer {
  std::vector<TokenId> video;
  TokenId answer_word;
  std::vector<TokenId> distractor_words;  // other option contents
};

VideoAndAnswer moving_direction(Rng& rng, const FrameLayout& layout, std::size_t label) {
  const std::size_t width = layout.tokens_per_frame;
  const std::size_t steps = layout.n_frames - 1;
  const int want = label == 0 ? -1 : +1;  // 0 = left, 1 = right
  std::vector<int> signs(steps, want);
  const std::size_t hi = max_step(width);
  std::vector<TokenId> video(layout.video_tokens(), token_id("bg"));
  std::size_t pos = rng.below(width);
  video[pos] = token_id("marker");
  for (std::size_t f = 1; f < layout.n_frames; ++f) {
    const std::size_t mag = 1 + rng.below(hi);
    pos = signs[f - 1] > 0 ? (pos + mag) % width : (pos + width - mag % width) % width;
    video[f * width + pos] = token_id("marker");
  }
  const TokenId l = token_id("left"), r = token_id("right");
  return {video, label == 0 ? l : r, {label == 0 ? r : l}};
}

VideoAndAnswer event_order(Rng& rng, const FrameLayout& layout, std::size_t label) {
  const std::size_t width = layout.tokens_per_frame;
  // label picks the symbol that appears first; the other is drawn at random.
  const TokenId first = event_symbols()[label];
  std::vector<TokenId> others;
  for (TokenId s : event_symbols())
    if (s != first) others.push_back(s);
  const TokenId second = others[rng.below(others.size())];
  const std::size_t f1 = rng.below(layout.n_frames);
  std::size_t f2 = rng.below(layout.n_frames - 1);
  if (f2 >= f1) ++f2;
  const std::size_t early = std::min(f1, f2), late = std::max(f1, f2);
  std::vector<TokenId> video(layout.video_tokens(), token_id("bg"));
  video[early * width + rng.below(width)] = first;
  video[late * width + rng.below(width)] = second;
  return {video, first, {second}};
}

VideoAndAnswer count_at_start(Rng& rng, const FrameLayout& layout, std::size_t label) {
  const std::size_t width = layout.tokens_per_frame;
  std::vector<TokenId> video(layout.video_tokens(), token_id("bg"));
  for (std::size_t f = 0; f < layout.n_frames; ++f) {
    const std::size_t count = f == 0 ? label : rng.below(4);
    std::vector<std::size_t> cols(width);
    for (std::size_t c = 0; c < width; ++c) cols[c] = c;
    rng.shuffle(cols);
    for (std::size_t i = 0; i < count; ++i) video[f * width + cols[i]] = token_id("dot");
  }
  std::vector<TokenId> others;
  for (std::size_t d = 0; d < 4; ++d)
    if (d != label) others.push_back(digits()[d]);
  rng.shuffle(others);
  return {video, digits()[label], others};
}

QuestionTemplate template_for(TaskFamily family) {
  QuestionTemplate t;
  t.prefix_tokens = 1;
  t.question_tokens = question_words(family).size();
  t.option_tokens = 2;
  t.suffix_tokens = 0;
  return t;
}

Example make_example(TaskFamily family, std::uint64_t id, std::uint64_t seed,
                     const FrameLayout& layout, bool open_ended) {
  Rng rng(seed);
  const std::size_t n_opt = n_options(family);
  const std::size_t n_semantic = answer_words(family).size();
  // Balance the answer slot first, then the underlying semantic label.
  std::size_t true_option = 0, label = 0;
  if (open_ended) {
    label = id % n_semantic;
  } else {
    true_option = id % n_opt;
    label = (id / n_opt) % n_semantic;
  }

  VideoAndAnswer va;
  switch (family) {
    case TaskFamily::MovingDirection: va = moving_direction(rng, layout, label); break;
    case TaskFamily::EventOrder: va = event_order(rng, layout, label); break;
    case TaskFamily::CountAtStart: va = count_at_start(rng, layout, label); break;
  }

  Example ex;
  ex.id = id;
  ex.seed = seed;
  ex.family = family;
  ex.open_ended = open_ended;
  ex.layout = layout;
  ex.spans = build_span_map(layout, template_for(family), n_opt, true_option, open_ended);
  ex.tokens = va.video;
  ex.tokens.push_back(token_id("<q>"));
  for (TokenId w : question_words(family)) ex.tokens.push_back(w);
  if (open_ended) {
    ex.answer_token = va.answer_word;
    ex.candidates = answer_words(family);
  } else {
    std::size_t next_distractor = 0;
    for (std::size_t o = 0; o < n_opt; ++o) {
      ex.tokens.push_back(letters()[o]);
      ex.tokens.push_back(o == true_option ? va.answer_word : va.distractor_words[next_distractor++]);
      ex.candidates.push_back(letters()[o]);
    }
    ex.answer_token = letters()[true_option];
  }
  ex.tokens.push_back(token_id("<ans>"));
  if (ex.tokens.size() != ex.spans.seq_len()) {
    throw std::logic_error("generate: token layout disagrees with span map");
  }
  return ex;
}

// Independent recomputation of the semantic answer word from frame tokens.
std::optional<TokenId> recompute_answer_word(const Example& ex, std::string& why) {
  const std::size_t width = ex.layout.tokens_per_frame;
  const std::size_t frames = ex.spans.n_frames();
  auto frame_tokens = [&](std::size_t f) {
    const Range r = ex.spans.frame_spans[f];
    return std::vector<TokenId>(ex.tokens.begin() + static_cast<std::ptrdiff_t>(r.begin),
                                ex.tokens.begin() + static_cast<std::ptrdiff_t>(r.end));
  };
  switch (ex.family) {
    case TaskFamily::MovingDirection: {
      std::vector<long> pos;
      for (std::size_t f = 0; f < frames; ++f) {
        const auto toks = frame_tokens(f);
        long found = -1;
        for (std::size_t c = 0; c < toks.size(); ++c) {
          if (toks[c] != token_id("marker")) continue;
          if (found >= 0) {
            why = "more than one marker in frame " + std::to_string(f);
            return std::nullopt;
          }
          found = static_cast<long>(c);
        }
        if (found < 0) {
          why = "no marker in frame " + std::to_string(f);
          return std::nullopt;
        }
        pos.push_back(found);
      }
      const long w = static_cast<long>(width);
      int votes = 0;
      for (std::size_t f = 1; f < pos.size(); ++f) {
        long delta = ((pos[f] - pos[f - 1]) % w + w) % w;  // [0, w)
        if (delta == 0 || 2 * delta == w) {
          why = "ambiguous move between frames";
          return std::nullopt;
        }
        votes += 2 * delta < w ? +1 : -1;
      }
      if (votes == 0) {
        why = "tied move directions";
        return std::nullopt;
      }
      return token_id(votes > 0 ? "right" : "left");
    }
    case TaskFamily::EventOrder: {
      std::map<TokenId, std::size_t> first_seen;
      for (std::size_t f = 0; f < frames; ++f) {
        for (TokenId t : frame_tokens(f)) {
          if (std::find(event_symbols().begin(), event_symbols().end(), t) == event_symbols().end())
            continue;
          first_seen.try_emplace(t, f);
        }
      }
      if (first_seen.size() != 2) {
        why = "expected exactly two event symbols";
        return std::nullopt;
      }
      auto a = first_seen.begin(), b = std::next(first_seen.begin());
      if (a->second == b->second) {
        why = "events share a frame";
        return std::nullopt;
      }
      return a->second < b->second ? a->first : b->first;
    }
    case TaskFamily::CountAtStart: {
      const auto toks = frame_tokens(0);
      const auto count = std::count(toks.begin(), toks.end(), token_id("dot"));
      if (count > 3) {
        why = "more than three dots in frame 0";
        return std::nullopt;
      }
      return digits()[static_cast<std::size_t>(count)];
    }
  }
  return std::nullopt;
}

}  // namespace

const std::vector<VocabEntry>& vocab() { return build_vocab(); }
std::size_t vocab_size() { return vocab().size(); }

TokenId token_id(std::string_view text) {
  for (const VocabEntry& e : vocab())
    if (e.text == text) return e.id;
  throw std::invalid_argument("unknown token: " + std::string(text));
}

const std::string& token_text(TokenId id) {
  if (id >= vocab().size()) throw std::invalid_argument("token id outside vocabulary");
  return vocab()[id].text;
}

std::string_view tag_name(TokenTag tag) {
  switch (tag) {
    case TokenTag::Special: return "special";
    case TokenTag::Spatial: return "spatial";
    case TokenTag::Temporal: return "temporal";
    case TokenTag::Function: return "function";
  }
  return "?";
}

std::map<std::string, std::vector<TokenId>> keyword_categories() {
  std::map<std::string, std::vector<TokenId>> out{{"spatial", {}}, {"temporal", {}}};
  for (const VocabEntry& e : vocab()) {
    if (e.tag == TokenTag::Spatial) out["spatial"].push_back(e.id);
    if (e.tag == TokenTag::Temporal) out["temporal"].push_back(e.id);
  }
  return out;
}

std::string_view family_name(TaskFamily family) {
  switch (family) {
    case TaskFamily::MovingDirection: return "moving-direction";
    case TaskFamily::EventOrder: return "event-order";
    case TaskFamily::CountAtStart: return "count-at-start";
  }
  return "?";
}

TaskFamily parse_family(std::string_view name) {
  for (TaskFamily f : {TaskFamily::MovingDirection, TaskFamily::EventOrder, TaskFamily::CountAtStart}) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown task family: " + std::string(name));
}

std::vector<Example> generate(TaskFamily family, std::size_t n_examples, std::uint64_t seed,
                              const FrameLayout& layout, bool open_ended) {
  check_layout(family, layout);
  std::vector<Example> out;
  out.reserve(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) {
    out.push_back(make_example(family, i, derive_seed(seed, i), layout, open_ended));
  }
  return out;
}

LabelCheck verify_labels(std::span<const Example> dataset) {
  auto fail = [](std::size_t i, std::string why) { return LabelCheck{false, i, std::move(why)}; };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Example& ex = dataset[i];
    try {
      ex.spans.validate();
    } catch (const std::invalid_argument& e) {
      return fail(i, e.what());
    }
    if (ex.tokens.size() != ex.spans.seq_len()) return fail(i, "token count disagrees with spans");
    if (ex.spans.video_tokens() != ex.layout.video_tokens()) {
      return fail(i, "frame spans disagree with layout");
    }
    std::string why;
    const auto word = recompute_answer_word(ex, why);
    if (!word) return fail(i, why);
    TokenId expected = *word;
    if (!ex.open_ended) {
      std::optional<TokenId> letter;
      std::size_t n_true = 0;
      for (const OptionSpan& o : ex.spans.option_spans) {
        if (o.range.size() != 2) return fail(i, "option span must be [letter, content]");
        const TokenId content = ex.tokens[o.range.begin + 1];
        if (content == *word) {
          letter = ex.tokens[o.range.begin];
          ++n_true;
          if (!o.is_true) return fail(i, "option holding the answer is not flagged true");
        }
      }
      if (n_true != 1) return fail(i, "answer content must appear in exactly one option");
      expected = *letter;
    }
    if (expected != ex.answer_token) {
      return fail(i, "stored answer '" + token_text(ex.answer_token) + "' but frames imply '" +
                         token_text(expected) + "'");
    }
  }
  return {};
}

std::vector<LabeledSequence> to_labeled(std::span<const Example> dataset) {
  std::vector<LabeledSequence> out;
  out.reserve(dataset.size());
  for (const Example& ex : dataset) out.push_back(ex.labeled());
  return out;
}

nlohmann::json to_json(const Example& ex) {
  return {{"id", ex.id},
          {"seed", ex.seed},
          {"family", family_name(ex.family)},
          {"open_ended", ex.open_ended},
          {"frames", ex.layout.n_frames},
          {"tokens_per_frame", ex.layout.tokens_per_frame},
          {"tokens", ex.tokens},
          {"spans", to_json(ex.spans)},
          {"answer", ex.answer_token},
          {"candidates", ex.candidates}};
}

Example example_from_json(const nlohmann::json& j) {
  Example ex;
  try {
    ex.id = j.at("id").get<std::uint64_t>();
    ex.seed = j.at("seed").get<std::uint64_t>();
    ex.family = parse_family(j.at("family").get<std::string>());
    ex.open_ended = j.at("open_ended").get<bool>();
    ex.layout = {j.at("frames").get<std::size_t>(), j.at("tokens_per_frame").get<std::size_t>()};
    ex.tokens = j.at("tokens").get<std::vector<TokenId>>();
    ex.spans = span_map_from_json(j.at("spans"));
    ex.answer_token = j.at("answer").get<TokenId>();
    ex.candidates = j.at("candidates").get<std::vector<TokenId>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("example json: ") + e.what());
  }
  return ex;
}

void write_jsonl(std::span<const Example> dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Example& ex : dataset) out << to_json(ex).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(example_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace attnflow
