#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnflow/model.hpp"
#include "attnflow/segments.hpp"
#include "attnflow/training.hpp"

namespace attnflow {

// Toy vocabulary ---------------------------------------------------------

enum class TokenTag { Special, Spatial, Temporal, Function };

struct VocabEntry {
  TokenId id;
  std::string text;
  TokenTag tag;
};

// Fixed, append-only vocabulary (< 64 entries). Visual symbols carry the
// Spatial tag; motion and order words carry the Temporal tag.
const std::vector<VocabEntry>& vocab();
std::size_t vocab_size();
TokenId token_id(std::string_view text);
const std::string& token_text(TokenId id);
std::string_view tag_name(TokenTag tag);

// {"spatial": [...], "temporal": [...]} derived from the tags.
std::map<std::string, std::vector<TokenId>> keyword_categories();

// Tasks ------------------------------------------------------------------

enum class TaskFamily { MovingDirection, EventOrder, CountAtStart };

std::string_view family_name(TaskFamily family);  // "moving-direction", ...
TaskFamily parse_family(std::string_view name);

struct Example {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  TaskFamily family = TaskFamily::MovingDirection;
  bool open_ended = false;
  FrameLayout layout;
  std::vector<TokenId> tokens;
  SpanMap spans;
  TokenId answer_token = 0;
  // Answer tokens scored by accuracy: option letters, or the family's answer
  // words in open-ended mode.
  std::vector<TokenId> candidates;

  LabeledSequence labeled() const { return {tokens, answer_token, candidates}; }
  bool operator==(const Example&) const = default;
};

// Deterministic per seed. Answer letters (or open-ended answers) are balanced
// to within one. Throws std::invalid_argument for layouts the family cannot
// use.
std::vector<Example> generate(TaskFamily family, std::size_t n_examples, std::uint64_t seed,
                              const FrameLayout& layout, bool open_ended);

struct LabelCheck {
  bool ok = true;
  std::optional<std::size_t> first_bad;  // position in the dataset
  std::string reason;
};

// Recomputes each answer from the raw frame tokens and compares it with the
// stored answer. Malformed examples are reported as failures.
LabelCheck verify_labels(std::span<const Example> dataset);

std::vector<LabeledSequence> to_labeled(std::span<const Example> dataset);

nlohmann::json to_json(const Example& example);
Example example_from_json(const nlohmann::json& j);

// One JSON object per line.
void write_jsonl(std::span<const Example> dataset, const std::filesystem::path& path);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

}  // namespace attnflow
