#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnflow/linalg.hpp"
#include "attnflow/schedule.hpp"

namespace attnflow {

using TokenId = std::uint32_t;

struct ModelConfig {
  std::size_t n_layers = 8;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t d_mlp = 128;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 64;
  double ln_epsilon = 1e-5;
  std::uint64_t init_seed = 0;

  // Throws std::invalid_argument when dimensions are inconsistent.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Matrix w_q, w_k, w_v, w_o;  // d_model x d_model, heads are column blocks of d_head
  Vector ln1_gain, ln1_bias;  // pre-attention normalisation
  Vector ln2_gain, ln2_bias;  // pre-MLP normalisation
  Matrix w_in;                // d_model x d_mlp
  Vector b_in;
  Matrix w_out;               // d_mlp x d_model
  Vector b_out;

  bool operator==(const LayerParams&) const = default;
};

// Pre-norm decoder with learned positions and an untied unembedding.
struct ModelParams {
  ModelConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq_len x d_model
  std::vector<LayerParams> layers;
  Vector final_gain, final_bias;
  Matrix unembedding;         // d_model x vocab

  // All tensors zero, normalisation gains included.
  static ModelParams zeros(const ModelConfig& config);

  // Visits every tensor in serialisation order as (name, flat values).
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;
  bool operator==(const ModelParams&) const = default;

 private:
  template <class Self, class F>
  static void visit_impl(Self& p, F& f) {
    auto flat = [](auto& t) {
      if constexpr (requires { t.flat(); }) {
        return t.flat();
      } else {
        return std::span(t);
      }
    };
    f(std::string_view("token_embedding"), flat(p.token_embedding));
    f(std::string_view("position_embedding"), flat(p.position_embedding));
    for (auto& layer : p.layers) {
      f(std::string_view("w_q"), flat(layer.w_q));
      f(std::string_view("w_k"), flat(layer.w_k));
      f(std::string_view("w_v"), flat(layer.w_v));
      f(std::string_view("w_o"), flat(layer.w_o));
      f(std::string_view("ln1_gain"), flat(layer.ln1_gain));
      f(std::string_view("ln1_bias"), flat(layer.ln1_bias));
      f(std::string_view("ln2_gain"), flat(layer.ln2_gain));
      f(std::string_view("ln2_bias"), flat(layer.ln2_bias));
      f(std::string_view("w_in"), flat(layer.w_in));
      f(std::string_view("b_in"), flat(layer.b_in));
      f(std::string_view("w_out"), flat(layer.w_out));
      f(std::string_view("b_out"), flat(layer.b_out));
    }
    f(std::string_view("final_gain"), flat(p.final_gain));
    f(std::string_view("final_bias"), flat(p.final_bias));
    f(std::string_view("unembedding"), flat(p.unembedding));
  }
};

// Weights ~ N(0, 1/d_model) rounded to float32, biases 0, gains 1.
// Deterministic in config.init_seed.
ModelParams init_params(const ModelConfig& config);

struct ForwardTrace {
  std::size_t n_heads = 0;
  // n_layers + 1 entries of seq_len x d_model; [0] is the embedded input.
  std::vector<Matrix> hidden;
  // seq_len x vocab.
  Matrix logits;
  // Filled only when capture was requested; indexed [layer * n_heads + head].
  // Weights are post-softmax; scores are the raw scaled dot products before any
  // mask (0 above the diagonal).
  std::vector<Matrix> attn_weights;
  std::vector<Matrix> attn_scores;
  // Attention block output (after W_o) per layer, seq_len x d_model.
  std::vector<Matrix> attn_output;

  bool captured() const { return !attn_weights.empty(); }
  const Matrix& weights(std::size_t layer, std::size_t head) const {
    return attn_weights.at(layer * n_heads + head);
  }
  const Matrix& scores(std::size_t layer, std::size_t head) const {
    return attn_scores.at(layer * n_heads + head);
  }
};

// Runs the model. Causal masking is always applied; every (t, s) pair blocked
// by `schedule` at a layer gets -inf before the softmax in all heads. A query
// row with no enabled keys contributes a zero attention output.
ForwardTrace forward(const ModelParams& params, std::span<const TokenId> tokens,
                     const InterventionSchedule* schedule = nullptr, bool capture = false);

// Final normalisation followed by the unembedding.
Vector logits_from_hidden(const ModelParams& params, std::span<const double> hidden);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Binary checkpoint: "MINILM1\0", config block, float32 weights in visit order.
std::vector<char> serialize_params(const ModelParams& params);
ModelParams deserialize_params(std::span<const char> bytes);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

// Rounds every parameter to the nearest float32.
void round_to_float(ModelParams& params);

}  // namespace attnflow
