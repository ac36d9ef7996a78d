#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "attnflow/model.hpp"
#include "attnflow/rng.hpp"
#include "attnflow/schedule.hpp"

namespace attnflow::testing {

inline ModelConfig tiny_config(std::size_t n_layers = 2, std::size_t n_heads = 2,
                               std::size_t d_head = 4, std::size_t vocab = 16,
                               std::size_t max_seq = 16, std::uint64_t seed = 1) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.n_heads = n_heads;
  c.d_head = d_head;
  c.d_model = n_heads * d_head;
  c.d_mlp = 2 * c.d_model;
  c.vocab_size = vocab;
  c.max_seq_len = max_seq;
  c.init_seed = seed;
  return c;
}

// Fresh init with biases and norm parameters perturbed so every parameter
// group influences the output.
inline ModelParams perturbed_params(const ModelConfig& c) {
  ModelParams p = init_params(c);
  Rng rng(c.init_seed ^ 0x9e3779b97f4a7c15ULL);
  auto jitter = [&](Vector& v, double centre) {
    for (double& x : v) x = centre + 0.2 * rng.normal();
  };
  for (LayerParams& l : p.layers) {
    jitter(l.ln1_gain, 1.0);
    jitter(l.ln1_bias, 0.0);
    jitter(l.ln2_gain, 1.0);
    jitter(l.ln2_bias, 0.0);
    jitter(l.b_in, 0.0);
    jitter(l.b_out, 0.0);
  }
  jitter(p.final_gain, 1.0);
  jitter(p.final_bias, 0.0);
  return p;
}

inline std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.below(vocab));
  return t;
}

// Random rectangles on random layers, some reaching above the diagonal.
inline InterventionSchedule random_rect_schedule(Rng& rng, std::size_t n_layers, std::size_t n,
                                                 std::size_t n_rects) {
  InterventionSchedule s(n_layers, n);
  for (std::size_t r = 0; r < n_rects; ++r) {
    BlockRect rect;
    for (Index i = 0; i < n; ++i) {
      if (rng.below(3) == 0) rect.targets.push_back(i);
      if (rng.below(3) == 0) rect.sources.push_back(i);
    }
    s.add(rng.below(n_layers), rect);
  }
  return s;
}

}  // namespace attnflow::testing
