#pragma once

// Activations retained by the forward pass for reverse-mode differentiation.
// Internal to the core library and its tests.

#include <vector>

#include "attnflow/model.hpp"

namespace attnflow::detail {

struct LayerCache {
  Matrix x_in;                         // residual input
  std::vector<LayerNormStats> ln1;
  Matrix ln1_out;
  Matrix q, k, v;
  std::vector<Matrix> probs;           // per head, seq x seq
  Matrix z;                            // concatenated head outputs
  Matrix x_mid;                        // residual after attention
  std::vector<LayerNormStats> ln2;
  Matrix ln2_out;
  Matrix pre_act;                      // seq x d_mlp
  Matrix act;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<LayerNormStats> final_ln;
  Matrix final_out;                    // final-normalised residual
};

ForwardTrace forward_impl(const ModelParams& params, std::span<const TokenId> tokens,
                          const InterventionSchedule* schedule, bool capture,
                          ForwardCache* cache);

}  // namespace attnflow::detail
