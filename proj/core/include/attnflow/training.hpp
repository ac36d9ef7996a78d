#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attnflow/model.hpp"

namespace attnflow {

// One supervised sequence: the answer is read at the last position.
struct LabeledSequence {
  std::vector<TokenId> tokens;
  TokenId answer = 0;
  // Tokens the answer is chosen among when scoring accuracy; empty means the
  // whole vocabulary.
  std::vector<TokenId> candidates;
};

// Index of the highest logit among `candidates` (whole row when empty);
// ties go to the earliest candidate.
TokenId argmax_token(std::span<const double> logits, std::span<const TokenId> candidates);

struct TrainConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t n_steps = 2000;
  std::uint64_t train_seed = 0;
  // Trailing fraction of the dataset held out for the report.
  double holdout_fraction = 0.1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainReport {
  std::vector<double> losses;  // one per step
  double train_accuracy = 0.0;
  std::optional<double> heldout_accuracy;
};

// Mean cross-entropy of the answer under the last-position softmax.
double loss(const ModelParams& params, std::span<const LabeledSequence> batch);

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grad;  // same shapes as the parameters
};

// Exact reverse-mode gradient of `loss`. Full causal attention, no schedule.
LossAndGrad loss_and_grad(const ModelParams& params, std::span<const LabeledSequence> batch);
ModelParams grad(const ModelParams& params, std::span<const LabeledSequence> batch);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t nonzero_coordinates = 0;  // analytic gradient != 0
  std::size_t worst_coordinate = 0;     // flat index in visit order
};

// Compares the analytic gradient with central differences
// (loss(θ+ε) - loss(θ-ε)) / 2ε on `n_coordinates` distinct coordinates drawn
// uniformly with `sample_seed`. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const ModelParams& params, const LabeledSequence& example,
                           double epsilon, std::size_t n_coordinates = 200,
                           std::uint64_t sample_seed = 0);

double accuracy(const ModelParams& params, std::span<const LabeledSequence> data);

struct FitResult {
  ModelParams params;
  TrainReport report;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Adam on the mean last-position cross-entropy. Parameters are rounded to
// float32 after every update. Deterministic in (init_seed, train_seed).
FitResult fit(const ModelConfig& model_config, std::span<const LabeledSequence> dataset,
              const TrainConfig& train_config, const StepCallback& on_step = {});

// Flat views in visit order.
std::vector<double> flatten(const ModelParams& params);
void unflatten(std::span<const double> flat, ModelParams& params);

}  // namespace attnflow
