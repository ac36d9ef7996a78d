#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "attnflow/model.hpp"
#include "support.hpp"

namespace attnflow {
namespace {

using Rows = std::vector<std::vector<double>>;

Rows norm_rows(const Rows& x, const Vector& g, const Vector& b, double eps) {
  Rows out = x;
  for (auto& r : out) {
    double mean = 0.0, var = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(r.size());
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r.size());
    for (std::size_t c = 0; c < r.size(); ++c) r[c] = (r[c] - mean) / std::sqrt(var + eps) * g[c] + b[c];
  }
  return out;
}

Rows times(const Rows& x, const Matrix& w) {
  Rows out(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t p = 0; p < w.rows(); ++p) out[i][j] += x[i][p] * w(p, j);
  return out;
}

// Independent textbook forward pass with an explicit boolean mask.
Rows reference_logits(const ModelParams& p, const std::vector<TokenId>& tokens,
                      const InterventionSchedule* schedule) {
  const ModelConfig& c = p.config;
  const std::size_t n = tokens.size();
  Rows x(n, std::vector<double>(c.d_model));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c.d_model; ++j)
      x[i][j] = p.token_embedding(tokens[i], j) + p.position_embedding(i, j);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerParams& lp = p.layers[l];
    const auto mask = schedule ? schedule->blocked_mask(l) : std::vector<unsigned char>(n * n, 0);
    const Rows h = norm_rows(x, lp.ln1_gain, lp.ln1_bias, c.ln_epsilon);
    const Rows q = times(h, lp.w_q), k = times(h, lp.w_k), v = times(h, lp.w_v);
    Rows z(n, std::vector<double>(c.d_model, 0.0));
    for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
      for (std::size_t t = 0; t < n; ++t) {
        std::vector<double> w(t + 1, 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s <= t; ++s) {
          if (mask[t * n + s]) continue;
          double dot = 0.0;
          for (std::size_t e = 0; e < c.d_head; ++e) dot += q[t][hd * c.d_head + e] * k[s][hd * c.d_head + e];
          w[s] = dot / std::sqrt(static_cast<double>(c.d_head));
          mx = std::max(mx, w[s]);
        }
        double sum = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          w[s] = mask[t * n + s] ? 0.0 : std::exp(w[s] - mx);
          sum += w[s];
        }
        for (std::size_t s = 0; s <= t; ++s) {
          if (sum == 0.0) break;
          for (std::size_t e = 0; e < c.d_head; ++e) z[t][hd * c.d_head + e] += w[s] / sum * v[s][hd * c.d_head + e];
        }
      }
    }
    const Rows o = times(z, lp.w_o);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c.d_model; ++j) x[i][j] += o[i][j];
    const Rows h2 = norm_rows(x, lp.ln2_gain, lp.ln2_bias, c.ln_epsilon);
    Rows u = times(h2, lp.w_in);
    for (auto& r : u)
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double a = r[j] + lp.b_in[j];
        r[j] = 0.5 * a * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (a + 0.044715 * a * a * a)));
      }
    const Rows m = times(u, lp.w_out);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c.d_model; ++j) x[i][j] += m[i][j] + lp.b_out[j];
  }
  return times(norm_rows(x, p.final_gain, p.final_bias, c.ln_epsilon), p.unembedding);
}

void expect_close(const Matrix& got, const Rows& want, double tol) {
  ASSERT_EQ(got.rows(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i)
    for (std::size_t j = 0; j < want[i].size(); ++j)
      EXPECT_NEAR(got(i, j), want[i][j], tol * (1.0 + std::abs(want[i][j])));
}

TEST(ModelConfig, Validation) {
  ModelConfig c = testing::tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.d_model = 9;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(init_params(c), std::invalid_argument);
  c = testing::tiny_config();
  c.n_layers = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = testing::tiny_config();
  c.ln_epsilon = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig c = testing::tiny_config(3, 2, 5, 20, 12, 99);
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  auto j = to_json(c);
  j.erase("n_heads");
  EXPECT_THROW(model_config_from_json(j), std::invalid_argument);
}

TEST(Init, DeterministicAndSeedDependent) {
  const ModelConfig c = testing::tiny_config();
  EXPECT_EQ(init_params(c), init_params(c));
  ModelConfig other = c;
  other.init_seed = 2;
  EXPECT_NE(init_params(c).token_embedding, init_params(other).token_embedding);
}

TEST(Init, ScaleBiasesGainsAndFloatRepresentable) {
  ModelConfig c = testing::tiny_config(2, 4, 16, 64, 64, 5);
  const ModelParams p = init_params(c);
  double sq = 0.0;
  for (double v : p.layers[0].w_q.flat()) sq += v * v;
  const double var = sq / static_cast<double>(p.layers[0].w_q.size());
  EXPECT_NEAR(var, 1.0 / 64.0, 0.15 / 64.0);
  for (const LayerParams& l : p.layers) {
    for (double v : l.b_in) EXPECT_EQ(v, 0.0);
    for (double v : l.b_out) EXPECT_EQ(v, 0.0);
    for (double v : l.ln1_gain) EXPECT_EQ(v, 1.0);
    for (double v : l.ln2_bias) EXPECT_EQ(v, 0.0);
  }
  p.visit([](std::string_view, std::span<const double> values) {
    for (double v : values) EXPECT_EQ(static_cast<double>(static_cast<float>(v)), v);
  });
}

TEST(Init, ParameterCount) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 16);
  const std::size_t d = 8, m = 16;
  const std::size_t per_layer = 4 * d * d + 4 * d + d * m + m + m * d + d;
  EXPECT_EQ(init_params(c).parameter_count(), 16 * d + 16 * d + 2 * per_layer + 2 * d + d * 16);
}

TEST(Forward, MatchesReferenceImplementation) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelConfig c = testing::tiny_config(1 + rng.below(3), 1 + rng.below(3), 2 + rng.below(3), 12, 12,
                                               static_cast<std::uint64_t>(trial + 1));
    const ModelParams p = testing::perturbed_params(c);
    const auto tokens = testing::random_tokens(rng, 1 + rng.below(12), 12);
    expect_close(forward(p, tokens).logits, reference_logits(p, tokens, nullptr), 1e-10);
    const auto s = testing::random_rect_schedule(rng, c.n_layers, tokens.size(), 3);
    expect_close(forward(p, tokens, &s).logits, reference_logits(p, tokens, &s), 1e-10);
  }
}

TEST(Forward, TraceShapes) {
  const ModelConfig c = testing::tiny_config(3, 2, 4, 16, 16);
  const ModelParams p = init_params(c);
  const std::vector<TokenId> tokens{1, 2, 3, 4, 5};
  const ForwardTrace t = forward(p, tokens, nullptr, true);
  ASSERT_EQ(t.hidden.size(), 4u);
  for (const Matrix& h : t.hidden) {
    EXPECT_EQ(h.rows(), 5u);
    EXPECT_EQ(h.cols(), 8u);
  }
  EXPECT_EQ(t.logits.rows(), 5u);
  EXPECT_EQ(t.logits.cols(), 16u);
  EXPECT_EQ(t.attn_weights.size(), 6u);
  EXPECT_FALSE(forward(p, tokens).captured());
}

TEST(Forward, CausalityHoldsForPrefixes) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 16, 8);
  const ModelParams p = testing::perturbed_params(c);
  const std::vector<TokenId> a{3, 1, 4, 1, 5, 9}, b{3, 1, 4, 2, 6, 5};
  const auto ta = forward(p, a), tb = forward(p, b);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(ta.logits(t, v), tb.logits(t, v));
}

TEST(Forward, RejectsBadInputs) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 6);
  const ModelParams p = init_params(c);
  EXPECT_THROW(forward(p, std::vector<TokenId>{}), std::invalid_argument);
  EXPECT_THROW(forward(p, std::vector<TokenId>(7, 1)), std::invalid_argument);
  EXPECT_THROW(forward(p, std::vector<TokenId>{1, 16}), std::invalid_argument);
  InterventionSchedule wrong(2, 4);
  EXPECT_THROW(forward(p, std::vector<TokenId>{1, 2, 3}, &wrong), std::invalid_argument);
}

TEST(Forward, BlockedWeightsAreExactlyZero) {
  Rng rng(22);
  const ModelConfig c = testing::tiny_config(3, 2, 4, 16, 10, 4);
  const ModelParams p = testing::perturbed_params(c);
  for (int trial = 0; trial < 20; ++trial) {
    const auto tokens = testing::random_tokens(rng, 2 + rng.below(9), 16);
    const auto s = testing::random_rect_schedule(rng, 3, tokens.size(), 4);
    const auto t = forward(p, tokens, &s, true);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto mask = s.blocked_mask(l);
      for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t q = 0; q < tokens.size(); ++q) {
          double sum = 0.0;
          bool all_blocked = true;
          for (std::size_t k = 0; k <= q; ++k) {
            if (mask[q * tokens.size() + k]) {
              EXPECT_EQ(t.weights(l, h)(q, k), 0.0);
            } else {
              all_blocked = false;
            }
            sum += t.weights(l, h)(q, k);
          }
          if (all_blocked) {
            EXPECT_EQ(sum, 0.0);
          } else {
            EXPECT_NEAR(sum, 1.0, 1e-12);
          }
        }
    }
  }
}

TEST(Forward, FullyMaskedRowGivesZeroAttentionOutput) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 8, 6);
  const ModelParams p = testing::perturbed_params(c);
  const std::vector<TokenId> tokens{1, 2, 3, 4, 5};
  InterventionSchedule s(2, 5);
  s.add(1, {{4}, {0, 1, 2, 3, 4}});
  const auto t = forward(p, tokens, &s, true);
  for (double v : t.attn_output[1].row(4)) EXPECT_EQ(v, 0.0);
  for (double v : t.logits.flat()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, EmptyScheduleIsBitwiseIdentity) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 8, 6);
  const ModelParams p = testing::perturbed_params(c);
  const std::vector<TokenId> tokens{1, 2, 3, 4, 5};
  InterventionSchedule noncausal(2, 5);
  noncausal.add(0, {{0, 1}, {3, 4}});
  EXPECT_EQ(forward(p, tokens, &noncausal).logits, forward(p, tokens).logits);
  InterventionSchedule empty(2, 5);
  EXPECT_EQ(forward(p, tokens, &empty).logits, forward(p, tokens).logits);
}

TEST(LogitsFromHidden, FinalLayerEqualsModelOutputBitwise) {
  const ModelConfig c = testing::tiny_config(2, 2, 4, 16, 8, 7);
  const ModelParams p = testing::perturbed_params(c);
  const std::vector<TokenId> tokens{4, 4, 2, 9, 1};
  const auto t = forward(p, tokens);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Vector lg = logits_from_hidden(p, t.hidden.back().row(i));
    for (std::size_t v = 0; v < 16; ++v) EXPECT_EQ(lg[v], t.logits(i, v));
  }
}

TEST(LogitsFromHidden, RejectsBadInput) {
  const ModelParams p = init_params(testing::tiny_config());
  EXPECT_THROW(logits_from_hidden(p, Vector(3, 0.0)), std::invalid_argument);
  Vector h(8, 0.0);
  h[2] = NAN;
  EXPECT_THROW(logits_from_hidden(p, h), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(2, 2, 4, 16, 8, 3));
  ModelParams rounded = p;
  round_to_float(rounded);
  EXPECT_EQ(deserialize_params(serialize_params(rounded)), rounded);

  const auto path = std::filesystem::temp_directory_path() / "attnflow_model_roundtrip.bin";
  save_params(rounded, path);
  EXPECT_EQ(load_params(path), rounded);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const ModelParams p = init_params(testing::tiny_config());
  auto bytes = serialize_params(p);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_params(bad_magic), std::runtime_error);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_params(truncated), std::runtime_error);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(deserialize_params(longer), std::runtime_error);
  auto nan = bytes;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - sizeof(float), &q, sizeof(float));
  EXPECT_THROW(deserialize_params(nan), std::runtime_error);
  EXPECT_THROW(load_params("/nonexistent/model.bin"), std::runtime_error);
}

}  // namespace
}  // namespace attnflow
