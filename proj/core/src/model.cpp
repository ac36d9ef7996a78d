#include "attnflow/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "attnflow/detail/forward_cache.hpp"
#include "attnflow/rng.hpp"

namespace attnflow {

void ModelConfig::validate() const {
  if (n_layers == 0 || n_heads == 0 || d_model == 0 || d_head == 0 || d_mlp == 0 ||
      vocab_size == 0 || max_seq_len == 0) {
    throw std::invalid_argument("model config: every dimension must be >= 1");
  }
  if (d_model != n_heads * d_head) {
    throw std::invalid_argument("model config: d_model must equal n_heads * d_head");
  }
  if (!(ln_epsilon > 0.0) || !std::isfinite(ln_epsilon)) {
    throw std::invalid_argument("model config: ln_epsilon must be positive");
  }
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  ModelParams p;
  p.config = config;
  p.token_embedding = Matrix(config.vocab_size, d);
  p.position_embedding = Matrix(config.max_seq_len, d);
  p.layers.resize(config.n_layers);
  for (LayerParams& layer : p.layers) {
    layer.w_q = Matrix(d, d);
    layer.w_k = Matrix(d, d);
    layer.w_v = Matrix(d, d);
    layer.w_o = Matrix(d, d);
    layer.ln1_gain.assign(d, 0.0);
    layer.ln1_bias.assign(d, 0.0);
    layer.ln2_gain.assign(d, 0.0);
    layer.ln2_bias.assign(d, 0.0);
    layer.w_in = Matrix(d, config.d_mlp);
    layer.b_in.assign(config.d_mlp, 0.0);
    layer.w_out = Matrix(config.d_mlp, d);
    layer.b_out.assign(d, 0.0);
  }
  p.final_gain.assign(d, 0.0);
  p.final_bias.assign(d, 0.0);
  p.unembedding = Matrix(d, config.vocab_size);
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](std::string_view, std::span<const double> v) { n += v.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& config) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(config.init_seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  p.visit([&](std::string_view name, std::span<double> values) {
    if (name.ends_with("_gain")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (name.starts_with("b_") || name.ends_with("_bias")) {
      // zero
    } else {
      for (double& v : values) v = static_cast<float>(rng.normal() * scale);
    }
  });
  return p;
}

void round_to_float(ModelParams& params) {
  params.visit([](std::string_view, std::span<double> values) {
    for (double& v : values) v = static_cast<float>(v);
  });
}

namespace detail {

namespace {

void normalise_rows(const Matrix& x, const Vector& gain, const Vector& bias, double eps,
                    Matrix& out, std::vector<LayerNormStats>* stats) {
  out = Matrix(x.rows(), x.cols());
  if (stats) stats->resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const LayerNormStats s = layer_norm(x.row(i), gain, bias, eps, out.row(i));
    if (stats) (*stats)[i] = s;
  }
}

}  // namespace

ForwardTrace forward_impl(const ModelParams& params, std::span<const TokenId> tokens,
                          const InterventionSchedule* schedule, bool capture,
                          ForwardCache* cache) {
  const ModelConfig& cfg = params.config;
  const std::size_t n = tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  if (n == 0) throw std::invalid_argument("forward: empty token sequence");
  if (n > cfg.max_seq_len) throw std::invalid_argument("forward: sequence longer than max_seq_len");
  for (TokenId t : tokens) {
    if (t >= cfg.vocab_size) throw std::invalid_argument("forward: token id outside vocabulary");
  }
  if (schedule && (schedule->n_layers() != cfg.n_layers || schedule->seq_len() != n)) {
    throw std::invalid_argument("forward: schedule shape does not match model and input");
  }

  ForwardTrace trace;
  trace.n_heads = cfg.n_heads;
  trace.hidden.reserve(cfg.n_layers + 1);
  if (capture) {
    trace.attn_weights.reserve(cfg.n_layers * cfg.n_heads);
    trace.attn_scores.reserve(cfg.n_layers * cfg.n_heads);
    trace.attn_output.reserve(cfg.n_layers);
  }
  if (cache) cache->layers.resize(cfg.n_layers);

  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto te = params.token_embedding.row(tokens[i]);
    const auto pe = params.position_embedding.row(i);
    auto xi = x.row(i);
    for (std::size_t c = 0; c < d; ++c) xi[c] = te[c] + pe[c];
  }
  trace.hidden.push_back(x);

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix h, q, k, v, z, o, h2, u, g, m;
  std::vector<double> row(n);
  std::vector<unsigned char> row_mask(n);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    normalise_rows(x, lp.ln1_gain, lp.ln1_bias, cfg.ln_epsilon, h, lc ? &lc->ln1 : nullptr);
    matmul(h, lp.w_q, q);
    matmul(h, lp.w_k, k);
    matmul(h, lp.w_v, v);

    const bool intervened = schedule && schedule->has_blocks(l);
    std::vector<unsigned char> blocked;
    if (intervened) blocked = schedule->blocked_mask(l);

    z = Matrix(n, d);
    if (lc) lc->probs.assign(cfg.n_heads, Matrix(n, n));
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      const std::size_t off = hd * dh;
      Matrix weights, scores;
      if (capture) {
        weights = Matrix(n, n);
        scores = Matrix(n, n);
      }
      for (std::size_t t = 0; t < n; ++t) {
        const double* qt = q.data() + t * d + off;
        for (std::size_t s = 0; s <= t; ++s) {
          const double* ks = k.data() + s * d + off;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += qt[c] * ks[c];
          row[s] = acc * scale;
          row_mask[s] = intervened ? blocked[t * n + s] : 0;
        }
        if (capture) {
          for (std::size_t s = 0; s <= t; ++s) scores(t, s) = row[s];
        }
        std::span<double> probs(row.data(), t + 1);
        masked_softmax(probs, std::span<const unsigned char>(row_mask.data(), t + 1));
        double* zt = z.data() + t * d + off;
        for (std::size_t s = 0; s <= t; ++s) {
          const double w = probs[s];
          if (w == 0.0) continue;
          const double* vs = v.data() + s * d + off;
          for (std::size_t c = 0; c < dh; ++c) zt[c] += w * vs[c];
        }
        if (capture) {
          for (std::size_t s = 0; s <= t; ++s) weights(t, s) = probs[s];
        }
        if (lc) {
          for (std::size_t s = 0; s <= t; ++s) lc->probs[hd](t, s) = probs[s];
        }
      }
      if (capture) {
        trace.attn_weights.push_back(std::move(weights));
        trace.attn_scores.push_back(std::move(scores));
      }
    }
    matmul(z, lp.w_o, o);
    if (capture) trace.attn_output.push_back(o);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += o.data()[i];
    if (lc) {
      lc->ln1_out = h;
      lc->q = q;
      lc->k = k;
      lc->v = v;
      lc->z = z;
      lc->x_mid = x;
    }

    normalise_rows(x, lp.ln2_gain, lp.ln2_bias, cfg.ln_epsilon, h2, lc ? &lc->ln2 : nullptr);
    matmul(h2, lp.w_in, u);
    g = Matrix(n, cfg.d_mlp);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cfg.d_mlp; ++c) {
        u(i, c) += lp.b_in[c];
        g(i, c) = gelu(u(i, c));
      }
    }
    matmul(g, lp.w_out, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) x(i, c) += m(i, c) + lp.b_out[c];
    }
    if (lc) {
      lc->ln2_out = h2;
      lc->pre_act = u;
      lc->act = g;
    }
    trace.hidden.push_back(x);
  }

  Matrix xf;
  normalise_rows(x, params.final_gain, params.final_bias, cfg.ln_epsilon, xf,
                 cache ? &cache->final_ln : nullptr);
  matmul(xf, params.unembedding, trace.logits);
  if (cache) cache->final_out = std::move(xf);
  return trace;
}

}  // namespace detail

ForwardTrace forward(const ModelParams& params, std::span<const TokenId> tokens,
                     const InterventionSchedule* schedule, bool capture) {
  return detail::forward_impl(params, tokens, schedule, capture, nullptr);
}

Vector logits_from_hidden(const ModelParams& params, std::span<const double> hidden) {
  const ModelConfig& cfg = params.config;
  if (hidden.size() != cfg.d_model) {
    throw std::invalid_argument("logits_from_hidden: hidden size must equal d_model");
  }
  if (!all_finite(hidden)) throw std::invalid_argument("logits_from_hidden: non-finite input");
  Vector normed(cfg.d_model);
  layer_norm(hidden, params.final_gain, params.final_bias, cfg.ln_epsilon, normed);
  Vector logits(cfg.vocab_size);
  vecmat(normed, params.unembedding, logits);
  return logits;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_head", c.d_head},
          {"d_mlp", c.d_mlp},           {"vocab_size", c.vocab_size},
          {"max_seq_len", c.max_seq_len}, {"ln_epsilon", c.ln_epsilon},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_model = j.value("d_model", c.d_model);
    c.d_head = j.value("d_head", c.d_head);
    c.d_mlp = j.value("d_mlp", c.d_mlp);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.ln_epsilon = j.value("ln_epsilon", c.ln_epsilon);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config json: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace attnflow
