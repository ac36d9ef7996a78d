#include "attnflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "attnflow/detail/forward_cache.hpp"
#include "attnflow/parallel.hpp"
#include "attnflow/rng.hpp"

namespace attnflow {

TokenId argmax_token(std::span<const double> logits, std::span<const TokenId> candidates) {
  if (candidates.empty()) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  TokenId best = candidates.front();
  for (TokenId c : candidates) {
    if (c >= logits.size()) throw std::invalid_argument("argmax_token: candidate outside vocabulary");
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train config: learning_rate must be finite and >= 0");
  }
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw std::invalid_argument("train config: invalid Adam constants");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("train config: holdout_fraction must be in [0, 1)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"adam_epsilon", c.adam_epsilon},
          {"batch_size", c.batch_size},       {"n_steps", c.n_steps},
          {"train_seed", c.train_seed},       {"holdout_fraction", c.holdout_fraction}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.train_seed = j.value("train_seed", c.train_seed);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config json: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  params.visit([&](std::string_view, std::span<const double> v) {
    out.insert(out.end(), v.begin(), v.end());
  });
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& params) {
  std::size_t pos = 0;
  params.visit([&](std::string_view, std::span<double> v) {
    if (pos + v.size() > flat.size()) throw std::invalid_argument("unflatten: size mismatch");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
    pos += v.size();
  });
  if (pos != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

namespace {

void check_example(const ModelParams& params, const LabeledSequence& ex) {
  if (ex.answer >= params.config.vocab_size) {
    throw std::invalid_argument("loss: answer token outside vocabulary");
  }
}

double example_loss(const ModelParams& params, const LabeledSequence& ex) {
  check_example(params, ex);
  const ForwardTrace trace = forward(params, ex.tokens);
  Vector row(trace.logits.row(ex.tokens.size() - 1).begin(),
             trace.logits.row(ex.tokens.size() - 1).end());
  softmax(row);
  return -std::log(std::max(row[ex.answer], std::numeric_limits<double>::min()));
}

// Gradient of layer normalisation y = xhat * gain + bias for one row;
// accumulates gain/bias grads and writes dx (overwrites).
void layer_norm_backward(std::span<const double> x, const LayerNormStats& st,
                         std::span<const double> gain, std::span<const double> dy,
                         std::span<double> dgain, std::span<double> dbias, std::span<double> dx) {
  const std::size_t d = x.size();
  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
  std::vector<double> xhat(d), dxhat(d);
  for (std::size_t c = 0; c < d; ++c) {
    xhat[c] = (x[c] - st.mean) * st.rstd;
    dxhat[c] = dy[c] * gain[c];
    dgain[c] += dy[c] * xhat[c];
    dbias[c] += dy[c];
    mean_dxhat += dxhat[c];
    mean_dxhat_xhat += dxhat[c] * xhat[c];
  }
  mean_dxhat /= static_cast<double>(d);
  mean_dxhat_xhat /= static_cast<double>(d);
  for (std::size_t c = 0; c < d; ++c) {
    dx[c] = st.rstd * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
  }
}

// Accumulates weight * d(loss_example)/dθ into `g`; returns the example loss.
double backward_example(const ModelParams& params, const LabeledSequence& ex, double weight,
                        ModelParams& g) {
  check_example(params, ex);
  const ModelConfig& cfg = params.config;
  const std::size_t n = ex.tokens.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  const std::size_t last = n - 1;

  detail::ForwardCache cache;
  const ForwardTrace trace = detail::forward_impl(params, ex.tokens, nullptr, false, &cache);

  Vector p(trace.logits.row(last).begin(), trace.logits.row(last).end());
  softmax(p);
  const double example_loss = -std::log(std::max(p[ex.answer], std::numeric_limits<double>::min()));
  Vector dlogits(cfg.vocab_size);
  for (std::size_t j = 0; j < cfg.vocab_size; ++j) {
    dlogits[j] = weight * (p[j] - (j == ex.answer ? 1.0 : 0.0));
  }

  // Unembedding and final normalisation (only the last row carries signal).
  const auto xf = cache.final_out.row(last);
  Vector dxf(d, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cfg.vocab_size; ++j) {
      g.unembedding(c, j) += xf[c] * dlogits[j];
      acc += params.unembedding(c, j) * dlogits[j];
    }
    dxf[c] = acc;
  }
  Matrix dx(n, d);
  layer_norm_backward(trace.hidden.back().row(last), cache.final_ln[last], params.final_gain, dxf,
                      g.final_gain, g.final_bias, dx.row(last));

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dg, dh2, dz, dq(n, d), dk(n, d), dv(n, d), tmp;
  Vector dx_row(d);
  std::vector<double> da(n);

  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const LayerParams& lp = params.layers[li];
    LayerParams& gl = g.layers[li];
    const detail::LayerCache& lc = cache.layers[li];

    // MLP block.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) gl.b_out[c] += dx(i, c);
    matmul_at_b_acc(lc.act, dx, gl.w_out);
    matmul_a_bt(dx, lp.w_out, dg);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < cfg.d_mlp; ++c) {
        dg(i, c) *= gelu_grad(lc.pre_act(i, c));
        gl.b_in[c] += dg(i, c);
      }
    }
    matmul_at_b_acc(lc.ln2_out, dg, gl.w_in);
    matmul_a_bt(dg, lp.w_in, dh2);
    for (std::size_t i = 0; i < n; ++i) {
      layer_norm_backward(lc.x_mid.row(i), lc.ln2[i], lp.ln2_gain, dh2.row(i), gl.ln2_gain,
                          gl.ln2_bias, dx_row);
      for (std::size_t c = 0; c < d; ++c) dx(i, c) += dx_row[c];
    }

    // Attention block.
    matmul_at_b_acc(lc.z, dx, gl.w_o);
    matmul_a_bt(dx, lp.w_o, dz);
    dq.fill(0.0);
    dk.fill(0.0);
    dv.fill(0.0);
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      const std::size_t off = hd * dh;
      const Matrix& a = lc.probs[hd];
      for (std::size_t t = 0; t < n; ++t) {
        const double* dzt = dz.data() + t * d + off;
        double row_dot = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const double w = a(t, s);
          const double* vs = lc.v.data() + s * d + off;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += dzt[c] * vs[c];
          da[s] = acc;
          row_dot += w * acc;
          if (w != 0.0) {
            double* dvs = dv.data() + s * d + off;
            for (std::size_t c = 0; c < dh; ++c) dvs[c] += w * dzt[c];
          }
        }
        const double* qt = lc.q.data() + t * d + off;
        double* dqt = dq.data() + t * d + off;
        for (std::size_t s = 0; s <= t; ++s) {
          const double ds = a(t, s) * (da[s] - row_dot) * scale;
          if (ds == 0.0) continue;
          const double* ks = lc.k.data() + s * d + off;
          double* dks = dk.data() + s * d + off;
          for (std::size_t c = 0; c < dh; ++c) {
            dqt[c] += ds * ks[c];
            dks[c] += ds * qt[c];
          }
        }
      }
    }
    matmul_at_b_acc(lc.ln1_out, dq, gl.w_q);
    matmul_at_b_acc(lc.ln1_out, dk, gl.w_k);
    matmul_at_b_acc(lc.ln1_out, dv, gl.w_v);
    Matrix dh1;
    matmul_a_bt(dq, lp.w_q, dh1);
    matmul_a_bt(dk, lp.w_k, tmp);
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1.data()[i] += tmp.data()[i];
    matmul_a_bt(dv, lp.w_v, tmp);
    for (std::size_t i = 0; i < dh1.size(); ++i) dh1.data()[i] += tmp.data()[i];
    for (std::size_t i = 0; i < n; ++i) {
      layer_norm_backward(lc.x_in.row(i), lc.ln1[i], lp.ln1_gain, dh1.row(i), gl.ln1_gain,
                          gl.ln1_bias, dx_row);
      for (std::size_t c = 0; c < d; ++c) dx(i, c) += dx_row[c];
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto te = g.token_embedding.row(ex.tokens[i]);
    auto pe = g.position_embedding.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      te[c] += dx(i, c);
      pe[c] += dx(i, c);
    }
  }
  return example_loss;
}

void add_into(ModelParams& acc, const ModelParams& other) {
  std::vector<std::span<const double>> src;
  other.visit([&](std::string_view, std::span<const double> v) { src.push_back(v); });
  std::size_t i = 0;
  acc.visit([&](std::string_view, std::span<double> v) {
    const auto s = src[i++];
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += s[k];
  });
}

// Fixed chunking keeps the reduction order independent of the thread count.
constexpr std::size_t kGradChunks = 8;

}  // namespace

double loss(const ModelParams& params, std::span<const LabeledSequence> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  std::vector<double> per(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { per[i] = example_loss(params, batch[i]); });
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(batch.size());
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const LabeledSequence> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  const std::size_t chunks = std::min(kGradChunks, batch.size());
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<ModelParams> partial(chunks, ModelParams::zeros(params.config));
  std::vector<double> losses(batch.size());
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = batch.size() * c / chunks;
    const std::size_t end = batch.size() * (c + 1) / chunks;
    for (std::size_t i = begin; i < end; ++i) {
      losses[i] = backward_example(params, batch[i], weight, partial[c]);
    }
  });
  LossAndGrad out{0.0, std::move(partial[0])};
  for (std::size_t c = 1; c < chunks; ++c) add_into(out.grad, partial[c]);
  for (double l : losses) out.loss += l;
  out.loss /= static_cast<double>(batch.size());
  return out;
}

ModelParams grad(const ModelParams& params, std::span<const LabeledSequence> batch) {
  return loss_and_grad(params, batch).grad;
}

GradCheckReport grad_check(const ModelParams& params, const LabeledSequence& example,
                           double epsilon, std::size_t n_coordinates, std::uint64_t sample_seed) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-2)) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-6, 1e-2]");
  }
  const std::span<const LabeledSequence> one(&example, 1);
  const std::vector<double> analytic = flatten(grad(params, one));
  const std::vector<double> theta = flatten(params);
  const std::size_t total = theta.size();
  n_coordinates = std::min(n_coordinates, total);

  Rng rng(sample_seed);
  std::vector<std::size_t> coords;
  std::unordered_set<std::size_t> seen;
  while (coords.size() < n_coordinates) {
    const std::size_t c = rng.below(total);
    if (seen.insert(c).second) coords.push_back(c);
  }

  GradCheckReport report;
  ModelParams probe = params;
  std::vector<double> work = theta;
  for (std::size_t c : coords) {
    work[c] = theta[c] + epsilon;
    unflatten(work, probe);
    const double up = loss(probe, one);
    work[c] = theta[c] - epsilon;
    unflatten(work, probe);
    const double down = loss(probe, one);
    work[c] = theta[c];
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coordinates_checked;
    if (a != 0.0) ++report.nonzero_coordinates;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = c;
    }
  }
  return report;
}

double accuracy(const ModelParams& params, std::span<const LabeledSequence> data) {
  if (data.empty()) return 0.0;
  std::vector<unsigned char> hit(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const ForwardTrace trace = forward(params, data[i].tokens);
    hit[i] = argmax_token(trace.logits.row(data[i].tokens.size() - 1), data[i].candidates) ==
             data[i].answer;
  });
  std::size_t correct = 0;
  for (unsigned char h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

FitResult fit(const ModelConfig& model_config, std::span<const LabeledSequence> dataset,
              const TrainConfig& tc, const StepCallback& on_step) {
  tc.validate();
  model_config.validate();
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");
  for (const LabeledSequence& ex : dataset) {
    if (ex.tokens.empty() || ex.tokens.size() > model_config.max_seq_len) {
      throw std::invalid_argument("fit: sequence length outside [1, max_seq_len]");
    }
  }
  const std::size_t n_hold =
      static_cast<std::size_t>(std::floor(static_cast<double>(dataset.size()) * tc.holdout_fraction));
  const std::size_t n_train = dataset.size() - n_hold;
  if (n_train == 0) throw std::invalid_argument("fit: holdout leaves no training data");
  const auto train = dataset.first(n_train);
  const auto held = dataset.subspan(n_train);

  FitResult result{init_params(model_config), {}};
  std::vector<double> theta = flatten(result.params);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  Rng rng(tc.train_seed);
  std::vector<LabeledSequence> batch(tc.batch_size);
  double b1_pow = 1.0, b2_pow = 1.0;

  for (std::size_t step = 0; step < tc.n_steps; ++step) {
    for (auto& slot : batch) slot = train[rng.below(n_train)];
    LossAndGrad lg = loss_and_grad(result.params, batch);
    if (!std::isfinite(lg.loss)) throw std::runtime_error("fit: non-finite loss");
    result.report.losses.push_back(lg.loss);
    if (on_step) on_step(step, lg.loss);

    const std::vector<double> gflat = flatten(lg.grad);
    b1_pow *= tc.beta1;
    b2_pow *= tc.beta2;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * gflat[i];
      v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * gflat[i] * gflat[i];
      const double mhat = m[i] / (1.0 - b1_pow);
      const double vhat = v[i] / (1.0 - b2_pow);
      theta[i] = static_cast<float>(theta[i] - tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_epsilon));
    }
    unflatten(theta, result.params);
  }

  result.report.train_accuracy = accuracy(result.params, train);
  if (!held.empty()) result.report.heldout_accuracy = accuracy(result.params, held);
  return result;
}

}  // namespace attnflow
