#include <gtest/gtest.h>

#include <cmath>

#include "attnflow/probes.hpp"
#include "support.hpp"

namespace attnflow {
namespace {

TEST(PercentChange, Cases) {
  EXPECT_DOUBLE_EQ(percent_change(0.5, 0.4), -20.0);
  EXPECT_EQ(percent_change(0.5, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(percent_change(0.5, 0.65), 30.0);
  EXPECT_THROW(percent_change(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(percent_change(-0.1, 0.1), std::invalid_argument);
}

TEST(Flow, NamesRoundTrip) {
  for (Flow f : all_flows()) EXPECT_EQ(parse_flow(flow_name(f)), f);
  EXPECT_EQ(parse_flow("cross-frame"), Flow::CrossFrame);
  EXPECT_EQ(parse_flow("video-question"), Flow::VideoToQuestion);
  EXPECT_THROW(parse_flow("frames"), std::invalid_argument);
}

// Video of 2 frames x 2 tokens, one question token, the last token.
SpanMap copy_map() {
  QuestionTemplate q;
  q.prefix_tokens = 0;
  q.question_tokens = 1;
  q.option_tokens = 0;
  return build_span_map(FrameLayout{2, 2}, q, 0, 0, true);
}

// One layer with zero queries and keys, so every enabled key gets the same
// weight, identity value/output maps and no MLP. The last hidden state is
// e_last + mean of the normalised embeddings of its enabled keys.
ModelParams copy_model() {
  ModelConfig c = testing::tiny_config(1, 1, 2, 4, 8);
  ModelParams p = ModelParams::zeros(c);
  for (auto* g : {&p.layers[0].ln1_gain, &p.layers[0].ln2_gain, &p.final_gain}) g->assign(2, 1.0);
  const double e[4] = {0.0, 1.0, -1.0, 0.5};
  for (std::size_t t = 0; t < 4; ++t) {
    p.token_embedding(t, 0) = e[t];
    p.token_embedding(t, 1) = -e[t];
  }
  p.layers[0].w_v(0, 0) = p.layers[0].w_v(1, 1) = 1.0;
  p.layers[0].w_o(0, 0) = p.layers[0].w_o(1, 1) = 1.0;
  p.unembedding(0, 0) = 1.0;
  p.unembedding(1, 1) = 1.0;
  return p;
}

// Closed form of copy_model: returns p(token 0) at the last position when
// only `keys` are visible to it.
double copy_oracle(const std::vector<TokenId>& tokens, const std::vector<Index>& keys) {
  const double e[4] = {0.0, 1.0, -1.0, 0.5};
  auto norm = [](double a) { return a / std::sqrt(a * a + 1e-5); };  // (a, -a) -> first coord
  double mean = 0.0;
  for (Index s : keys) mean += norm(e[tokens[s]]);
  mean /= static_cast<double>(keys.size());
  const double z = norm(e[tokens.back()] + mean);
  // Logits (z, -z, 0, 0).
  return std::exp(z) / (std::exp(z) + std::exp(-z) + 2.0);
}

TEST(KnockoutSweep, MatchesClosedFormOnCopyModel) {
  const SpanMap map = copy_map();
  ASSERT_EQ(map.seq_len(), 6u);
  const ModelParams p = copy_model();
  const std::vector<TokenId> tokens{1, 1, 2, 1, 2, 3};

  const double base = copy_oracle(tokens, {0, 1, 2, 3, 4, 5});
  const SweepCurve full = knockout_sweep(p, tokens, map, Flow::None, 1);
  ASSERT_EQ(full.points.size(), 1u);
  EXPECT_EQ(full.answer, 0u);
  EXPECT_NEAR(full.points[0].p_base, base, 1e-12);

  const SweepCurve v2l = knockout_sweep(p, tokens, map, Flow::VideoToLast, 1);
  const double knocked = copy_oracle(tokens, {4, 5});
  EXPECT_NEAR(v2l.points[0].p_knockout, knocked, 1e-12);
  EXPECT_NEAR(v2l.points[0].pct_change, 100.0 * (knocked - base) / base, 1e-9);
  EXPECT_LT(v2l.points[0].pct_change, 0.0);

  const SweepCurve q2l = knockout_sweep(p, tokens, map, Flow::QuestionToLast, 1);
  EXPECT_NEAR(q2l.points[0].p_knockout, copy_oracle(tokens, {0, 1, 2, 3, 5}), 1e-12);
}

TEST(KnockoutSweep, NoOpSweepsAreExactlyZero) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(4, 2, 4, 64, 64, 5));
  // A single frame has no cross-frame edges.
  const auto data = generate(TaskFamily::CountAtStart, 3, 1, FrameLayout{1, 8}, true);
  for (const Example& ex : data) {
    for (std::size_t k : {1u, 3u, 9u}) {
      const SweepCurve none = knockout_sweep(p, ex.tokens, ex.spans, Flow::None, k);
      const SweepCurve cross = knockout_sweep(p, ex.tokens, ex.spans, Flow::CrossFrame, k);
      for (const SweepCurve* c : {&none, &cross}) {
        ASSERT_EQ(c->points.size(), 4u);
        for (const SweepPoint& pt : c->points) {
          EXPECT_EQ(pt.pct_change, 0.0);
          EXPECT_EQ(pt.p_knockout, pt.p_base);
        }
      }
    }
  }
  EXPECT_THROW(knockout_sweep(p, data[0].tokens, data[0].spans, Flow::None, 2), std::invalid_argument);
}

TEST(KnockoutSweep, PointsMatchDirectForward) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(5, 2, 4, 64, 64, 6));
  const Example ex = generate(TaskFamily::MovingDirection, 1, 2, FrameLayout{}, false)[0];
  const SweepCurve c = knockout_sweep(p, ex.tokens, ex.spans, Flow::CrossFrame, 3);
  for (std::size_t l = 0; l < 5; ++l) {
    const InterventionSchedule s = cross_frame_schedule(ex.spans, knockout_window(l, 3, 5), 5);
    const ForwardTrace t = forward(p, ex.tokens, &s);
    const auto row = t.logits.row(ex.spans.last_index);
    Vector probs(row.begin(), row.end());
    softmax(probs);
    EXPECT_EQ(c.points[l].center_layer, l);
    EXPECT_EQ(c.points[l].p_knockout, probs[c.answer]);
  }
  const SweepCurve sel = knockout_sweep(p, ex.tokens, ex.spans, SegmentSelector::all_video(),
                                        SegmentSelector::last(), 3);
  const SweepCurve named = knockout_sweep(p, ex.tokens, ex.spans, Flow::VideoToLast, 3);
  for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(sel.points[l].p_knockout, named.points[l].p_knockout);
}

TEST(MeanCurve, AveragesPointwise) {
  SweepCurve a{"video-last", 3, 1, {{0, 0.5, 0.25, -50.0}, {1, 0.5, 0.5, 0.0}}};
  SweepCurve b{"video-last", 3, 2, {{0, 0.4, 0.4, 0.0}, {1, 0.4, 0.6, 50.0}}};
  const SweepCurve m = mean_curve(std::vector<SweepCurve>{a, b});
  EXPECT_DOUBLE_EQ(m.points[0].pct_change, -25.0);
  EXPECT_DOUBLE_EQ(m.points[1].pct_change, 25.0);
  EXPECT_DOUBLE_EQ(m.points[1].p_knockout, 0.55);
  b.flow = "cross-frame";
  EXPECT_THROW(mean_curve(std::vector<SweepCurve>{a, b}), std::invalid_argument);
  EXPECT_THROW(mean_curve(std::vector<SweepCurve>{}), std::invalid_argument);
}

TEST(AnswerProbCurve, FinalRowEqualsHeadOutput) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(3, 2, 4, 64, 64, 8));
  for (const Example& ex : generate(TaskFamily::CountAtStart, 5, 3, FrameLayout{}, false)) {
    const AnswerProbCurve c = answer_prob_curve(p, ex.tokens, ex.spans, ex.candidates, ex.answer_token);
    ASSERT_EQ(c.probabilities.rows(), 4u);
    const auto row = forward(p, ex.tokens).logits.row(ex.spans.last_index);
    Vector probs(row.begin(), row.end());
    softmax(probs);
    for (std::size_t i = 0; i < ex.candidates.size(); ++i) {
      EXPECT_EQ(c.probabilities(3, i), probs[ex.candidates[i]]);
      EXPECT_EQ(c.is_true[i], ex.candidates[i] == ex.answer_token);
    }
  }
  const Example ex = generate(TaskFamily::CountAtStart, 1, 3, FrameLayout{}, false)[0];
  EXPECT_THROW(answer_prob_curve(p, ex.tokens, ex.spans, std::vector<TokenId>{64}, 0),
               std::invalid_argument);
}

TEST(LogitLens, ConstantDecoderCountsEveryVideoToken) {
  ModelParams p = init_params(testing::tiny_config(2, 2, 4, 64, 64, 2));
  for (double& g : p.final_gain) g = 0.0;
  p.final_bias.assign(p.final_bias.size(), 0.0);
  p.final_bias[0] = 1.0;
  for (double& w : p.unembedding.flat()) w = 0.0;
  p.unembedding(0, token_id("dot")) = 1.0;
  const auto data = generate(TaskFamily::MovingDirection, 4, 1, FrameLayout{}, false);
  const LogitLensReport r = logit_lens_report(p, data, KeywordSets::from_vocab());
  ASSERT_EQ(r.categories, (std::vector<std::string>{"spatial", "temporal"}));
  ASSERT_EQ(r.cells.size(), 3u);
  for (const auto& layer : r.cells) {
    EXPECT_EQ(layer[0].count, 4u * 32u);
    EXPECT_EQ(layer[0].total_video_tokens, 4u * 32u);
    EXPECT_EQ(layer[0].frequency, 1.0);
    EXPECT_EQ(layer[1].count, 0u);
  }
  const LogitLensReport n = r.max_normalised();
  EXPECT_EQ(n.cells[1][0].frequency, 1.0);
  EXPECT_EQ(n.cells[1][1].frequency, 0.0);
}

TEST(LogitLens, MaxNormalisedAndValidation) {
  LogitLensReport r;
  r.categories = {"a"};
  r.cells = {{{1, 10, 0.1}}, {{4, 10, 0.4}}, {{2, 10, 0.2}}};
  const LogitLensReport n = r.max_normalised();
  EXPECT_DOUBLE_EQ(n.cells[0][0].frequency, 0.25);
  EXPECT_EQ(n.cells[1][0].frequency, 1.0);
  KeywordSets k{{{"x", {1, 2}}, {"y", {2}}}};
  EXPECT_THROW(k.validate(), std::invalid_argument);
  const auto data = generate(TaskFamily::MovingDirection, 1, 1, FrameLayout{}, false);
  const ModelParams p = init_params(testing::tiny_config(1, 1, 4, 64, 64));
  EXPECT_THROW(logit_lens_report(p, std::span<const Example>{}, KeywordSets::from_vocab()),
               std::invalid_argument);
  EXPECT_THROW(logit_lens_report(p, data, k), std::invalid_argument);
}

TEST(AttentionMap, RowsSumToOneOrZero) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(3, 2, 4, 64, 64, 12));
  const Example ex = generate(TaskFamily::EventOrder, 1, 4, FrameLayout{}, false)[0];
  const auto all = SegmentSelector::all();
  InterventionSchedule s = block(InterventionSchedule(3, ex.spans.seq_len()), all,
                                 SegmentSelector::last(), LayerRange{1, 1}, ex.spans);
  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      const AttentionMap m = attention_map(p, ex.tokens, ex.spans, l, h, all, all, &s);
      ASSERT_EQ(m.weights.rows(), ex.spans.seq_len());
      for (std::size_t i = 0; i < m.weights.rows(); ++i) {
        double sum = 0.0;
        for (double w : m.weights.row(i)) sum += w;
        if (l == 1 && m.queries[i] == ex.spans.last_index) {
          EXPECT_EQ(sum, 0.0);
        } else {
          EXPECT_NEAR(sum, 1.0, 1e-6);
        }
      }
    }
  }
  const AttentionMap sub = attention_map(p, ex.tokens, ex.spans, 0, 0, SegmentSelector::whole_question(),
                                         SegmentSelector::all_video());
  EXPECT_EQ(sub.keys.size(), 32u);
  EXPECT_EQ(sub.queries, select(ex.spans, SegmentSelector::whole_question()));
  EXPECT_THROW(attention_map(p, ex.tokens, ex.spans, 3, 0, all, all), std::invalid_argument);
  EXPECT_THROW(attention_map(p, ex.tokens, ex.spans, 0, 2, all, all), std::invalid_argument);
}

TEST(Accuracy, ScheduleBuilderAndCorrectSubset) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(2, 2, 4, 64, 64, 13));
  const auto data = generate(TaskFamily::EventOrder, 12, 4, FrameLayout{}, false);
  const AccuracyResult plain = accuracy(p, data);
  const AccuracyResult none = accuracy(p, data, [](const SpanMap& m, std::size_t n) {
    return InterventionSchedule(n, m.seq_len());
  });
  EXPECT_EQ(plain.predictions, none.predictions);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = forward(p, data[i].tokens).logits.row(data[i].spans.last_index);
    EXPECT_EQ(plain.predictions[i], argmax_token(row, data[i].candidates));
    hits += plain.predictions[i] == data[i].answer_token;
  }
  EXPECT_DOUBLE_EQ(plain.accuracy, static_cast<double>(hits) / 12.0);
  for (std::size_t i : correct_subset(p, data)) {
    const auto row = forward(p, data[i].tokens).logits.row(data[i].spans.last_index);
    EXPECT_EQ(argmax_token(row, {}), data[i].answer_token);
  }
  EXPECT_EQ(accuracy(p, std::span<const Example>{}).accuracy, 0.0);
}

TEST(SweepDataset, OnlyCorrectExamplesAreSwept) {
  const ModelParams p = testing::perturbed_params(testing::tiny_config(2, 2, 4, 64, 64, 14));
  const auto data = generate(TaskFamily::EventOrder, 10, 4, FrameLayout{}, false);
  const SweepSummary s = sweep_dataset(p, data, Flow::VideoToLast, 1);
  EXPECT_EQ(s.total, 10u);
  EXPECT_EQ(s.kept, correct_subset(p, data));
  EXPECT_EQ(s.curves.size(), s.kept.size());
}

}  // namespace
}  // namespace attnflow
