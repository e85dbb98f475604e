#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docnmt/model.hpp"
#include "docnmt/training.hpp"
#include "test_util.hpp"

using namespace docnmt;
using docnmt::testing::finite_difference_error;
using docnmt::testing::random_tensor;

namespace {

ModelDims tiny_dims() { return ModelDims{7, 7, 3, 4, 4}; }

ModelParams tiny_model(ModelMode mode, std::uint64_t seed = 11) {
  Rng rng(seed);
  return ModelParams::initialize(mode, tiny_dims(), rng);
}

// Biases start at zero; give them values so their gradients are exercised.
void randomize_biases(ModelParams& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : params.named()) {
    if (t->rank() != 1) continue;
    for (double& v : t->mutable_values()) v = rng.uniform(-0.5, 0.5);
  }
}

void zero_all(GruParams& g) {
  for (Tensor* t : {&g.input_gates, &g.state_gates, &g.gate_bias, &g.input_candidate, &g.state_candidate,
                    &g.candidate_bias}) {
    for (double& v : t->mutable_values()) v = 0.0;
  }
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<double> naive_matvec(const Tensor& m, std::span<const double> v) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r] += m.at(r, c) * v[c];
  }
  return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("mode names round trip") {
  CHECK(parse_model_mode("baseline") == ModelMode::baseline);
  CHECK(parse_model_mode("isg") == ModelMode::isg);
  CHECK(to_string(ModelMode::isg) == "isg");
  CHECK_THROWS_AS(parse_model_mode("gated"), std::invalid_argument);
}

TEST_CASE("initialization shapes and ranges") {
  ModelParams p = tiny_model(ModelMode::isg);
  const ModelDims d = tiny_dims();
  CHECK(p.src_embedding.shape() == Shape{7, 3});
  CHECK(p.decoder.input_dim() == d.embedding + d.hidden);
  CHECK(p.context_current.shape() == Shape{4, 8});
  CHECK(p.gate_word.shape() == Shape{4, 3});
  CHECK(p.output_weight.shape() == Shape{7, d.readout()});
  for (const auto& [name, t] : p.named()) {
    if (t->rank() == 1 && name != "attention.score") {
      for (double v : t->values()) CHECK(v == 0.0);
    } else if (t->rank() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
      for (double v : t->values()) CHECK(std::abs(v) <= limit);
    }
  }
  ModelParams b = tiny_model(ModelMode::baseline);
  for (const auto& name : ModelParams::gate_parameter_names()) {
    CHECK(p.named().count(name) == 1);
    CHECK(b.named().count(name) == 0);
  }
}

TEST_CASE("initialization is seed-deterministic") {
  ModelParams a = tiny_model(ModelMode::isg, 5);
  ModelParams b = tiny_model(ModelMode::isg, 5);
  ModelParams c = tiny_model(ModelMode::isg, 6);
  bool differs = false;
  for (const auto& [name, t] : a.named()) {
    CHECK(values_of(*t) == values_of(*b.named().at(name)));
    if (values_of(*t) != values_of(*c.named().at(name))) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("gru with zero parameters halves the state") {
  ModelParams p = tiny_model(ModelMode::baseline);
  zero_all(p.encoder_forward);
  Tensor h_prev = Tensor::vector({1.0, -2.0, 0.25, 4.0});
  Tensor h = gru_step(p.encoder_forward, Tensor::vector({0.3, -0.7, 1.1}), h_prev);
  for (std::size_t i = 0; i < 4; ++i) CHECK(h[i] == doctest::Approx(0.5 * h_prev[i]).epsilon(1e-15));
  Tensor zero = gru_step(p.encoder_forward, Tensor::vector({0.3, -0.7, 1.1}), Tensor::zeros({4}));
  for (double v : zero.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(gru_step(p.encoder_forward, Tensor::zeros({2}), h_prev), DimensionError);
  CHECK_THROWS_AS(gru_step(p.encoder_forward, Tensor::zeros({3}), Tensor::zeros({5})), DimensionError);
}

TEST_CASE("gru gradient matches finite differences") {
  Rng rng(21);
  GruParams g{random_tensor({8, 3}, rng, -1, 1, true), random_tensor({8, 4}, rng, -1, 1, true),
              random_tensor({8}, rng, -1, 1, true),    random_tensor({4, 3}, rng, -1, 1, true),
              random_tensor({4, 4}, rng, -1, 1, true), random_tensor({4}, rng, -1, 1, true)};
  Tensor x = random_tensor({3}, rng, -2, 2, true);
  Tensor h = random_tensor({4}, rng, -2, 2, true);
  auto f = [&] { return sum(gru_step(g, x, h)); };
  CHECK(finite_difference_error(f, {g.input_gates, g.state_gates, g.gate_bias, g.input_candidate,
                                    g.state_candidate, g.candidate_bias, x, h}) < 1e-5);
}

TEST_CASE("encode single token") {
  ModelParams p = tiny_model(ModelMode::baseline);
  EncodedSentence enc = encode(p, {4});
  Tensor e = embed(p.src_embedding, 4);
  Tensor fwd = gru_step(p.encoder_forward, e, Tensor::zeros({4}));
  Tensor bwd = gru_step(p.encoder_backward, e, Tensor::zeros({4}));
  CHECK(enc.length == 1);
  CHECK(enc.annotations.shape() == Shape{1, 8});
  CHECK(values_of(enc.annotations) == values_of(concat(fwd, bwd)));
}

TEST_CASE("backward pass equals forward pass over the reversed sentence") {
  ModelParams p = tiny_model(ModelMode::baseline);
  const Sentence ids{4, 5, 6, 2, 5};
  EncodedSentence enc = encode(p, ids);
  // Swap directions so the forward half of reversed(x) runs the backward GRU.
  ModelParams swapped = p.clone();
  std::swap(swapped.encoder_forward, swapped.encoder_backward);
  Sentence reversed(ids.rbegin(), ids.rend());
  EncodedSentence rev = encode(swapped, reversed);
  const std::size_t n = ids.size(), h = 4;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < h; ++k) {
      CHECK(enc.annotations.at(j, h + k) == rev.annotations.at(n - 1 - j, k));
    }
  }
}

TEST_CASE("encode length limits") {
  ModelParams p = tiny_model(ModelMode::baseline);
  CHECK_NOTHROW(encode(p, Sentence(50, 4)));
  CHECK_THROWS_AS(encode(p, Sentence(51, 4)), std::invalid_argument);
  CHECK_THROWS_AS(encode(p, Sentence{}), std::invalid_argument);
  CHECK_THROWS_AS(encode(p, Sentence{7}), std::out_of_range);
}

TEST_CASE("attention over one position") {
  ModelParams p = tiny_model(ModelMode::baseline);
  EncodedSentence enc = encode(p, {5});
  Attention att = attend(p.attention, Tensor::vector({0.1, 0.2, -0.3, 0.4}), enc);
  CHECK(att.weights.size() == 1);
  CHECK(att.weights[0] == 1.0);
  CHECK(values_of(att.context) == values_of(enc.annotations));
}

TEST_CASE("attention over identical rows is uniform") {
  ModelParams p = tiny_model(ModelMode::baseline);
  EncodedSentence enc = encode(p, {5, 6});
  std::vector<double> row(enc.annotations.values().begin(), enc.annotations.values().begin() + 8);
  std::vector<double> both = row;
  both.insert(both.end(), row.begin(), row.end());
  enc.annotations = Tensor::from({2, 8}, both);
  enc.keys = matmul(enc.annotations, p.attention.annotation);
  Attention att = attend(p.attention, Tensor::vector({0.5, -0.5, 0.2, 0.9}), enc);
  CHECK(att.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(att.weights[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("attention context equals the explicit weighted sum") {
  ModelParams p = tiny_model(ModelMode::baseline, 3);
  EncodedSentence enc = encode(p, {4, 6, 5, 2});
  Rng rng(8);
  Tensor query = random_tensor({4}, rng);
  Attention att = attend(p.attention, query, enc);

  // Independent evaluation of v . tanh(W_q q + W_h^T h_j), softmax, sum.
  const auto wq = naive_matvec(p.attention.query, query.values());
  std::vector<double> scores(enc.length);
  for (std::size_t j = 0; j < enc.length; ++j) {
    double s = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
      double pre = wq[a];
      for (std::size_t c = 0; c < 8; ++c) pre += enc.annotations.at(j, c) * p.attention.annotation.at(c, a);
      s += p.attention.score[a] * std::tanh(pre);
    }
    scores[j] = s;
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) z += (s = std::exp(s - top));
  double total = 0.0;
  for (std::size_t j = 0; j < enc.length; ++j) {
    CHECK(att.weights[j] == doctest::Approx(scores[j] / z).epsilon(1e-12));
    total += att.weights[j];
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  for (std::size_t c = 0; c < 8; ++c) {
    double expected = 0.0;
    for (std::size_t j = 0; j < enc.length; ++j) expected += att.weights[j] * enc.annotations.at(j, c);
    CHECK(std::abs(att.context[c] - expected) < 1e-12);
  }
}

TEST_CASE("feedback state with zero parameters") {
  ModelParams p = tiny_model(ModelMode::baseline);
  zero_all(p.feedback);
  Tensor s = Tensor::vector({0.4, -0.8, 1.2, 0.0});
  Tensor q = feedback_state(p, s, kBosId);
  for (std::size_t i = 0; i < 4; ++i) CHECK(q[i] == 0.5 * s[i]);
}

TEST_CASE("decoder init") {
  ModelParams p = tiny_model(ModelMode::baseline);
  EncodedSentence enc = encode(p, {4, 5});
  Tensor s0 = decoder_init(p, enc);
  CHECK(s0.shape() == Shape{4});
  for (double& v : p.init_weight.mutable_values()) v = 0.0;
  Tensor zeroed = decoder_init(p, enc);
  for (double v : zeroed.values()) CHECK(v == 0.0);
}

TEST_CASE("gate values") {
  ModelParams p = tiny_model(ModelMode::isg, 4);
  randomize_biases(p, 40);
  Rng rng(41);
  Tensor s = random_tensor({4}, rng);
  Tensor cb = random_tensor({8}, rng);
  Tensor ca = random_tensor({8}, rng);
  Tensor z = gate(p, s, 5, cb, ca);

  const auto us = naive_matvec(p.gate_state, s.values());
  const auto we = naive_matvec(p.gate_word, embed(p.tgt_embedding, 5).values());
  const auto cbv = naive_matvec(p.gate_current, cb.values());
  const auto cav = naive_matvec(p.gate_previous, ca.values());
  for (std::size_t i = 0; i < 4; ++i) {
    const double expected = 1.0 / (1.0 + std::exp(-(us[i] + we[i] + cbv[i] + cav[i])));
    CHECK(std::abs(z[i] - expected) < 1e-12);
    CHECK(z[i] > 0.0);
    CHECK(z[i] < 1.0);
  }

  ModelParams zeroed = p.clone();
  for (const char* name : {"gate.state", "gate.word", "gate.current", "gate.previous"}) {
    for (double& v : zeroed.named().at(name)->mutable_values()) v = 0.0;
  }
  Tensor half = gate(zeroed, s, 5, cb, ca);
  for (double v : half.values()) CHECK(v == 0.5);

  // A large C_a acting on a positive c_a saturates the gate towards 1.
  for (double& v : zeroed.gate_previous.mutable_values()) v = 1e3;
  Tensor positive = Tensor::filled({8}, 0.5);
  Tensor saturated = gate(zeroed, s, 5, cb, positive);
  for (double v : saturated.values()) CHECK(v > 1.0 - 1e-12);

  CHECK_THROWS_AS(gate(tiny_model(ModelMode::baseline), s, 5, cb, ca), StateError);
}

TEST_CASE("forced zero gate ignores before-x") {
  ModelParams p = tiny_model(ModelMode::isg, 9);
  randomize_biases(p, 90);
  EncodedSentence cur = encode(p, {4, 5, 6});
  EncodedSentence prev_a = encode(p, {5, 5});
  EncodedSentence prev_b = encode(p, {6, 2, 4, 4, 3});
  Rng rng(91);
  Tensor s = random_tensor({4}, rng, -1, 1);
  StepControl zero{GateForce::zero, nullptr};
  StepResult a = isg_decoder_step(p, s, 4, prev_a, cur, zero);
  StepResult b = isg_decoder_step(p, s, 4, prev_b, cur, zero);
  CHECK(max_abs_diff(a.state, b.state) <= 1e-12);
  // Without forcing, the preceding sentence does matter.
  StepResult c = isg_decoder_step(p, s, 4, prev_a, cur);
  StepResult d = isg_decoder_step(p, s, 4, prev_b, cur);
  CHECK(max_abs_diff(c.state, d.state) > 1e-6);
}

TEST_CASE("forced unit gate ignores the current context in the state update") {
  ModelParams p = tiny_model(ModelMode::isg, 10);
  randomize_biases(p, 100);
  EncodedSentence prev = encode(p, {4, 5, 6});
  EncodedSentence cur_a = encode(p, {5, 6});
  EncodedSentence cur_b = encode(p, {2, 6, 6, 4});
  Rng rng(101);
  Tensor s = random_tensor({4}, rng, -1, 1);
  StepControl one{GateForce::one, nullptr};
  StepResult a = isg_decoder_step(p, s, 6, prev, cur_a, one);
  StepResult b = isg_decoder_step(p, s, 6, prev, cur_b, one);
  CHECK(max_abs_diff(a.state, b.state) <= 1e-12);
  CHECK(max_abs_diff(a.context_current, b.context_current) > 1e-6);

  // Perturbing C2 is equally invisible.
  ModelParams q = p.clone();
  for (double& v : q.context_current.mutable_values()) v += 0.3;
  StepResult e = isg_decoder_step(q, s, 6, prev, cur_a, one);
  CHECK(max_abs_diff(a.state, e.state) <= 1e-12);
}

TEST_CASE("equal context projections make the gate irrelevant") {
  // C1 c z + C2 c (1 - z) = C c when C1 = C2 = C and both contexts coincide.
  ModelParams p = tiny_model(ModelMode::isg, 12);
  randomize_biases(p, 120);
  p.context_previous = p.context_current.clone(true);
  EncodedSentence enc = encode(p, {4, 6, 5});
  Rng rng(121);
  Tensor s = random_tensor({4}, rng, -1, 1);
  StepResult gated = isg_decoder_step(p, s, 5, enc, enc);
  StepResult forced = isg_decoder_step(p, s, 5, enc, enc, {GateForce::zero, nullptr});
  ModelParams base = p.clone();
  base.mode = ModelMode::baseline;
  StepResult plain = baseline_decoder_step(base, s, 5, enc);
  CHECK(max_abs_diff(gated.state, plain.state) <= 1e-12);
  CHECK(max_abs_diff(forced.state, plain.state) <= 1e-12);
}

TEST_CASE("zero-gate model reduces to the baseline it was initialized from") {
  ModelParams base = tiny_model(ModelMode::baseline, 13);
  randomize_biases(base, 130);
  ModelParams isg = pretrain_init(base, tiny_dims(), 77);
  const DecodeInputs in_isg = encode_inputs(isg, {5, 6}, {4, 4, 6});
  const DecodeInputs in_base = encode_inputs(base, {5, 6}, {4, 4, 6});
  Tensor s_isg = decoder_init(isg, in_isg.current);
  Tensor s_base = decoder_init(base, in_base.current);
  TokenId prev = kBosId;
  for (std::size_t t = 0; t < 4; ++t) {
    StepOutput a = decode_step(isg, in_isg, s_isg, prev, {GateForce::zero, nullptr}, t);
    StepOutput b = decode_step(base, in_base, s_base, prev, {}, t);
    CHECK(max_abs_diff(a.probs, b.probs) <= 1e-12);
    s_isg = a.step.state;
    s_base = b.step.state;
    prev = static_cast<TokenId>(4 + t % 3);
  }
}

TEST_CASE("output layer") {
  ModelParams p = tiny_model(ModelMode::baseline);
  Rng rng(14);
  Tensor s = random_tensor({4}, rng);
  Tensor cb = random_tensor({8}, rng);
  Tensor probs = output_probs(p, s, 5, cb);
  CHECK(std::abs(std::accumulate(probs.values().begin(), probs.values().end(), 0.0) - 1.0) < 1e-12);

  ModelParams zero = p.clone();
  for (double& v : zero.output_weight.mutable_values()) v = 0.0;
  Tensor uniform = output_probs(zero, s, 5, cb);
  for (double v : uniform.values()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));

  Rng d1(3), d2(3);
  Dropout drop1{0.5, &d1}, drop2{0.5, &d2};
  CHECK(values_of(output_probs(p, s, 5, cb, &drop1)) == values_of(output_probs(p, s, 5, cb, &drop2)));
  Dropout no_rng{0.5, nullptr};
  CHECK_THROWS_AS(output_probs(p, s, 5, cb, &no_rng), std::invalid_argument);
}

TEST_CASE("output layer ignores the before-x context") {
  // Two steps that differ only in c^a share the same output once the state is fixed.
  ModelParams p = tiny_model(ModelMode::isg, 15);
  EncodedSentence cur = encode(p, {4, 5});
  Rng rng(150);
  Tensor s = random_tensor({4}, rng, -1, 1);
  StepResult a = isg_decoder_step(p, s, 4, encode(p, {6}), cur);
  StepResult b = isg_decoder_step(p, s, 4, encode(p, {2, 2, 6}), cur);
  CHECK(values_of(a.context_current) == values_of(b.context_current));
  CHECK(values_of(output_probs(p, a.state, 4, a.context_current)) ==
        values_of(output_probs(p, a.state, 4, b.context_current)));
}

TEST_CASE("uniform output gives log V per token") {
  ModelParams p = tiny_model(ModelMode::baseline);
  for (double& v : p.output_weight.mutable_values()) v = 0.0;
  NllResult r = sentence_nll(p, {}, {4, 5}, {});
  CHECK(r.loss.item() == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  CHECK(r.trace.size() == 1);
  NllResult two = sentence_nll(p, {}, {4, 5}, {6});
  CHECK(two.loss.item() == doctest::Approx(2.0 * std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("trace invariants") {
  ModelParams p = tiny_model(ModelMode::isg, 16);
  randomize_biases(p, 160);
  NllResult r = sentence_nll(p, {4, 5, 6}, {6, 2}, {4, 5, 5});
  REQUIRE(r.trace.size() == 4);
  for (const auto& step : r.trace.steps) {
    CHECK(step.alpha_previous.size() == 3);
    CHECK(step.alpha_current.size() == 2);
    CHECK(std::abs(std::accumulate(step.alpha_previous.begin(), step.alpha_previous.end(), 0.0) - 1.0) < 1e-9);
    CHECK(std::abs(std::accumulate(step.alpha_current.begin(), step.alpha_current.end(), 0.0) - 1.0) < 1e-9);
    CHECK(step.gate.size() == 4);
    for (double z : step.gate) {
      CHECK(z > 0.0);
      CHECK(z < 1.0);
    }
    CHECK(step.distribution.size() == 7);
  }
  NllResult base = sentence_nll(tiny_model(ModelMode::baseline), {}, {6, 2}, {4});
  CHECK(base.trace.steps[0].gate.empty());
  CHECK(base.trace.steps[0].alpha_previous.empty());
}

TEST_CASE("sentence nll rejects out-of-range targets") {
  ModelParams p = tiny_model(ModelMode::baseline);
  CHECK_THROWS_AS(sentence_nll(p, {}, {4}, {7}), std::out_of_range);
  CHECK_THROWS_AS(sentence_nll(p, {}, {9}, {4}), std::out_of_range);
  NllOptions train;
  train.train = true;
  CHECK_THROWS_AS(sentence_nll(p, {}, {4}, {4}, train), std::invalid_argument);
}

TEST_CASE("losses are bit-identical across runs") {
  auto run = [] {
    ModelParams p = tiny_model(ModelMode::isg, 17);
    Rng drop(5);
    NllOptions opts;
    opts.train = true;
    opts.dropout_rng = &drop;
    return sentence_nll(p, {4, 4, 5}, {5, 6}, {6, 4, 2}, opts).loss.item();
  };
  CHECK(run() == run());
}

TEST_CASE("random context draws") {
  RandomContext per_step(Rng(3), 8);
  RandomContext per_sentence(Rng(3), 8, true);
  const auto first = values_of(per_step.at_step(0));
  CHECK(values_of(per_step.at_step(1)) != first);
  CHECK(values_of(per_step.at_step(0)) == first);
  CHECK(values_of(per_sentence.at_step(0)) == first);
  CHECK(values_of(per_sentence.at_step(5)) == first);
  for (double v : per_step.at_step(3).values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("one gated step gradient matches finite differences") {
  ModelParams p = tiny_model(ModelMode::isg, 18);
  randomize_biases(p, 180);
  EncodedSentence prev = encode(p, {4, 6});
  EncodedSentence cur = encode(p, {5, 2, 6});
  Rng rng(181);
  Tensor s = random_tensor({4}, rng, -1, 1, true);
  auto f = [&] {
    StepResult r = isg_decoder_step(p, s, 5, prev, cur);
    return testing::weighted_sum(r.state);
  };
  std::vector<Tensor> params{s};
  for (const auto& name : ModelParams::gate_parameter_names()) params.push_back(*p.named().at(name));
  for (const char* name : {"decoder.input_gates", "decoder.state_candidate", "feedback.input_gates",
                           "attention.query", "attention.score", "context.current"}) {
    params.push_back(*p.named().at(name));
  }
  CHECK(finite_difference_error(f, params) < 1e-5);
}

TEST_CASE("baseline step gradient matches finite differences") {
  ModelParams p = tiny_model(ModelMode::baseline, 19);
  randomize_biases(p, 190);
  Rng rng(191);
  Tensor s = random_tensor({4}, rng, -1, 1, true);
  auto f = [&] {
    StepResult r = baseline_decoder_step(p, s, 6, encode(p, {5, 2, 6}));
    return testing::weighted_sum(r.state);
  };
  std::vector<Tensor> params{s};
  for (auto& [name, t] : p.named()) {
    if (name.rfind("output.", 0) != 0 && name.rfind("init.", 0) != 0) params.push_back(*t);
  }
  CHECK(finite_difference_error(f, params) < 1e-5);
}

TEST_CASE("full model gradient matches finite differences") {
  for (ModelMode mode : {ModelMode::baseline, ModelMode::isg}) {
    CAPTURE(to_string(mode));
    ModelParams p = tiny_model(mode, 20);
    randomize_biases(p, 200);
    auto f = [&] { return sentence_nll(p, {5, 4, 6}, {4, 6, 2, 5}, {6, 4, 5}).loss; };
    const double err = finite_difference_error(f, p.tensors());
    MESSAGE("max relative error " << err);
    CHECK(err < 1e-4);
    std::vector<Tensor> params = p.tensors();
    GradCheckResult builtin = grad_check(f, params);
    CHECK(builtin.max_relative_error < 1e-4);
    CHECK(builtin.checked > 0);
  }
}

}  // TEST_SUITE
