#include "docnmt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace docnmt {

namespace {

// FNV-1a; keys each parameter's initialization stream by name.
std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor uniform_matrix(const std::string& name, std::size_t rows, std::size_t cols, const Rng& root) {
  Rng rng = root.split(name_hash(name));
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(values), true);
}

Tensor zero_vector(std::size_t n) { return Tensor::zeros({n}, true); }

GruParams make_gru(const std::string& prefix, std::size_t input, std::size_t hidden, const Rng& rng) {
  GruParams g;
  g.input_gates = uniform_matrix(prefix + ".input_gates", 2 * hidden, input, rng);
  g.state_gates = uniform_matrix(prefix + ".state_gates", 2 * hidden, hidden, rng);
  g.gate_bias = zero_vector(2 * hidden);
  g.input_candidate = uniform_matrix(prefix + ".input_candidate", hidden, input, rng);
  g.state_candidate = uniform_matrix(prefix + ".state_candidate", hidden, hidden, rng);
  g.candidate_bias = zero_vector(hidden);
  return g;
}

template <class Params, class Fn>
void visit_gru(Params& g, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".input_gates", g.input_gates);
  fn(prefix + ".state_gates", g.state_gates);
  fn(prefix + ".gate_bias", g.gate_bias);
  fn(prefix + ".input_candidate", g.input_candidate);
  fn(prefix + ".state_candidate", g.state_candidate);
  fn(prefix + ".candidate_bias", g.candidate_bias);
}

template <class Params, class Fn>
void visit_params(Params& p, Fn&& fn) {
  fn("src_embedding", p.src_embedding);
  fn("tgt_embedding", p.tgt_embedding);
  visit_gru(p.encoder_forward, "encoder.forward", fn);
  visit_gru(p.encoder_backward, "encoder.backward", fn);
  fn("init.weight", p.init_weight);
  fn("init.bias", p.init_bias);
  visit_gru(p.feedback, "feedback", fn);
  visit_gru(p.decoder, "decoder", fn);
  fn("attention.query", p.attention.query);
  fn("attention.annotation", p.attention.annotation);
  fn("attention.score", p.attention.score);
  fn("context.current", p.context_current);
  fn("context.previous", p.context_previous);
  fn("gate.state", p.gate_state);
  fn("gate.word", p.gate_word);
  fn("gate.current", p.gate_current);
  fn("gate.previous", p.gate_previous);
  fn("output.weight", p.output_weight);
  fn("output.bias", p.output_bias);
}

void require_isg(const ModelParams& params, const char* op) {
  if (params.mode != ModelMode::isg) {
    throw StateError(std::string(op) + ": requires a model in isg mode");
  }
}

}  // namespace

std::string to_string(ModelMode mode) { return mode == ModelMode::isg ? "isg" : "baseline"; }

ModelMode parse_model_mode(const std::string& text) {
  if (text == "baseline") return ModelMode::baseline;
  if (text == "isg") return ModelMode::isg;
  throw std::invalid_argument("unknown model mode '" + text + "' (expected baseline or isg)");
}

ModelParams ModelParams::initialize(ModelMode mode, const ModelDims& dims, Rng& rng) {
  if (dims.src_vocab == 0 || dims.tgt_vocab == 0 || dims.embedding == 0 || dims.hidden == 0 ||
      dims.attention == 0) {
    throw DimensionError("ModelParams::initialize: all dimensions must be positive");
  }
  const std::size_t e = dims.embedding, h = dims.hidden, a = dims.attention, ann = dims.annotation();
  ModelParams p;
  p.mode = mode;
  p.dims = dims;
  p.src_embedding = uniform_matrix("src_embedding", dims.src_vocab, e, rng);
  p.tgt_embedding = uniform_matrix("tgt_embedding", dims.tgt_vocab, e, rng);
  p.encoder_forward = make_gru("encoder.forward", e, h, rng);
  p.encoder_backward = make_gru("encoder.backward", e, h, rng);
  p.init_weight = uniform_matrix("init.weight", h, h, rng);
  p.init_bias = zero_vector(h);
  p.feedback = make_gru("feedback", e, h, rng);
  p.decoder = make_gru("decoder", e + h, h, rng);
  p.attention.query = uniform_matrix("attention.query", a, h, rng);
  p.attention.annotation = uniform_matrix("attention.annotation", ann, a, rng);
  {
    Tensor row = uniform_matrix("attention.score", 1, a, rng);
    p.attention.score = Tensor::from({a}, std::vector<double>(row.values().begin(), row.values().end()), true);
  }
  p.context_current = uniform_matrix("context.current", h, ann, rng);
  if (mode == ModelMode::isg) {
    p.context_previous = uniform_matrix("context.previous", h, ann, rng);
    p.gate_state = uniform_matrix("gate.state", h, h, rng);
    p.gate_word = uniform_matrix("gate.word", h, e, rng);
    p.gate_current = uniform_matrix("gate.current", h, ann, rng);
    p.gate_previous = uniform_matrix("gate.previous", h, ann, rng);
  }
  p.output_weight = uniform_matrix("output.weight", dims.tgt_vocab, dims.readout(), rng);
  p.output_bias = zero_vector(dims.tgt_vocab);
  return p;
}

std::map<std::string, Tensor*> ModelParams::named() {
  std::map<std::string, Tensor*> out;
  visit_params(*this, [&](const std::string& name, Tensor& t) {
    if (t.defined()) out.emplace(name, &t);
  });
  return out;
}

std::map<std::string, const Tensor*> ModelParams::named() const {
  std::map<std::string, const Tensor*> out;
  visit_params(*this, [&](const std::string& name, const Tensor& t) {
    if (t.defined()) out.emplace(name, &t);
  });
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named()) out.push_back(*t);
  return out;
}

const std::vector<std::string>& ModelParams::gate_parameter_names() {
  static const std::vector<std::string> names{"context.previous", "gate.current", "gate.previous", "gate.state",
                                              "gate.word"};
  return names;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  visit_params(copy, [](const std::string&, Tensor& t) {
    if (t.defined()) t = t.clone(true);
  });
  return copy;
}

const Tensor& RandomContext::at_step(std::size_t step) {
  const std::size_t index = per_sentence_ ? 0 : step;
  while (drawn_.size() <= index) {
    std::vector<double> values(width_);
    for (double& v : values) v = rng_.uniform(-1.0, 1.0);
    drawn_.push_back(Tensor::vector(std::move(values)));
  }
  return drawn_[index];
}

Tensor gru_step(const GruParams& params, const Tensor& input, const Tensor& state) {
  const std::size_t h = params.hidden_dim();
  if (input.rank() != 1 || input.size() != params.input_dim()) {
    throw DimensionError("gru_step: input " + shape_to_string(input.shape()) + ", expected [" +
                         std::to_string(params.input_dim()) + "]");
  }
  if (state.rank() != 1 || state.size() != h) {
    throw DimensionError("gru_step: state " + shape_to_string(state.shape()) + ", expected [" + std::to_string(h) +
                         "]");
  }
  Tensor gates = sigmoid(add(add(matvec(params.input_gates, input), matvec(params.state_gates, state)),
                             params.gate_bias));
  Tensor update = slice(gates, 0, h);
  Tensor reset = slice(gates, h, h);
  Tensor candidate = tanh(add(add(matvec(params.input_candidate, input),
                                  matvec(params.state_candidate, mul(reset, state))),
                              params.candidate_bias));
  return add(mul(one_minus(update), state), mul(update, candidate));
}

EncodedSentence encode(const ModelParams& params, const Sentence& ids, std::size_t max_len) {
  if (ids.empty()) throw std::invalid_argument("encode: empty sentence");
  if (ids.size() > max_len) {
    throw std::invalid_argument("encode: sentence of " + std::to_string(ids.size()) +
                                " tokens exceeds the limit of " + std::to_string(max_len));
  }
  const std::size_t n = ids.size(), h = params.dims.hidden;
  std::vector<Tensor> forward(n), backward(n);
  Tensor state = Tensor::zeros({h});
  for (std::size_t j = 0; j < n; ++j) {
    state = gru_step(params.encoder_forward, embed(params.src_embedding, ids[j]), state);
    forward[j] = state;
  }
  state = Tensor::zeros({h});
  for (std::size_t j = n; j-- > 0;) {
    state = gru_step(params.encoder_backward, embed(params.src_embedding, ids[j]), state);
    backward[j] = state;
  }
  std::vector<Tensor> rows(n);
  for (std::size_t j = 0; j < n; ++j) rows[j] = concat(forward[j], backward[j]);
  EncodedSentence enc;
  enc.annotations = stack_rows(rows);
  enc.keys = matmul(enc.annotations, params.attention.annotation);
  enc.backward_first = backward[0];
  enc.length = n;
  return enc;
}

Attention attend(const AttentionParams& params, const Tensor& query, const EncodedSentence& enc) {
  Tensor projected = matvec(params.query, query);
  Tensor hidden = tanh(add_rows(enc.keys, projected));
  Tensor weights = softmax(matvec(hidden, params.score));
  return {vecmat(weights, enc.annotations), weights};
}

Tensor feedback_state(const ModelParams& params, const Tensor& state, TokenId prev) {
  return gru_step(params.feedback, embed(params.tgt_embedding, prev), state);
}

Tensor decoder_init(const ModelParams& params, const EncodedSentence& current) {
  return tanh(add(matvec(params.init_weight, current.backward_first), params.init_bias));
}

Tensor gate(const ModelParams& params, const Tensor& state, TokenId prev, const Tensor& context_current,
            const Tensor& context_previous) {
  require_isg(params, "gate");
  Tensor pre = add(add(matvec(params.gate_state, state), matvec(params.gate_word, embed(params.tgt_embedding, prev))),
                   add(matvec(params.gate_current, context_current), matvec(params.gate_previous, context_previous)));
  return sigmoid(pre);
}

StepResult isg_decoder_step(const ModelParams& params, const Tensor& state, TokenId prev,
                            const EncodedSentence& previous, const EncodedSentence& current,
                            const StepControl& control, std::size_t step_index) {
  require_isg(params, "isg_decoder_step");
  StepResult r;
  r.query = feedback_state(params, state, prev);
  Attention att_prev = attend(params.attention, r.query, previous);
  Attention att_cur = attend(params.attention, r.query, current);
  r.alpha_previous = att_prev.weights;
  r.alpha_current = att_cur.weights;
  r.context_current = att_cur.context;
  r.context_previous = control.random_context ? control.random_context->at_step(step_index) : att_prev.context;

  switch (control.gate_force) {
    case GateForce::none:
      // The gate reads s_{t-1}, while attention reads s~.
      r.gate = gate(params, state, prev, r.context_current, r.context_previous);
      break;
    case GateForce::zero:
      r.gate = Tensor::filled({params.dims.hidden}, 0.0);
      break;
    case GateForce::one:
      r.gate = Tensor::filled({params.dims.hidden}, 1.0);
      break;
  }
  Tensor fused = add(mul(matvec(params.context_previous, r.context_previous), r.gate),
                     mul(matvec(params.context_current, r.context_current), one_minus(r.gate)));
  Tensor input = concat(embed(params.tgt_embedding, prev), fused);
  r.state = gru_step(params.decoder, input, r.query);
  return r;
}

StepResult baseline_decoder_step(const ModelParams& params, const Tensor& state, TokenId prev,
                                 const EncodedSentence& current) {
  StepResult r;
  r.query = feedback_state(params, state, prev);
  Attention att = attend(params.attention, r.query, current);
  r.alpha_current = att.weights;
  r.context_current = att.context;
  Tensor input = concat(embed(params.tgt_embedding, prev), matvec(params.context_current, att.context));
  r.state = gru_step(params.decoder, input, r.query);
  return r;
}

Tensor output_probs(const ModelParams& params, const Tensor& state, TokenId prev, const Tensor& context_current,
                    const Dropout* dropout) {
  Tensor readout = concat(concat(state, embed(params.tgt_embedding, prev)), context_current);
  if (dropout != nullptr && dropout->rate > 0.0) {
    if (dropout->rng == nullptr) throw std::invalid_argument("output_probs: dropout requires a generator");
    const double keep = 1.0 - dropout->rate;
    std::vector<double> mask(readout.size());
    for (double& m : mask) m = dropout->rng->uniform() < keep ? 1.0 / keep : 0.0;
    readout = mul(readout, Tensor::vector(std::move(mask)));
  }
  return softmax(add(matvec(params.output_weight, readout), params.output_bias));
}

DecodeInputs encode_inputs(const ModelParams& params, const Sentence& before_x, const Sentence& x,
                           std::size_t max_len) {
  DecodeInputs inputs;
  inputs.current = encode(params, x, max_len);
  if (params.mode == ModelMode::isg) inputs.previous = encode(params, before_x, max_len);
  return inputs;
}

StepOutput decode_step(const ModelParams& params, const DecodeInputs& inputs, const Tensor& state, TokenId prev,
                       const StepControl& control, std::size_t step_index, const Dropout* dropout) {
  StepOutput out;
  if (params.mode == ModelMode::isg) {
    out.step = isg_decoder_step(params, state, prev, inputs.previous, inputs.current, control, step_index);
  } else {
    out.step = baseline_decoder_step(params, state, prev, inputs.current);
  }
  out.probs = output_probs(params, out.step.state, prev, out.step.context_current, dropout);
  return out;
}

TraceStep record_step(const StepOutput& out) {
  auto copy = [](const Tensor& t) {
    return t.defined() ? std::vector<double>(t.values().begin(), t.values().end()) : std::vector<double>{};
  };
  TraceStep s;
  s.state = copy(out.step.state);
  s.query = copy(out.step.query);
  s.context_previous = copy(out.step.context_previous);
  s.context_current = copy(out.step.context_current);
  s.gate = copy(out.step.gate);
  s.alpha_previous = copy(out.step.alpha_previous);
  s.alpha_current = copy(out.step.alpha_current);
  s.distribution = copy(out.probs);
  return s;
}

NllResult sentence_nll(const ModelParams& params, const Sentence& before_x, const Sentence& x, const Sentence& y,
                       const NllOptions& options) {
  if (options.train && options.dropout_rate > 0.0 && options.dropout_rng == nullptr) {
    throw std::invalid_argument("sentence_nll: training mode needs a dropout generator");
  }
  for (TokenId id : y) {
    if (id >= params.dims.tgt_vocab) {
      throw std::out_of_range("sentence_nll: target id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const DecodeInputs inputs = encode_inputs(params, before_x, x, options.max_len);
  Dropout dropout{options.dropout_rate, options.dropout_rng};
  const Dropout* dropout_ptr = options.train ? &dropout : nullptr;

  NllResult result;
  Tensor state = decoder_init(params, inputs.current);
  TokenId prev = kBosId;
  Tensor total;
  for (std::size_t t = 0; t <= y.size(); ++t) {
    const TokenId target = t < y.size() ? y[t] : kEosId;
    StepOutput out = decode_step(params, inputs, state, prev, options.control, t, dropout_ptr);
    Tensor loss = cross_entropy(out.probs, target);
    total = total.defined() ? add(total, loss) : loss;
    if (options.keep_trace) result.trace.steps.push_back(record_step(out));
    state = out.step.state;
    prev = target;
  }
  result.loss = total;
  return result;
}

NllResult sentence_nll(const ModelParams& params, const SentenceTuple& tuple, const NllOptions& options) {
  return sentence_nll(params, tuple.before_x, tuple.x, tuple.y, options);
}

}  // namespace docnmt
