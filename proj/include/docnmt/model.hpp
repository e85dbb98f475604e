#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docnmt/rng.hpp"
#include "docnmt/tensor.hpp"
#include "docnmt/tokens.hpp"

namespace docnmt {

enum class ModelMode { baseline, isg };

std::string to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& text);

struct ModelDims {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embedding = 0;
  std::size_t hidden = 0;
  std::size_t attention = 0;  // width of the alignment network's hidden layer

  std::size_t annotation() const { return 2 * hidden; }
  /// Width of the output layer's input: [s_t ; embed(y_prev) ; c_b].
  std::size_t readout() const { return hidden + embedding + annotation(); }

  bool operator==(const ModelDims&) const = default;
};

/// Update gate u, reset gate r, candidate h~.
/// Gate matrices stack u over r: rows [0, h) are u, rows [h, 2h) are r.
struct GruParams {
  Tensor input_gates;      // [2h x in]
  Tensor state_gates;      // [2h x h]
  Tensor gate_bias;        // [2h]
  Tensor input_candidate;  // [h x in]
  Tensor state_candidate;  // [h x h]
  Tensor candidate_bias;   // [h]

  std::size_t input_dim() const { return input_candidate.shape()[1]; }
  std::size_t hidden_dim() const { return input_candidate.shape()[0]; }
};

/// Single-hidden-layer alignment network a(q, h_j) = v . tanh(W_q q + W_h h_j).
struct AttentionParams {
  Tensor query;       // [a x h]
  Tensor annotation;  // [2h x a], applied as H . W to all rows at once
  Tensor score;       // [a]
};

/// All learned weights. Gate-related members are undefined in baseline mode.
struct ModelParams {
  ModelMode mode = ModelMode::baseline;
  ModelDims dims;

  Tensor src_embedding;  // [V_src x d_emb]
  Tensor tgt_embedding;  // [V_tgt x d_emb]
  GruParams encoder_forward;
  GruParams encoder_backward;
  Tensor init_weight;  // [h x h], applied to the backward encoder's first state
  Tensor init_bias;    // [h]
  GruParams feedback;  // produces the attention query s~
  GruParams decoder;   // input [embed(y_prev) ; fused context]
  AttentionParams attention;
  Tensor context_current;  // [h x 2h]; the baseline's context projection, C2 in gated mode

  // Inter-sentence gate (gated mode only).
  Tensor context_previous;  // C1 [h x 2h]
  Tensor gate_state;        // U_z [h x h]
  Tensor gate_word;         // W_z [h x d_emb]
  Tensor gate_current;      // C_b [h x 2h]
  Tensor gate_previous;     // C_a [h x 2h]

  Tensor output_weight;  // [V_tgt x readout]
  Tensor output_bias;    // [V_tgt]

  /// Fresh parameters: matrices uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
  static ModelParams initialize(ModelMode mode, const ModelDims& dims, Rng& rng);

  /// Named view of every defined parameter, sorted by name.
  std::map<std::string, Tensor*> named();
  std::map<std::string, const Tensor*> named() const;
  std::vector<Tensor> tensors() const;

  /// Names of parameters that only exist in gated mode.
  static const std::vector<std::string>& gate_parameter_names();

  void zero_grad();
  /// Deep copy (fresh storage, still tracked).
  ModelParams clone() const;
};

/// Annotations h_j = [fwd_j ; bwd_j] for one source sentence.
struct EncodedSentence {
  Tensor annotations;     // [T x 2h]
  Tensor keys;            // [T x a], annotations projected by the attention network
  Tensor backward_first;  // backward encoder state at position 1
  std::size_t length = 0;
};

/// Forcing applied to the inter-sentence gate (ablations and algebra checks).
enum class GateForce { none, zero, one };

/// Supplies replacement contexts for c^a, one per decoding step.
class RandomContext {
 public:
  RandomContext(Rng rng, std::size_t width, bool per_sentence = false)
      : rng_(rng), width_(width), per_sentence_(per_sentence) {}

  /// Uniform[-1, 1] vector for `step`; draws are made lazily in step order so
  /// the same step always gets the same vector.
  const Tensor& at_step(std::size_t step);

 private:
  Rng rng_;
  std::size_t width_;
  bool per_sentence_;
  std::vector<Tensor> drawn_;
};

struct Dropout {
  double rate = 0.5;
  Rng* rng = nullptr;
};

struct StepControl {
  GateForce gate_force = GateForce::none;
  RandomContext* random_context = nullptr;  // replaces c^a when set
};

/// Per-step record of the decoder's internals.
struct TraceStep {
  std::vector<double> state;
  std::vector<double> query;  // s~
  std::vector<double> context_previous;
  std::vector<double> context_current;
  std::vector<double> gate;  // empty in baseline mode
  std::vector<double> alpha_previous;
  std::vector<double> alpha_current;
  std::vector<double> distribution;
};

struct DecoderTrace {
  std::vector<TraceStep> steps;
  std::size_t size() const { return steps.size(); }
};

struct StepResult {
  Tensor state;
  Tensor query;
  Tensor context_previous;  // undefined in baseline mode
  Tensor context_current;
  Tensor gate;  // undefined in baseline mode
  Tensor alpha_previous;
  Tensor alpha_current;
};

Tensor gru_step(const GruParams& params, const Tensor& input, const Tensor& state);

/// Bidirectional encoding; rejects empty input and sentences longer than `max_len`.
EncodedSentence encode(const ModelParams& params, const Sentence& ids, std::size_t max_len = kMaxSentenceLength);

struct Attention {
  Tensor context;
  Tensor weights;
};
Attention attend(const AttentionParams& params, const Tensor& query, const EncodedSentence& enc);

Tensor feedback_state(const ModelParams& params, const Tensor& state, TokenId prev);
Tensor decoder_init(const ModelParams& params, const EncodedSentence& current);
Tensor gate(const ModelParams& params, const Tensor& state, TokenId prev, const Tensor& context_current,
            const Tensor& context_previous);

StepResult isg_decoder_step(const ModelParams& params, const Tensor& state, TokenId prev,
                            const EncodedSentence& previous, const EncodedSentence& current,
                            const StepControl& control = {}, std::size_t step_index = 0);
StepResult baseline_decoder_step(const ModelParams& params, const Tensor& state, TokenId prev,
                                 const EncodedSentence& current);

/// Distribution over the target vocabulary from [s_t ; embed(y_prev) ; c_b].
/// `dropout` (training only) masks the readout with inverted scaling.
Tensor output_probs(const ModelParams& params, const Tensor& state, TokenId prev, const Tensor& context_current,
                    const Dropout* dropout = nullptr);

/// Encoded inputs for decoding one sentence. `previous` is unused in baseline mode.
struct DecodeInputs {
  EncodedSentence previous;
  EncodedSentence current;
};

DecodeInputs encode_inputs(const ModelParams& params, const Sentence& before_x, const Sentence& x,
                           std::size_t max_len = kMaxSentenceLength);

struct StepOutput {
  StepResult step;
  Tensor probs;
};

/// One decoder step in the params' mode followed by the output layer.
StepOutput decode_step(const ModelParams& params, const DecodeInputs& inputs, const Tensor& state, TokenId prev,
                       const StepControl& control, std::size_t step_index, const Dropout* dropout = nullptr);

TraceStep record_step(const StepOutput& out);

struct NllOptions {
  bool train = false;
  double dropout_rate = 0.5;
  Rng* dropout_rng = nullptr;  // required when train is set
  StepControl control;
  bool keep_trace = true;
  std::size_t max_len = kMaxSentenceLength;
};

struct NllResult {
  Tensor loss;
  DecoderTrace trace;
};

/// Teacher-forced sum of per-token cross-entropy over `y` followed by eos.
NllResult sentence_nll(const ModelParams& params, const Sentence& before_x, const Sentence& x, const Sentence& y,
                       const NllOptions& options = {});
NllResult sentence_nll(const ModelParams& params, const SentenceTuple& tuple, const NllOptions& options = {});

}  // namespace docnmt
