#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "docnmt/beam.hpp"
#include "docnmt/data.hpp"
#include "docnmt/model.hpp"

namespace docnmt {

/// Decoder trace shared between hypotheses as a persistent list.
struct TraceNode {
  TraceStep step;
  std::shared_ptr<const TraceNode> parent;
};

struct DecoderState {
  Tensor state;
  std::shared_ptr<const TraceNode> trace;
};

struct Translation {
  Sentence tokens;  // without the final eos
  double log_prob = 0.0;
  double normalized = 0.0;
  bool finished = false;
  DecoderTrace trace;
};

/// max_out_len = 2 * |x| + 10
std::size_t default_max_output_length(std::size_t source_length);

Translation beam_search(const ModelParams& params, const DecodeInputs& inputs, std::size_t width,
                        std::size_t max_out_len, const StepControl& control = {});

/// Argmax decoding, lowest id on ties.
Translation greedy_decode(const ModelParams& params, const DecodeInputs& inputs, std::size_t max_out_len,
                          const StepControl& control = {});

/// Teacher-forced log-probability of `tokens`, followed by eos when
/// `append_eos` is set.
double score_translation(const ModelParams& params, const Sentence& before_x, const Sentence& x,
                         const Sentence& tokens, bool append_eos = true, const StepControl& control = {});

struct DocumentOptions {
  std::size_t width = 10;
  GateForce gate_force = GateForce::none;
  bool null_before_x = false;
  std::optional<std::uint64_t> random_context_seed;  // replaces c^a with uniform[-1,1] draws
  bool random_context_per_sentence = false;
  std::size_t max_len = kMaxSentenceLength;
};

/// Translates a document sentence by sentence. Sentence i conditions on the
/// source of sentence i-1 (the null sentence for i = 0). Sentences longer
/// than `max_len` are cut to their first `max_len` tokens; empty sentences
/// produce empty translations.
std::vector<Translation> translate_document(const ModelParams& params, const std::vector<Sentence>& document,
                                            const DocumentOptions& options = {});

/// Baseline decoding of before_x followed by x as a single source, keeping
/// the last `max_len` tokens. The first sentence is translated on its own.
std::vector<Translation> concat_baseline_translate(const ModelParams& params, const std::vector<Sentence>& document,
                                                   std::size_t width = 10,
                                                   std::size_t max_len = kMaxSentenceLength);

/// One row per decoding step of a translated sentence.
struct TraceRow {
  std::size_t document = 0;
  std::size_t sentence = 0;
  std::size_t step = 0;
  std::string token;
  double gate_mean = 0.0;  // NaN-free; 0 when the model has no gate
  std::vector<double> alpha_previous;
  std::vector<double> alpha_current;
};

/// Comma-separated trace dump:
///   document,sentence,step,gate_mean,alpha_previous,alpha_current,token
/// where the attention columns are space-separated weights and the token
/// runs to the end of the line.
void write_trace_header(std::ostream& out, std::uint64_t seed);
void write_trace_rows(std::ostream& out, std::size_t document, std::size_t sentence, const Translation& translation,
                      const Vocabulary& target_vocab);
std::vector<TraceRow> read_trace_rows(std::istream& in);

}  // namespace docnmt
