#include "docnmt/decoding.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "docnmt/error.hpp"

namespace docnmt {

namespace {

DecoderTrace unwind(const std::shared_ptr<const TraceNode>& tail) {
  DecoderTrace trace;
  for (const TraceNode* n = tail.get(); n != nullptr; n = n->parent.get()) trace.steps.push_back(n->step);
  std::reverse(trace.steps.begin(), trace.steps.end());
  return trace;
}

Translation finish(const Hypothesis<DecoderState>& h) {
  Translation t;
  t.tokens = h.tokens;
  t.finished = h.finished;
  if (t.finished) t.tokens.pop_back();
  t.log_prob = h.log_prob;
  t.normalized = h.normalized();
  t.trace = unwind(h.state.trace);
  return t;
}

Sentence head(const Sentence& s, std::size_t n) { return s.size() <= n ? s : Sentence(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n)); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(std::stod(tok));
  return out;
}

}  // namespace

std::size_t default_max_output_length(std::size_t source_length) { return 2 * source_length + 10; }

Translation beam_search(const ModelParams& params, const DecodeInputs& inputs, std::size_t width,
                        std::size_t max_out_len, const StepControl& control) {
  NoGradGuard no_grad;
  DecoderState initial{decoder_init(params, inputs.current), nullptr};
  BeamConfig config;
  config.width = width;
  config.max_len = max_out_len;
  auto expand = [&](const DecoderState& s, TokenId prev, std::size_t step) {
    StepOutput out = decode_step(params, inputs, s.state, prev, control, step);
    std::vector<double> log_probs(out.probs.size());
    for (std::size_t v = 0; v < log_probs.size(); ++v) log_probs[v] = std::log(out.probs[v]);
    auto node = std::make_shared<TraceNode>(TraceNode{record_step(out), s.trace});
    return std::make_pair(DecoderState{out.step.state, std::move(node)}, std::move(log_probs));
  };
  auto pool = docnmt::beam_search(std::move(initial), config, expand);
  return finish(pool.front());
}

Translation greedy_decode(const ModelParams& params, const DecodeInputs& inputs, std::size_t max_out_len,
                          const StepControl& control) {
  NoGradGuard no_grad;
  Translation t;
  Tensor state = decoder_init(params, inputs.current);
  TokenId prev = kBosId;
  std::size_t emitted = 0;
  for (std::size_t step = 0; step < max_out_len; ++step) {
    StepOutput out = decode_step(params, inputs, state, prev, control, step);
    auto probs = out.probs.values();
    const auto best = static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    t.log_prob += std::log(probs[best]);
    t.trace.steps.push_back(record_step(out));
    ++emitted;
    if (best == kEosId) {
      t.finished = true;
      break;
    }
    t.tokens.push_back(best);
    state = out.step.state;
    prev = best;
  }
  t.normalized = t.log_prob / static_cast<double>(emitted);
  return t;
}

double score_translation(const ModelParams& params, const Sentence& before_x, const Sentence& x,
                         const Sentence& tokens, bool append_eos, const StepControl& control) {
  NoGradGuard no_grad;
  const DecodeInputs inputs = encode_inputs(params, before_x, x);
  Tensor state = decoder_init(params, inputs.current);
  TokenId prev = kBosId;
  double total = 0.0;
  const std::size_t steps = tokens.size() + (append_eos ? 1 : 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const TokenId target = t < tokens.size() ? tokens[t] : kEosId;
    StepOutput out = decode_step(params, inputs, state, prev, control, t);
    total += std::log(out.probs[target]);
    state = out.step.state;
    prev = target;
  }
  return total;
}

std::vector<Translation> translate_document(const ModelParams& params, const std::vector<Sentence>& document,
                                            const DocumentOptions& options) {
  if (document.empty()) throw std::invalid_argument("translate_document: empty document");
  std::vector<Translation> out;
  out.reserve(document.size());
  for (std::size_t i = 0; i < document.size(); ++i) {
    const Sentence x = head(document[i], options.max_len);
    if (x.empty()) {
      out.emplace_back();
      continue;
    }
    Sentence before = null_sentence();
    if (!options.null_before_x && i > 0 && !document[i - 1].empty()) before = head(document[i - 1], options.max_len);

    StepControl control;
    control.gate_force = options.gate_force;
    std::optional<RandomContext> random;
    if (options.random_context_seed && params.mode == ModelMode::isg) {
      random.emplace(Rng(*options.random_context_seed).split(i), params.dims.annotation(),
                     options.random_context_per_sentence);
      control.random_context = &*random;
    }
    const DecodeInputs inputs = encode_inputs(params, before, x, options.max_len);
    out.push_back(beam_search(params, inputs, options.width, default_max_output_length(x.size()), control));
  }
  return out;
}

std::vector<Translation> concat_baseline_translate(const ModelParams& params, const std::vector<Sentence>& document,
                                                   std::size_t width, std::size_t max_len) {
  if (params.mode != ModelMode::baseline) {
    throw std::invalid_argument("concat_baseline_translate: requires a baseline model");
  }
  if (document.empty()) throw std::invalid_argument("concat_baseline_translate: empty document");
  std::vector<Translation> out;
  for (std::size_t i = 0; i < document.size(); ++i) {
    if (document[i].empty()) {
      out.emplace_back();
      continue;
    }
    Sentence source = document[i];
    if (i > 0) {
      source = document[i - 1];
      source.insert(source.end(), document[i].begin(), document[i].end());
    }
    if (source.size() > max_len) source.erase(source.begin(), source.end() - static_cast<std::ptrdiff_t>(max_len));
    const DecodeInputs inputs = encode_inputs(params, {}, source, max_len);
    out.push_back(beam_search(params, inputs, width, default_max_output_length(source.size())));
  }
  return out;
}

void write_trace_header(std::ostream& out, std::uint64_t seed) {
  out << "# docnmt trace v1 seed=" << seed << '\n';
  out << "document,sentence,step,gate_mean,alpha_previous,alpha_current,token\n";
}

void write_trace_rows(std::ostream& out, std::size_t document, std::size_t sentence, const Translation& translation,
                      const Vocabulary& target_vocab) {
  for (std::size_t t = 0; t < translation.trace.steps.size(); ++t) {
    const TraceStep& s = translation.trace.steps[t];
    double gate_mean = 0.0;
    if (!s.gate.empty()) {
      for (double z : s.gate) gate_mean += z;
      gate_mean /= static_cast<double>(s.gate.size());
    }
    const TokenId id = t < translation.tokens.size() ? translation.tokens[t] : kEosId;
    out << document << ',' << sentence << ',' << t << ',' << format_double(gate_mean) << ','
        << join_doubles(s.alpha_previous) << ',' << join_doubles(s.alpha_current) << ',' << target_vocab.token(id)
        << '\n';
  }
}

std::vector<TraceRow> read_trace_rows(std::istream& in) {
  std::vector<TraceRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line.rfind("document,", 0) == 0) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (int k = 0; k < 6; ++k) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) throw FormatError("trace line " + std::to_string(lineno) + ": too few fields");
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    fields.push_back(line.substr(start));
    try {
      TraceRow r;
      r.document = std::stoul(fields[0]);
      r.sentence = std::stoul(fields[1]);
      r.step = std::stoul(fields[2]);
      r.gate_mean = std::stod(fields[3]);
      r.alpha_previous = parse_doubles(fields[4]);
      r.alpha_current = parse_doubles(fields[5]);
      r.token = fields[6];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("trace line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

}  // namespace docnmt
