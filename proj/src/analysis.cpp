#include "docnmt/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "docnmt/data.hpp"
#include "docnmt/error.hpp"

namespace docnmt {

namespace {

std::vector<std::string> lower_tokens(const std::string& line) {
  std::vector<std::string> out = split_tokens(line);
  for (auto& tok : out) {
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                      toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

BleuResult bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                 bool smooth) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu4: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                                std::to_string(references.size()) + " references");
  }
  std::array<std::size_t, 4> matches{}, totals{};
  BleuResult result;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = lower_tokens(hypotheses[s]);
    const auto ref = lower_tokens(references[s]);
    result.hypothesis_length += hyp.size();
    result.reference_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngram_counts(hyp, n);
      const auto r = ngram_counts(ref, n);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
        totals[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = static_cast<double>(matches[n]);
    double t = static_cast<double>(totals[n]);
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    result.precisions[n] = t > 0 ? m / t : 0.0;
    if (result.precisions[n] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(result.precisions[n]);
    }
  }
  const double c = static_cast<double>(result.hypothesis_length);
  const double r = static_cast<double>(result.reference_length);
  if (c == 0.0) {
    result.brevity_penalty = 0.0;
  } else {
    result.brevity_penalty = c < r ? std::exp(1.0 - r / c) : 1.0;
  }
  result.score = zero ? 0.0 : 100.0 * result.brevity_penalty * std::exp(log_sum / 4.0);
  return result;
}

double entropy(std::span<const double> distribution) {
  if (distribution.empty()) throw std::invalid_argument("entropy of an empty distribution");
  double total = 0.0;
  for (double p : distribution) {
    if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("entropy: probabilities must be finite and >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

EntropyCurve attention_entropy(const DecoderTrace& trace, const std::vector<std::string>& labels) {
  EntropyCurve curve;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    curve.values.push_back(entropy(trace.steps[t].alpha_previous));
    curve.labels.push_back(t < labels.size() ? labels[t] : std::string(kEosToken));
  }
  return curve;
}

void WordVectors::add(const std::string& token, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw DimensionError("word vector for '" + token + "' has " + std::to_string(vector.size()) +
                         " components, expected " + std::to_string(dim_));
  }
  for (double v : vector) {
    if (!std::isfinite(v)) throw FormatError("word vector for '" + token + "' is not finite");
  }
  if (!vectors_.count(token)) order_.push_back(token);
  vectors_[token] = std::move(vector);
}

const std::vector<double>* WordVectors::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

WordVectors WordVectors::parse(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("word vectors: missing header");
  std::istringstream header(line);
  std::size_t count = 0, dim = 0;
  if (!(header >> count >> dim) || dim == 0) throw FormatError("word vectors: header must be 'count dim'");
  WordVectors vecs(dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    std::vector<double> v;
    std::string field;
    while (row >> field) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::logic_error&) {
        throw FormatError("word vectors line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (v.size() != dim) {
      throw FormatError("word vectors line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(v.size()));
    }
    vecs.add(token, std::move(v));
  }
  if (vecs.size() != count) {
    throw FormatError("word vectors: header announces " + std::to_string(count) + " entries, found " +
                      std::to_string(vecs.size()));
  }
  return vecs;
}

WordVectors WordVectors::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word vectors '" + path + "'");
  return parse(in);
}

void WordVectors::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << order_.size() << ' ' << dim_ << '\n';
  for (const auto& tok : order_) {
    out << tok;
    for (double v : vectors_.at(tok)) out << ' ' << format_double(v);
    out << '\n';
  }
}

bool WordVectors::operator==(const WordVectors& other) const {
  return dim_ == other.dim_ && order_ == other.order_ && vectors_ == other.vectors_;
}

double sentence_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const WordVectors& vectors) {
  auto mean = [&](const std::vector<std::string>& toks) {
    std::vector<double> m(vectors.dim(), 0.0);
    std::size_t n = 0;
    for (const auto& t : toks) {
      const auto* v = vectors.find(t);
      if (v == nullptr) continue;
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += (*v)[i];
      ++n;
    }
    if (n == 0) throw std::invalid_argument("sentence_similarity: sentence has no token with a vector");
    for (double& x : m) x /= static_cast<double>(n);
    return m;
  };
  const auto ma = mean(a);
  const auto mb = mean(b);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    dot += ma[i] * mb[i];
    na += ma[i] * ma[i];
    nb += mb[i] * mb[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("sentence_similarity: zero mean vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

CoherenceResult document_coherence(const std::vector<std::vector<std::vector<std::string>>>& documents,
                                   const WordVectors& vectors) {
  CoherenceResult result;
  double total = 0.0;
  for (const auto& doc : documents) {
    for (std::size_t i = 1; i < doc.size(); ++i) {
      try {
        total += sentence_similarity(doc[i - 1], doc[i], vectors);
        ++result.pairs;
      } catch (const std::invalid_argument&) {
        ++result.skipped;
      }
    }
  }
  if (result.pairs > 0) result.mean = total / static_cast<double>(result.pairs);
  return result;
}

AblationMode parse_ablation(const std::string& text) {
  if (text.empty() || text == "none") return AblationMode::none;
  if (text == "null" || text == "null_before_x") return AblationMode::null_before_x;
  if (text == "zgate0" || text == "zero_gate") return AblationMode::zero_gate;
  if (text == "rv" || text == "random_context") return AblationMode::random_context;
  throw std::invalid_argument("unknown ablation '" + text + "' (expected none, null, zgate0 or rv)");
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::none:
      return "none";
    case AblationMode::null_before_x:
      return "null";
    case AblationMode::zero_gate:
      return "zgate0";
    case AblationMode::random_context:
      return "rv";
  }
  return "none";
}

DocumentOptions document_options(const AblationOptions& options) {
  DocumentOptions doc;
  doc.width = options.width;
  switch (options.mode) {
    case AblationMode::none:
      break;
    case AblationMode::null_before_x:
      doc.null_before_x = true;
      break;
    case AblationMode::zero_gate:
      doc.gate_force = GateForce::zero;
      break;
    case AblationMode::random_context:
      doc.random_context_seed = options.seed;
      doc.random_context_per_sentence = options.per_sentence;
      break;
  }
  return doc;
}

std::vector<Translation> ablate(const ModelParams& params, const std::vector<Sentence>& document,
                                const AblationOptions& options) {
  if (options.mode != AblationMode::none && options.mode != AblationMode::null_before_x &&
      params.mode != ModelMode::isg) {
    throw std::invalid_argument("ablate: " + to_string(options.mode) + " needs a gated model");
  }
  return translate_document(params, document, document_options(options));
}

void write_coherence_csv(std::ostream& out, const std::vector<CoherenceRow>& rows) {
  out << "testset,system,value\n";
  for (const auto& r : rows) out << r.testset << ',' << r.system << ',' << format_double(r.value) << '\n';
}

void write_entropy_csv(std::ostream& out, const EntropyCurve& curve) {
  out << "position,label,value\n";
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    out << i + 1 << ',' << curve.labels[i] << ',' << format_double(curve.values[i]) << '\n';
  }
}

}  // namespace docnmt
