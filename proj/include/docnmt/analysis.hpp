#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "docnmt/decoding.hpp"
#include "docnmt/model.hpp"

namespace docnmt {

// ---- BLEU ----------------------------------------------------------------

struct BleuResult {
  double score = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

/// Case-insensitive corpus BLEU-4 against a single reference per segment.
/// Without smoothing a zero n-gram precision yields 0. `smooth` applies
/// add-one smoothing to the 2- to 4-gram counts.
BleuResult bleu4(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                 bool smooth = false);

// ---- Attention entropy ---------------------------------------------------

/// Natural-log entropy with 0 log 0 = 0.
double entropy(std::span<const double> distribution);

struct EntropyCurve {
  std::vector<double> values;       // one per target position
  std::vector<std::string> labels;  // target token at that position
};

/// Entropy of the attention over the preceding sentence at each step.
EntropyCurve attention_entropy(const DecoderTrace& trace, const std::vector<std::string>& labels = {});

// ---- Coherence -----------------------------------------------------------

class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  void add(const std::string& token, std::vector<double> vector);
  const std::vector<double>* find(const std::string& token) const;

  /// "count dim" header, then "token v1 ... vdim" per line.
  static WordVectors load(const std::string& path);
  static WordVectors parse(std::istream& in);
  void save(const std::string& path) const;

  bool operator==(const WordVectors& other) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Cosine of the mean word vectors; tokens without a vector are skipped.
/// Throws if either sentence has no known token.
double sentence_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           const WordVectors& vectors);

struct CoherenceResult {
  std::optional<double> mean;  // absent when no adjacent pair could be scored
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // pairs with a sentence that has no known token
};

/// Mean similarity over all adjacent sentence pairs within documents,
/// pooled across the corpus.
CoherenceResult document_coherence(const std::vector<std::vector<std::vector<std::string>>>& documents,
                                   const WordVectors& vectors);

// ---- Ablations -----------------------------------------------------------

enum class AblationMode { none, null_before_x, zero_gate, random_context };

/// Accepts none|null|zgate0|rv (and the enum spellings).
AblationMode parse_ablation(const std::string& text);
std::string to_string(AblationMode mode);

struct AblationOptions {
  AblationMode mode = AblationMode::none;
  std::uint64_t seed = 1;
  bool per_sentence = false;  // random_context: one draw per sentence instead of per step
  std::size_t width = 10;
};

DocumentOptions document_options(const AblationOptions& options);

std::vector<Translation> ablate(const ModelParams& params, const std::vector<Sentence>& document,
                                const AblationOptions& options);

// ---- Reports -------------------------------------------------------------

struct CoherenceRow {
  std::string testset;
  std::string system;
  double value = 0.0;
};

void write_coherence_csv(std::ostream& out, const std::vector<CoherenceRow>& rows);
/// Rows of position,label,value.
void write_entropy_csv(std::ostream& out, const EntropyCurve& curve);

}  // namespace docnmt
