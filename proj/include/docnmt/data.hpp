#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "docnmt/tokens.hpp"

namespace docnmt {

/// Line consisting solely of this marker separates documents in corpus files.
inline constexpr const char* kDocMarker = "<DOC>";
inline constexpr std::size_t kDefaultVocabCap = 30000;

std::vector<std::string> split_tokens(const std::string& line);
std::string join_tokens(const std::vector<std::string>& tokens);

/// Bidirectional token/id map. Ids 0..3 are pad, eos, unk and bos.
class Vocabulary {
 public:
  Vocabulary();

  /// Rebuilds from tokens listed in id order; the first four must be the
  /// reserved surface forms.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) != 0; }
  /// Unknown tokens map to the unk id.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  Sentence encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const Sentence& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Aligned sentences of one document; sentences are whitespace-tokenized lines.
struct Document {
  std::size_t index = 0;
  std::vector<std::string> source;
  std::vector<std::string> target;
};

/// Splits a marker-delimited stream into documents (sentences as raw lines).
std::vector<std::vector<std::string>> read_documents(std::istream& in);
std::vector<std::vector<std::string>> read_documents(const std::string& path);
void write_documents(std::ostream& out, const std::vector<std::vector<std::string>>& docs);

std::vector<Document> align_documents(const std::vector<std::vector<std::string>>& source,
                                      const std::vector<std::vector<std::string>>& target);
std::vector<Document> load_corpus(const std::string& source_path, const std::string& target_path);

enum class Side { source, target };

std::map<std::string, std::size_t> count_tokens(const std::vector<Document>& docs, Side side);

/// Most frequent `cap` tokens, ties broken lexicographically.
Vocabulary build_vocab(const std::vector<Document>& docs, Side side, std::size_t cap = kDefaultVocabCap);

struct ExtractionConfig {
  std::size_t max_len = kMaxSentenceLength;
  /// Tuples whose |x| and |before_x| differ by more than this factor are
  /// dropped (not applied when before_x is the null sentence).
  double max_length_ratio = 3.0;
};

struct ExtractionReport {
  std::size_t documents = 0;
  std::size_t pairs = 0;
  std::size_t kept = 0;
  std::size_t dropped_empty = 0;
  std::size_t dropped_length = 0;
  std::size_t dropped_ratio = 0;

  std::string to_text() const;
};

struct ExtractionResult {
  std::vector<SentenceTuple> tuples;
  std::vector<std::size_t> document_of;  // source document index per tuple
  ExtractionReport report;
};

ExtractionResult extract_tuples(const std::vector<Document>& docs, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, const ExtractionConfig& config = {});

/// Tuple store: one tab-separated record per line after a header comment.
void write_tuples(const std::string& path, const std::vector<SentenceTuple>& tuples, std::uint64_t seed);
std::vector<SentenceTuple> read_tuples(const std::string& path);

/// A minibatch with each field padded to the batch maximum using the pad id.
struct Batch {
  std::vector<Sentence> before_x;
  std::vector<Sentence> x;
  std::vector<Sentence> y;
  std::vector<std::size_t> before_x_len;
  std::vector<std::size_t> x_len;
  std::vector<std::size_t> y_len;
  std::vector<bool> is_doc_start;

  std::size_t size() const { return x.size(); }
  /// Item `i` with padding stripped.
  SentenceTuple item(std::size_t i) const;
  /// 1 for real target positions (including the implicit eos), 0 for padding.
  std::vector<double> target_mask(std::size_t i) const;
};

/// Shuffles tuples per epoch with a seeded generator and groups them into
/// batches of `batch_size` (the last batch may be smaller).
std::vector<Batch> make_batches(const std::vector<SentenceTuple>& tuples, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch);

}  // namespace docnmt
