#include "docnmt/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "docnmt/error.hpp"
#include "docnmt/rng.hpp"

namespace docnmt {

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string ids_to_text(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

Sentence text_to_ids(const std::string& text, const std::string& where) {
  Sentence out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(static_cast<TokenId>(v));
    } catch (const std::exception&) {
      throw FormatError(where + ": bad token id '" + tok + "'");
    }
  }
  return out;
}

Sentence pad_to(const Sentence& s, std::size_t n) {
  Sentence out = s;
  out.resize(n, kPadId);
  return out;
}

}  // namespace

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kEosToken);
  add(kUnkToken);
  add(kBosToken);
}

void Vocabulary::add(const std::string& token) {
  if (ids_.count(token)) throw FormatError("duplicate vocabulary entry '" + token + "'");
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  const std::vector<std::string> reserved{kPadToken, kEosToken, kUnkToken, kBosToken};
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw FormatError("vocabulary must start with the reserved tokens <pad> </s> <unk> <s>");
  }
  Vocabulary v;
  for (std::size_t i = reserved.size(); i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

Sentence Vocabulary::encode(const std::vector<std::string>& words) const {
  Sentence out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(const Sentence& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

std::vector<std::vector<std::string>> read_documents(std::istream& in) {
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> current;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (trim(line) == kDocMarker) {
      if (!current.empty()) docs.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(line);
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

std::vector<std::vector<std::string>> read_documents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_documents(in);
}

void write_documents(std::ostream& out, const std::vector<std::vector<std::string>>& docs) {
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (d) out << kDocMarker << '\n';
    for (const auto& s : docs[d]) out << s << '\n';
  }
}

std::vector<Document> align_documents(const std::vector<std::vector<std::string>>& source,
                                      const std::vector<std::vector<std::string>>& target) {
  if (source.size() != target.size()) {
    throw FormatError("document count mismatch: source has " + std::to_string(source.size()) + ", target has " +
                      std::to_string(target.size()));
  }
  std::vector<Document> docs;
  for (std::size_t d = 0; d < source.size(); ++d) {
    if (source[d].size() != target[d].size()) {
      throw FormatError("alignment error in document " + std::to_string(d) + ": " +
                        std::to_string(source[d].size()) + " source vs " + std::to_string(target[d].size()) +
                        " target sentences");
    }
    docs.push_back(Document{d, source[d], target[d]});
  }
  return docs;
}

std::vector<Document> load_corpus(const std::string& source_path, const std::string& target_path) {
  return align_documents(read_documents(source_path), read_documents(target_path));
}

std::map<std::string, std::size_t> count_tokens(const std::vector<Document>& docs, Side side) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    for (const auto& line : side == Side::source ? doc.source : doc.target) {
      for (const auto& tok : split_tokens(line)) ++counts[tok];
    }
  }
  return counts;
}

Vocabulary build_vocab(const std::vector<Document>& docs, Side side, std::size_t cap) {
  const auto counts = count_tokens(docs, side);
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [tok, n] : counts) {
    // Corpus text that collides with a reserved surface form keeps the reserved id.
    if (tok == kPadToken || tok == kEosToken || tok == kUnkToken || tok == kBosToken) continue;
    ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> tokens{kPadToken, kEosToken, kUnkToken, kBosToken};
  for (const auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary::from_tokens(tokens);
}

std::string ExtractionReport::to_text() const {
  std::ostringstream out;
  out << "documents = " << documents << '\n'
      << "pairs = " << pairs << '\n'
      << "kept = " << kept << '\n'
      << "dropped_empty = " << dropped_empty << '\n'
      << "dropped_length = " << dropped_length << '\n'
      << "dropped_ratio = " << dropped_ratio << '\n';
  return out.str();
}

ExtractionResult extract_tuples(const std::vector<Document>& docs, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, const ExtractionConfig& config) {
  ExtractionResult result;
  result.report.documents = docs.size();
  for (const auto& doc : docs) {
    std::vector<Sentence> src, tgt;
    for (const auto& line : doc.source) src.push_back(source_vocab.encode(split_tokens(line)));
    for (const auto& line : doc.target) tgt.push_back(target_vocab.encode(split_tokens(line)));
    for (std::size_t i = 0; i < src.size(); ++i) {
      ++result.report.pairs;
      SentenceTuple t;
      t.is_doc_start = i == 0;
      t.before_x = t.is_doc_start ? null_sentence() : src[i - 1];
      t.x = src[i];
      t.y = tgt[i];
      if (t.x.empty() || t.y.empty() || t.before_x.empty()) {
        ++result.report.dropped_empty;
        continue;
      }
      if (t.x.size() > config.max_len || t.y.size() > config.max_len || t.before_x.size() > config.max_len) {
        ++result.report.dropped_length;
        continue;
      }
      if (!t.is_doc_start) {
        const double longer = static_cast<double>(std::max(t.x.size(), t.before_x.size()));
        const double shorter = static_cast<double>(std::min(t.x.size(), t.before_x.size()));
        if (longer / shorter > config.max_length_ratio) {
          ++result.report.dropped_ratio;
          continue;
        }
      }
      result.tuples.push_back(std::move(t));
      result.document_of.push_back(doc.index);
      ++result.report.kept;
    }
  }
  return result;
}

void write_tuples(const std::string& path, const std::vector<SentenceTuple>& tuples, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "# docnmt tuples v1 seed=" << seed << " count=" << tuples.size() << '\n';
  for (const auto& t : tuples) {
    out << (t.is_doc_start ? 1 : 0) << '\t' << ids_to_text(t.before_x) << '\t' << ids_to_text(t.x) << '\t'
        << ids_to_text(t.y) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<SentenceTuple> read_tuples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tuple store '" + path + "'");
  std::vector<SentenceTuple> tuples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() != 4 || (fields[0] != "0" && fields[0] != "1")) {
      throw FormatError(where + ": expected 4 tab-separated fields");
    }
    SentenceTuple t;
    t.is_doc_start = fields[0] == "1";
    t.before_x = text_to_ids(fields[1], where);
    t.x = text_to_ids(fields[2], where);
    t.y = text_to_ids(fields[3], where);
    tuples.push_back(std::move(t));
  }
  return tuples;
}

SentenceTuple Batch::item(std::size_t i) const {
  SentenceTuple t;
  t.before_x.assign(before_x[i].begin(), before_x[i].begin() + static_cast<std::ptrdiff_t>(before_x_len[i]));
  t.x.assign(x[i].begin(), x[i].begin() + static_cast<std::ptrdiff_t>(x_len[i]));
  t.y.assign(y[i].begin(), y[i].begin() + static_cast<std::ptrdiff_t>(y_len[i]));
  t.is_doc_start = is_doc_start[i];
  return t;
}

std::vector<double> Batch::target_mask(std::size_t i) const {
  std::vector<double> mask(y[i].size() + 1, 0.0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(y_len[i] + 1), 1.0);
  return mask;
}

std::vector<Batch> make_batches(const std::vector<SentenceTuple>& tuples, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be positive");
  std::vector<std::size_t> order(tuples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(seed).split(0xba7c4ULL + epoch);
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::size_t max_b = 0, max_x = 0, max_y = 0;
    for (std::size_t k = start; k < end; ++k) {
      const auto& t = tuples[order[k]];
      max_b = std::max(max_b, t.before_x.size());
      max_x = std::max(max_x, t.x.size());
      max_y = std::max(max_y, t.y.size());
    }
    Batch b;
    for (std::size_t k = start; k < end; ++k) {
      const auto& t = tuples[order[k]];
      b.before_x.push_back(pad_to(t.before_x, max_b));
      b.x.push_back(pad_to(t.x, max_x));
      b.y.push_back(pad_to(t.y, max_y));
      b.before_x_len.push_back(t.before_x.size());
      b.x_len.push_back(t.x.size());
      b.y_len.push_back(t.y.size());
      b.is_doc_start.push_back(t.is_doc_start);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace docnmt
