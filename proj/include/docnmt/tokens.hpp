#pragma once

#include <cstdint>
#include <vector>

namespace docnmt {

using TokenId = std::uint32_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr TokenId kUnkId = 2;
inline constexpr TokenId kBosId = 3;
inline constexpr TokenId kReservedCount = 4;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";

/// Longest sentence (in tokens, excluding the implicit end marker) accepted
/// anywhere in the pipeline.
inline constexpr std::size_t kMaxSentenceLength = 50;

/// Training unit: the current source sentence x, its predecessor in the
/// document (before_x), and the reference translation y.
struct SentenceTuple {
  Sentence before_x;
  Sentence x;
  Sentence y;
  bool is_doc_start = false;

  bool operator==(const SentenceTuple&) const = default;
};

/// Stand-in before-x for a document's first sentence: three end markers.
inline Sentence null_sentence() { return Sentence(3, kEosId); }

}  // namespace docnmt
