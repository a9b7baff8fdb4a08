#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace eduqg {

using TokenId = std::int32_t;

/// Integer-encoded text. Every id is below the vocabulary size of the
/// tokenizer that produced it.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct SpecialIds {
  TokenId pad = 0;
  TokenId eos = 1;
  TokenId unk = 2;
  std::vector<TokenId> sentinels;  // sentinels[i] is <extra_id_i>
};

/// Options for deriving a vocabulary from raw text (toy preset only; the
/// full-scale preset loads the base model's exported vocabulary).
struct VocabOptions {
  std::size_t max_pieces = 8000;
  std::size_t min_count = 2;
  std::size_t num_sentinels = 32;
};

/// Unigram subword tokenizer over a SentencePiece-style vocabulary
/// (`piece<TAB>score` per line, id = line number). Words are marked with a
/// leading U+2581 and segmented by Viterbi over piece scores.
///
/// Normalization: runs of whitespace collapse to one space and the text is
/// trimmed. decode(encode(t)) == normalize(t) whenever every character of t
/// is covered by the vocabulary.
class Tokenizer {
 public:
  /// Reads a vocabulary file. `<pad>`, `</s>` and `<unk>` must be present.
  /// When the file lists no `<extra_id_N>` pieces, `extra_ids` sentinels are
  /// appended in T5 order (<extra_id_0> gets the highest id).
  static Tokenizer load(const std::filesystem::path& path, std::size_t extra_ids = 100);
  static Tokenizer from_vocab_text(std::string_view text, std::size_t extra_ids = 100);

  /// Pieces in id order with their scores.
  static Tokenizer from_pieces(std::vector<std::pair<std::string, double>> pieces, std::size_t extra_ids = 0);

  std::string to_vocab_text() const;
  void save(const std::filesystem::path& path) const;

  TokenSequence encode(std::string_view text) const;

  /// Concatenates pieces; pad and end-of-sequence are dropped, sentinels are
  /// rendered as `<extra_id_N>` and unknown tokens as U+2047.
  std::string decode(std::span<const TokenId> ids) const;
  std::string decode(const TokenSequence& seq) const { return decode(std::span<const TokenId>(seq.ids)); }

  std::size_t vocab_size() const { return pieces_.size(); }
  const SpecialIds& special() const { return special_; }
  bool is_special(TokenId id) const;
  bool is_sentinel(TokenId id) const;
  std::optional<std::size_t> sentinel_index(TokenId id) const;

  std::string_view piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)).first; }
  std::optional<TokenId> find(std::string_view piece) const;

  /// Inclusive-exclusive id range holding every non-special piece.
  std::pair<TokenId, TokenId> text_range() const { return text_range_; }

  static std::string normalize(std::string_view text);

  /// Hash of the vocabulary text; part of every checkpoint's identity.
  std::string fingerprint() const;

 private:
  void index();

  std::vector<std::pair<std::string, double>> pieces_;
  std::unordered_map<std::string, TokenId> lookup_;
  SpecialIds special_;
  std::pair<TokenId, TokenId> text_range_{0, 0};
  std::size_t max_piece_bytes_ = 1;
  double unk_score_ = -100.0;
};

/// Counts word and punctuation pieces over `texts` and keeps the most
/// frequent, plus every single character seen so all training text
/// round-trips.
Tokenizer build_vocabulary(const std::vector<std::string>& texts, const VocabOptions& options = {});

}  // namespace eduqg
