#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eduqg/io.hpp"

namespace eduqg {

/// Autoregressive text scorer used for perplexity. Returns the natural-log
/// probability of every predicted token of `text`; an empty vector means
/// the text has no tokens.
class LanguageScorer {
 public:
  virtual ~LanguageScorer() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> token_log_probs(std::string_view text) const = 0;
};

/// Lowercases and splits into word runs and single punctuation marks.
/// Bytes >= 0x80 count as word characters.
std::vector<std::string> word_tokens(std::string_view text);

/// Every word token has probability 1 / vocab_size; no end token.
class UniformScorer final : public LanguageScorer {
 public:
  explicit UniformScorer(std::size_t vocab_size);
  std::string id() const override;
  std::vector<double> token_log_probs(std::string_view text) const override;

 private:
  std::size_t vocab_size_;
};

/// Interpolated Kneser-Ney trigram over word_tokens(), with sentence
/// boundary padding and an end-of-sentence token that is scored. Words
/// unseen in training map to one unknown type that receives the uniform
/// share of the lowest order.
class KneserNeyScorer final : public LanguageScorer {
 public:
  static KneserNeyScorer train(const std::vector<std::string>& texts, double discount = 0.75,
                               std::string name = "kn3");

  std::string id() const override;
  std::vector<double> token_log_probs(std::string_view text) const override;

  /// P(word | u, v) over the scorer's vocabulary ids.
  double probability(std::int32_t u, std::int32_t v, std::int32_t w) const;
  std::int32_t word_id(std::string_view word) const;
  std::size_t vocab_size() const { return words_.size(); }

  static constexpr std::int32_t kBegin = 0;
  static constexpr std::int32_t kEnd = 1;
  static constexpr std::int32_t kUnknown = 2;

 private:
  struct ContextStats {
    double total = 0.0;     // sum of counts following the context
    double distinct = 0.0;  // number of distinct followers
  };

  static std::uint64_t key2(std::int32_t a, std::int32_t b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }
  static std::uint64_t key3(std::int32_t a, std::int32_t b, std::int32_t c) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 42) ^
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(b)) << 21) ^ static_cast<std::uint32_t>(c);
  }

  double p1(std::int32_t w) const;
  double p2(std::int32_t v, std::int32_t w) const;

  std::string name_;
  double discount_ = 0.75;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::size_t corpus_tokens_ = 0;
  std::size_t corpus_texts_ = 0;

  std::unordered_map<std::uint64_t, double> tri_;       // c(u v w)
  std::unordered_map<std::uint64_t, ContextStats> tri_ctx_;
  std::unordered_map<std::uint64_t, double> bi_cont_;   // N1+(. v w)
  std::unordered_map<std::int32_t, ContextStats> bi_ctx_;
  std::vector<double> uni_cont_;                        // N1+(. w)
  double uni_total_ = 0.0;
  double uni_distinct_ = 0.0;
};

/// Builds a scorer from a config object:
///   {type: uniform, vocab_size: N} or {type: kneser_ney, corpus: [paths], discount: D}
/// Corpus files are JSON Lines whose `question`, `abstract` or `text`
/// fields are used, or plain text with one sentence per line.
std::unique_ptr<LanguageScorer> make_scorer(const Json& config);

}  // namespace eduqg
