#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eduqg/io.hpp"
#include "eduqg/scorer.hpp"

namespace eduqg {

/// Tokenization shared by BLEU: lowercase, words and single punctuation
/// marks (see word_tokens).
inline constexpr const char* kBleuTokenizer = "lowercase; split on whitespace and punctuation boundaries";

struct BleuResult {
  double corpus = 0.0;                           // [0, 100]
  std::vector<double> sentence;                  // add-one smoothed for n >= 2
  std::vector<double> precisions;                // corpus modified precision per order, in [0, 1]
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus BLEU with uniform weights 1/max_n, one reference per hypothesis.
BleuResult bleu_n(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                  int max_n);

/// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop
/// the articles a/an/the, split on whitespace.
std::vector<std::string> squad_normalize(std::string_view text);

/// Token-multiset F1 in [0, 100].
double token_f1(std::string_view prediction, std::string_view gold);

struct PerplexityResult {
  double perplexity = 0.0;
  std::size_t tokens = 0;
  std::size_t skipped = 0;  // texts scored to zero tokens
};

/// exp(-mean token log-likelihood) pooled over all texts.
PerplexityResult perplexity(const std::vector<std::string>& texts, const LanguageScorer& scorer);

/// Distinct-n over the lowercased, whitespace-tokenized corpus: unique
/// n-grams / total n-grams (n-grams do not cross text boundaries).
double distinct_n(const std::vector<std::string>& texts, int n);
inline double diversity(const std::vector<std::string>& texts) { return distinct_n(texts, 1); }

enum class Direction { kCandidateGreater, kCandidateLess };

struct SignificanceResult {
  std::string metric;
  std::string baseline_id;
  std::string candidate_id;
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
  bool degenerate = false;  // zero variance of differences
  std::size_t n = 0;
  double mean_difference = 0.0;

  Json to_json() const;
  static SignificanceResult from_json(const Json& j);
};

inline constexpr double kSignificanceLevel = 0.01;

/// One-tailed paired t-test on d = candidate - baseline.
SignificanceResult paired_ttest(const std::vector<double>& baseline, const std::vector<double>& candidate,
                                Direction direction = Direction::kCandidateGreater, double alpha = kSignificanceLevel);

struct CorpusScores {
  std::array<double, 4> bleu{};  // BLEU-1..4
  double f1 = 0.0;
  double perplexity = 0.0;
  double diversity = 0.0;
};

/// Scores and per-example vectors for one model on one test set.
struct MetricReport {
  std::string model_id;
  std::string scorer_id;
  std::string bleu_tokenizer = kBleuTokenizer;
  CorpusScores corpus;
  std::array<double, 4> mean_sentence_bleu{};
  std::optional<double> distinct2;
  std::vector<std::string> ids;
  std::array<std::vector<double>, 4> sentence_bleu;
  std::vector<double> f1;

  /// Per-example vector for bleu1..bleu4 or f1.
  const std::vector<double>& per_example(const std::string& metric) const;
  /// Corpus value for bleu1..bleu4, f1, perplexity or diversity.
  double corpus_value(const std::string& metric) const;

  void validate() const;

  Json to_json() const;
  static MetricReport from_json(const Json& j);
  void save(const std::filesystem::path& json_path) const;
  static MetricReport load(const std::filesystem::path& json_path);

  /// id,bleu1,bleu2,bleu3,bleu4,f1
  std::string per_example_csv() const;
};

struct EvaluateOptions {
  bool distinct2 = false;
};

/// Every metric for generated questions against reference questions.
MetricReport evaluate(const std::string& model_id, const std::vector<std::string>& ids,
                      const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                      const LanguageScorer& scorer, const EvaluateOptions& options = {});

}  // namespace eduqg
