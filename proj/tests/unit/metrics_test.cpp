#include <cmath>

#include <gtest/gtest.h>

#include "eduqg/error.hpp"
#include "eduqg/io.hpp"
#include "eduqg/metrics.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

using testing::data_dir;

// Scorer returning fixed per-token log-probabilities.
class FixedScorer final : public LanguageScorer {
 public:
  explicit FixedScorer(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}
  std::string id() const override { return "fixed"; }
  std::vector<double> token_log_probs(std::string_view text) const override {
    return rows_.at(static_cast<std::size_t>(std::stoi(std::string(text))));
  }

 private:
  std::vector<std::vector<double>> rows_;
};

TEST(BleuTest, MatchesBruteForceOracleOnGoldenSet) {
  const Json golden = read_json(data_dir() / "golden_metrics.json");
  std::vector<std::string> hyps, refs;
  for (const auto& p : golden["pairs"]) {
    hyps.push_back(p["hypothesis"]);
    refs.push_back(p["reference"]);
  }
  ASSERT_EQ(hyps.size(), 50u);
  for (int n = 1; n <= 4; ++n) {
    const auto expected = golden["corpus"]["bleu" + std::to_string(n)];
    const BleuResult r = bleu_n(hyps, refs, n);
    EXPECT_NEAR(r.corpus, expected["score"].get<double>(), 1e-6) << "BLEU-" << n;
    EXPECT_NEAR(r.brevity_penalty, expected["brevity_penalty"].get<double>(), 1e-9);
    ASSERT_EQ(r.precisions.size(), static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      EXPECT_NEAR(r.precisions[static_cast<std::size_t>(k)], expected["precisions"][k].get<double>(), 1e-9);
    }
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      EXPECT_NEAR(r.sentence[i], golden["pairs"][i]["sentence_bleu"][n - 1].get<double>(), 1e-6)
          << "pair " << i << " BLEU-" << n;
    }
  }
}

TEST(BleuTest, HandCasesAsSinglePairCorpora) {
  const Json golden = read_json(data_dir() / "golden_metrics.json");
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"clipping", 0}, {"short_hypothesis", 1}, {"long_hypothesis", 2}};
  for (const auto& [key, index] : cases) {
    const auto& p = golden["pairs"][index];
    for (int n = 1; n <= 4; ++n) {
      EXPECT_NEAR(bleu_n({p["hypothesis"]}, {p["reference"]}, n).corpus, golden["hand"][key][n - 1].get<double>(),
                  1e-6)
          << key << " BLEU-" << n;
    }
  }
}

TEST(BleuTest, ClippingCapsRepeatedUnigrams) {
  const auto r = bleu_n({"the the the the the the the"}, {"the cat is on the mat"}, 1);
  EXPECT_NEAR(r.precisions[0], 2.0 / 7.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.brevity_penalty, 1.0);
}

TEST(BleuTest, BrevityPenaltyHandValue) {
  EXPECT_NEAR(bleu_n({"the cat sat"}, {"the cat sat down"}, 1).corpus, 71.65, 0.01);
  EXPECT_NEAR(bleu_n({"the cat sat"}, {"the cat sat down"}, 1).brevity_penalty, std::exp(1.0 - 4.0 / 3.0), 1e-12);
}

TEST(BleuTest, EmptyHypothesisScoresZero) {
  const auto r = bleu_n({""}, {"what is it?"}, 4);
  EXPECT_EQ(r.corpus, 0.0);
  EXPECT_EQ(r.sentence[0], 0.0);
  EXPECT_EQ(r.brevity_penalty, 0.0);
}

TEST(BleuTest, IdenticalCorpusScoresHundred) {
  const std::vector<std::string> s = {"What do mitochondria produce?", "Which structures absorb light energy?"};
  for (int n = 1; n <= 4; ++n) EXPECT_NEAR(bleu_n(s, s, n).corpus, 100.0, 1e-9);
}

TEST(BleuTest, RejectsMismatchedOrEmptyInput) {
  EXPECT_THROW(bleu_n({"a"}, {}, 4), InvalidArgument);
  EXPECT_THROW(bleu_n({}, {}, 4), InvalidArgument);
  EXPECT_THROW(bleu_n({"a"}, {"a"}, 5), InvalidArgument);
}

TEST(BleuTest, TokenizationLowercasesAndSplitsPunctuation) {
  EXPECT_EQ(word_tokens("What do MAGNETS attract?"), (std::vector<std::string>{"what", "do", "magnets", "attract", "?"}));
  EXPECT_EQ(word_tokens("cell's"), (std::vector<std::string>{"cell", "'", "s"}));
  EXPECT_EQ(word_tokens("photosynthèse"), (std::vector<std::string>{"photosynthèse"}));
}

TEST(F1Test, MatchesOracleOnGoldenSet) {
  const Json golden = read_json(data_dir() / "golden_metrics.json");
  for (const auto& p : golden["pairs"]) {
    EXPECT_NEAR(token_f1(p["hypothesis"].get<std::string>(), p["reference"].get<std::string>()),
                p["f1"].get<double>(), 1e-6)
        << p["hypothesis"];
  }
}

TEST(F1Test, HandValue) {
  EXPECT_EQ(token_f1("a feline animal", "feline creature"), 50.0);
}

TEST(F1Test, NormalizationDropsArticlesAndPunctuation) {
  EXPECT_EQ(squad_normalize("The Cat, an animal!"), (std::vector<std::string>{"cat", "animal"}));
  EXPECT_EQ(token_f1("The answer.", "answer"), 100.0);
  EXPECT_EQ(token_f1("", ""), 100.0);
  EXPECT_EQ(token_f1("the", "cat"), 0.0);
}

TEST(PerplexityTest, HandValue) {
  FixedScorer scorer({{std::log(0.5), std::log(0.25)}});
  const auto r = perplexity({"0"}, scorer);
  EXPECT_NEAR(r.perplexity, 2.828, 0.001);
  EXPECT_NEAR(r.perplexity, std::sqrt(8.0), 1e-12);
  EXPECT_EQ(r.tokens, 2u);
}

TEST(PerplexityTest, PoolsTokensAndSkipsEmptyTexts) {
  FixedScorer scorer({{std::log(0.5)}, {}, {std::log(0.125), std::log(0.125)}});
  const auto r = perplexity({"0", "1", "2"}, scorer);
  EXPECT_EQ(r.tokens, 3u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_NEAR(r.perplexity, std::exp(-(std::log(0.5) + 2 * std::log(0.125)) / 3.0), 1e-12);
}

TEST(PerplexityTest, UniformScorerGivesVocabularySize) {
  UniformScorer scorer(250);
  EXPECT_NEAR(perplexity({"what do cells make?", "why"}, scorer).perplexity, 250.0, 1e-9);
}

TEST(DiversityTest, HandValue) {
  EXPECT_NEAR(diversity({"what is x", "what is y"}), 0.6667, 0.0001);
}

TEST(DiversityTest, DistinctBigramsDoNotCrossTexts) {
  EXPECT_NEAR(distinct_n({"a b", "b c"}, 2), 1.0, 1e-12);
  EXPECT_NEAR(distinct_n({"a b a b"}, 2), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(distinct_n({"What is", "what IS"}, 1), 0.5, 1e-12);
}

TEST(SignificanceTest, HandCase) {
  const auto r = paired_ttest({0, 0, 0, 0, 0}, {1, 2, 3, 4, 5});
  EXPECT_GT(r.p_value, 0.005);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_TRUE(r.significant);
  EXPECT_FALSE(r.degenerate);
  EXPECT_NEAR(r.t_statistic, std::sqrt(18.0), 1e-9);
}

TEST(SignificanceTest, MatchesScipyReference) {
  const Json cases = read_json(data_dir() / "ttest_reference.json");
  for (const auto& c : cases) {
    const auto b = c["baseline"].get<std::vector<double>>();
    const auto a = c["candidate"].get<std::vector<double>>();
    const auto greater = paired_ttest(b, a, Direction::kCandidateGreater);
    const auto less = paired_ttest(b, a, Direction::kCandidateLess);
    EXPECT_NEAR(greater.t_statistic, c["t"].get<double>(), 1e-9) << c["name"];
    EXPECT_NEAR(greater.p_value, c["p_greater"].get<double>(), 1e-9) << c["name"];
    EXPECT_NEAR(less.p_value, c["p_less"].get<double>(), 1e-9) << c["name"];
    EXPECT_EQ(greater.significant, c["p_greater"].get<double>() < kSignificanceLevel) << c["name"];
  }
}

TEST(SignificanceTest, SwappingArgumentsNegatesStatistic) {
  const std::vector<double> a = {3.0, 1.5, 4.0, 2.0, 6.5, 3.5};
  const std::vector<double> b = {2.0, 1.0, 4.5, 1.0, 5.0, 2.0};
  const auto ab = paired_ttest(a, b);
  const auto ba = paired_ttest(b, a);
  EXPECT_NEAR(ab.t_statistic, -ba.t_statistic, 1e-12);
  EXPECT_NEAR(ab.p_value + ba.p_value, 1.0, 1e-12);
  EXPECT_NEAR(paired_ttest(a, b, Direction::kCandidateLess).p_value, ba.p_value, 1e-12);
}

TEST(SignificanceTest, DegenerateDifferences) {
  const auto same = paired_ttest({1, 2, 3}, {1, 2, 3});
  EXPECT_TRUE(same.degenerate);
  EXPECT_FALSE(same.significant);
  EXPECT_DOUBLE_EQ(same.p_value, 0.5);

  const auto shift = paired_ttest({1, 2, 3}, {2, 3, 4});
  EXPECT_TRUE(shift.degenerate);
  EXPECT_TRUE(std::isinf(shift.t_statistic));
  EXPECT_TRUE(shift.significant);
  EXPECT_DOUBLE_EQ(shift.p_value, 0.0);

  EXPECT_THROW(paired_ttest({1}, {2}), InvalidArgument);
  EXPECT_THROW(paired_ttest({1, 2}, {2}), InvalidArgument);
}

TEST(SignificanceTest, JsonRoundTripKeepsInfinity) {
  const auto r = paired_ttest({1, 2, 3}, {2, 3, 4});
  const auto back = SignificanceResult::from_json(r.to_json());
  EXPECT_TRUE(std::isinf(back.t_statistic));
  EXPECT_EQ(back.significant, r.significant);
}

TEST(EvaluateTest, ReportCarriesPerExampleVectorsAndCorpusScores) {
  UniformScorer scorer(100);
  const std::vector<std::string> ids = {"a", "b", "c"};
  const std::vector<std::string> hyps = {"What do cells make?", "Who built it?", "What is x?"};
  const std::vector<std::string> refs = {"What do cells produce?", "Who built the museum?", "What is x?"};
  const auto r = evaluate("LEAF", ids, hyps, refs, scorer, {true});
  r.validate();
  EXPECT_EQ(r.ids, ids);
  EXPECT_EQ(r.f1.size(), 3u);
  for (int n = 1; n <= 4; ++n) {
    EXPECT_NEAR(r.corpus.bleu[static_cast<std::size_t>(n - 1)], bleu_n(hyps, refs, n).corpus, 1e-12);
  }
  EXPECT_NEAR(r.corpus.f1, (token_f1(hyps[0], refs[0]) + token_f1(hyps[1], refs[1]) + 100.0) / 3.0, 1e-9);
  EXPECT_NEAR(r.corpus.perplexity, 100.0, 1e-9);
  EXPECT_NEAR(r.corpus.diversity, diversity(hyps), 1e-12);
  ASSERT_TRUE(r.distinct2.has_value());

  testing::TempDir dir;
  r.save(dir / "report.json");
  const auto back = MetricReport::load(dir / "report.json");
  EXPECT_EQ(back.ids, r.ids);
  EXPECT_EQ(back.f1, r.f1);
  EXPECT_EQ(back.corpus.bleu, r.corpus.bleu);
  EXPECT_EQ(back.scorer_id, "uniform:100");

  const std::string csv = r.per_example_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,bleu1,bleu2,bleu3,bleu4,f1");
  EXPECT_NE(csv.find("\nc,100,100,100,100,100"), std::string::npos) << csv;
}

TEST(EvaluateTest, RejectsDuplicateIds) {
  UniformScorer scorer(10);
  EXPECT_THROW(evaluate("m", {"a", "a"}, {"x", "y"}, {"x", "y"}, scorer), InvalidArgument);
}

}  // namespace
}  // namespace eduqg
