#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "eduqg/error.hpp"
#include "eduqg/scorer.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

double follower_mass(const KneserNeyScorer& kn, std::int32_t u, std::int32_t v) {
  double total = 0.0;
  for (std::int32_t w = 0; w < static_cast<std::int32_t>(kn.vocab_size()); ++w) {
    if (w == KneserNeyScorer::kBegin) continue;
    total += kn.probability(u, v, w);
  }
  return total;
}

TEST(ScorerTest, WordTokens) {
  EXPECT_EQ(word_tokens("What's H2O, really?"),
            (std::vector<std::string>{"what", "'", "s", "h2o", ",", "really", "?"}));
  EXPECT_TRUE(word_tokens("  ").empty());
  EXPECT_EQ(word_tokens("caf\xC3\xA9 ok").size(), 2u);
}

TEST(ScorerTest, UniformScorer) {
  const UniformScorer u(100);
  const auto lp = u.token_log_probs("what is a cell");
  ASSERT_EQ(lp.size(), 4u);
  for (double x : lp) EXPECT_DOUBLE_EQ(x, -std::log(100.0));
  EXPECT_TRUE(u.token_log_probs("").empty());
}

TEST(ScorerTest, KneserNeyDistributionsSumToOne) {
  const auto kn = KneserNeyScorer::train(testing::science_sentences());
  const auto n = static_cast<std::int32_t>(kn.vocab_size());
  const std::int32_t cells = kn.word_id("cells");
  const std::int32_t what = kn.word_id("what");
  const std::vector<std::pair<std::int32_t, std::int32_t>> contexts = {
      {KneserNeyScorer::kBegin, KneserNeyScorer::kBegin},
      {KneserNeyScorer::kBegin, what},
      {what, cells},
      {cells, what},
      {KneserNeyScorer::kUnknown, KneserNeyScorer::kUnknown},
      {n - 1, n - 2}};
  for (const auto& [u, v] : contexts) EXPECT_NEAR(follower_mass(kn, u, v), 1.0, 1e-9) << u << "," << v;
}

TEST(ScorerTest, KneserNeyFavoursSeenContinuations) {
  const auto kn = KneserNeyScorer::train(testing::science_sentences());
  const auto seen = kn.token_log_probs("What do plant cells use to make food?");
  const auto shuffled = kn.token_log_probs("food make cells What to use plant do?");
  ASSERT_EQ(seen.size(), shuffled.size());
  EXPECT_EQ(seen.size(), word_tokens("What do plant cells use to make food?").size() + 1);
  double a = 0.0;
  double b = 0.0;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    a += seen[i];
    b += shuffled[i];
  }
  EXPECT_GT(a, b);
}

TEST(ScorerTest, KneserNeyHandlesUnknownWords) {
  const auto kn = KneserNeyScorer::train(testing::science_sentences());
  EXPECT_EQ(kn.word_id("zyzzyva"), KneserNeyScorer::kUnknown);
  const auto lp = kn.token_log_probs("zyzzyva quux");
  ASSERT_EQ(lp.size(), 3u);
  for (double x : lp) {
    EXPECT_TRUE(std::isfinite(x));
    EXPECT_LT(x, 0.0);
  }
}

TEST(ScorerTest, KneserNeyIsDeterministicAndNamed) {
  const auto a = KneserNeyScorer::train(testing::science_sentences(), 0.75, "ref");
  const auto b = KneserNeyScorer::train(testing::science_sentences(), 0.75, "ref");
  EXPECT_EQ(a.id(), b.id());
  EXPECT_EQ(a.id().rfind("ref", 0), 0u);
  EXPECT_EQ(a.token_log_probs("what is a cell?"), b.token_log_probs("what is a cell?"));
  EXPECT_THROW(KneserNeyScorer::train({}), Error);
  EXPECT_THROW(KneserNeyScorer::train(testing::science_sentences(), 1.5), Error);
}

TEST(ScorerTest, MakeScorerFromConfig) {
  testing::TempDir dir;
  {
    std::ofstream plain(dir / "ref.txt");
    for (const auto& s : testing::science_sentences()) plain << s << "\n";
    std::ofstream jsonl(dir / "ref.jsonl");
    for (const auto& s : testing::science_sentences()) jsonl << Json{{"question", s}}.dump() << "\n";
  }
  const auto u = make_scorer(Json{{"type", "uniform"}, {"vocab_size", 10}});
  EXPECT_DOUBLE_EQ(u->token_log_probs("a")[0], -std::log(10.0));
  const auto p = make_scorer(Json{{"type", "kneser_ney"}, {"corpus", {(dir / "ref.txt").string()}}});
  const auto j = make_scorer(Json{{"type", "kneser_ney"}, {"corpus", {(dir / "ref.jsonl").string()}}});
  EXPECT_EQ(p->token_log_probs("what do magnets produce?"), j->token_log_probs("what do magnets produce?"));
  EXPECT_THROW(make_scorer(Json{{"type", "gpt"}}), ConfigError);
  EXPECT_THROW(make_scorer(Json{{"type", "kneser_ney"}, {"corpus", {(dir / "none.txt").string()}}}), IoError);
}

}  // namespace
}  // namespace eduqg
