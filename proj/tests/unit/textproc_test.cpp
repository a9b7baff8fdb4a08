#include <gtest/gtest.h>

#include <map>

#include "eduqg/error.hpp"
#include "eduqg/rng.hpp"
#include "eduqg/textproc.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

SpecialIds specials(std::size_t n) {
  SpecialIds s;
  for (std::size_t i = 0; i < n; ++i) s.sentinels.push_back(static_cast<TokenId>(1000 - i));
  return s;
}

TokenSequence random_sequence(Rng& rng, std::size_t len) {
  TokenSequence seq;
  for (std::size_t i = 0; i < len; ++i) seq.ids.push_back(static_cast<TokenId>(3 + rng.uniform_index(501)));
  return seq;
}

// Rebuilds the original by substituting each input sentinel with the target's span.
TokenSequence reconstruct(const DenoisingPair& pair, const SpecialIds& sp) {
  std::map<TokenId, std::vector<TokenId>> spans;
  TokenId current = -1;
  for (const auto id : pair.target.ids) {
    if (id == sp.eos) break;
    if (id >= 1000 - static_cast<TokenId>(sp.sentinels.size()) + 1) {
      current = id;
      spans[current];
    } else {
      spans[current].push_back(id);
    }
  }
  TokenSequence out;
  for (const auto id : pair.input.ids) {
    auto it = spans.find(id);
    if (it != spans.end()) {
      out.ids.insert(out.ids.end(), it->second.begin(), it->second.end());
    } else {
      out.ids.push_back(id);
    }
  }
  return out;
}

TEST(TextprocTest, CorruptionReconstructsOverTenThousandSequences) {
  const auto sp = specials(100);
  Rng rng(5);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t len = 2 + static_cast<std::size_t>(rng.uniform_index(201));
    const auto seq = random_sequence(rng, len);
    CorruptionOptions opts;
    opts.rate = 0.05 + 0.4 * rng.uniform();
    opts.mean_span_len = 1 + static_cast<std::size_t>(rng.uniform_index(5));
    const auto pair = corrupt_spans(seq, opts, rng.next_u64(), sp);
    ASSERT_EQ(pair.target.ids.back(), sp.eos);
    ASSERT_EQ(reconstruct(pair, sp), seq) << "trial " << trial;
  }
}

TEST(TextprocTest, CorruptedFractionMatchesRate) {
  const auto sp = specials(100);
  Rng rng(11);
  CorruptionOptions opts;
  double noise = 0.0;
  double total = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 20 + static_cast<std::size_t>(rng.uniform_index(481));
    const auto spans = sample_noise_spans(len, opts, rng.next_u64());
    for (const auto& s : spans) noise += static_cast<double>(s.length);
    total += static_cast<double>(len);
  }
  EXPECT_GE(noise / total, 0.12);
  EXPECT_LE(noise / total, 0.18);
}

TEST(TextprocTest, SpansAreOrderedDisjointAndLeadWithKeptRun) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t len = 5 + static_cast<std::size_t>(rng.uniform_index(101));
    const auto spans = sample_noise_spans(len, {}, rng.next_u64());
    ASSERT_FALSE(spans.empty());
    EXPECT_GE(spans.front().begin, 1u);
    std::size_t end = 0;
    for (const auto& s : spans) {
      EXPECT_GT(s.length, 0u);
      if (end != 0) {
        EXPECT_GT(s.begin, end);
      }
      end = s.begin + s.length;
    }
    EXPECT_LE(end, len);
  }
}

TEST(TextprocTest, SpansArePureInSeed) {
  EXPECT_EQ(sample_noise_spans(100, {}, 42), sample_noise_spans(100, {}, 42));
  EXPECT_NE(sample_noise_spans(100, {}, 42), sample_noise_spans(100, {}, 43));
}

TEST(TextprocTest, HandSpanMask) {
  const auto sp = specials(4);
  const TokenSequence seq{{10, 11, 12, 13, 14, 15}};
  const auto pair = apply_span_mask(seq, {{1, 2}, {4, 1}}, sp);
  EXPECT_EQ(pair.input.ids, (std::vector<TokenId>{10, 1000, 13, 999, 15}));
  EXPECT_EQ(pair.target.ids, (std::vector<TokenId>{1000, 11, 12, 999, 14, 1}));
}

TEST(TextprocTest, ZeroRateLeavesSequenceUntouched) {
  const auto sp = specials(4);
  const TokenSequence seq{{10, 11, 12}};
  const auto pair = corrupt_spans(seq, {0.0, 3}, 1, sp);
  EXPECT_EQ(pair.input, seq);
  EXPECT_EQ(pair.target.ids, std::vector<TokenId>{sp.eos});
}

TEST(TextprocTest, RejectsBadCorruption) {
  const auto sp = specials(2);
  const TokenSequence seq{{10, 11, 12, 13}};
  EXPECT_THROW(corrupt_spans(TokenSequence{}, {}, 1, sp), InvalidArgument);
  EXPECT_THROW(corrupt_spans(seq, {1.0, 3}, 1, sp), InvalidArgument);
  EXPECT_THROW(corrupt_spans(seq, {0.9, 3}, 1, sp), InvalidArgument);
  EXPECT_THROW(corrupt_spans(seq, {0.15, 0}, 1, sp), InvalidArgument);
  EXPECT_THROW(apply_span_mask(seq, {{0, 1}, {2, 1}, {3, 1}}, sp), InvalidArgument);
  EXPECT_THROW(apply_span_mask(seq, {{2, 1}, {1, 1}}, sp), InvalidArgument);
}

TEST(TextprocTest, QGPairTruncationKeepsEos) {
  const auto tok = testing::science_tokenizer();
  QGExample ex = testing::science_examples().front();
  QGFormat fmt;
  const auto full = make_qg_pair(ex, *tok, fmt);
  EXPECT_EQ(full.target.ids.back(), tok->special().eos);
  EXPECT_EQ(tok->decode(full.target), ex.question);
  EXPECT_EQ(tok->decode(full.input), "generate question: " + ex.context);

  fmt.max_target_len = 3;
  fmt.max_input_len = 4;
  const auto cut = make_qg_pair(ex, *tok, fmt);
  ASSERT_EQ(cut.target.size(), 3u);
  EXPECT_EQ(cut.target.ids.back(), tok->special().eos);
  EXPECT_EQ(cut.target.ids[0], full.target.ids[0]);
  ASSERT_EQ(cut.input.size(), 4u);
  EXPECT_TRUE(std::equal(cut.input.ids.begin(), cut.input.ids.end(), full.input.ids.begin()));

  fmt.max_target_len = 1;
  EXPECT_EQ(make_qg_pair(ex, *tok, fmt).target.ids, std::vector<TokenId>{tok->special().eos});
  fmt.max_target_len = 0;
  EXPECT_THROW(make_qg_pair(ex, *tok, fmt), ConfigError);
}

}  // namespace
}  // namespace eduqg
