#include <gtest/gtest.h>

#include "eduqg/datasets.hpp"
#include "eduqg/error.hpp"
#include "eduqg/synthetic.hpp"
#include "eduqg/tokenizer.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

std::vector<std::string> sciq_questions(const Json& arr) {
  std::vector<std::string> out;
  for (const auto& r : arr) out.push_back(r["question"].get<std::string>());
  return out;
}

TEST(TokenizerTest, RoundTripsHundredScienceQuestions) {
  SyntheticOptions opts;
  opts.abstracts = 50;
  opts.squad_train = 10;
  opts.squad_dev = 10;
  opts.sciq_train = 300;
  opts.sciq_validation = 10;
  opts.sciq_test = 100;
  opts.reference_sentences = 10;
  const auto corpus = generate_synthetic(opts);
  std::vector<std::string> texts = sciq_questions(corpus.sciq_train);
  for (const auto& r : corpus.sciq_train) texts.push_back(r["support"].get<std::string>());
  const Tokenizer tok = build_vocabulary(texts);
  const auto questions = sciq_questions(corpus.sciq_test);
  ASSERT_EQ(questions.size(), 100u);
  for (const auto& q : questions) {
    const auto seq = tok.encode(q);
    for (const auto id : seq.ids) {
      ASSERT_GE(id, 0);
      ASSERT_LT(static_cast<std::size_t>(id), tok.vocab_size());
      EXPECT_NE(id, tok.special().unk) << q;
    }
    EXPECT_EQ(tok.decode(seq), Tokenizer::normalize(q));
  }
}

TEST(TokenizerTest, NormalizationCollapsesWhitespace) {
  EXPECT_EQ(Tokenizer::normalize("  What   do\tcells \n make? "), "What do cells make?");
  const auto tok = testing::science_tokenizer();
  EXPECT_EQ(tok->decode(tok->encode("What   do magnets\tproduce?")), "What do magnets produce?");
  EXPECT_TRUE(tok->encode("   ").empty());
}

TEST(TokenizerTest, SpecialIdsAndSentinelOrder) {
  const auto tok = testing::science_tokenizer(8);
  const auto& sp = tok->special();
  EXPECT_EQ(sp.pad, 0);
  EXPECT_EQ(sp.eos, 1);
  EXPECT_EQ(sp.unk, 2);
  ASSERT_EQ(sp.sentinels.size(), 8u);
  for (std::size_t i = 0; i < sp.sentinels.size(); ++i) {
    EXPECT_EQ(tok->piece(sp.sentinels[i]), "<extra_id_" + std::to_string(i) + ">");
    EXPECT_EQ(tok->sentinel_index(sp.sentinels[i]), i);
    EXPECT_TRUE(tok->is_sentinel(sp.sentinels[i]));
    EXPECT_TRUE(tok->is_special(sp.sentinels[i]));
  }
  EXPECT_EQ(sp.sentinels[0], static_cast<TokenId>(tok->vocab_size() - 1));
  const auto [lo, hi] = tok->text_range();
  for (TokenId id = lo; id < hi; ++id) EXPECT_FALSE(tok->is_special(id));
}

TEST(TokenizerTest, DecodeDropsPadAndEosAndRendersSentinels) {
  const auto tok = testing::science_tokenizer(4);
  auto ids = tok->encode("magnets").ids;
  ids.insert(ids.begin(), tok->special().pad);
  ids.push_back(tok->special().sentinels[1]);
  ids.push_back(tok->special().eos);
  EXPECT_EQ(tok->decode(std::span<const TokenId>(ids)), "magnets<extra_id_1>");
}

TEST(TokenizerTest, UnknownCharactersCollapseToOneUnk) {
  const auto tok = testing::science_tokenizer();
  const auto seq = tok->encode("cells \xE2\x98\x83\xE2\x98\x83");
  ASSERT_FALSE(seq.empty());
  EXPECT_EQ(seq.ids.back(), tok->special().unk);
  EXPECT_NE(seq.ids[seq.size() - 2], tok->special().unk);
  EXPECT_NE(tok->decode(seq).find("\xE2\x81\x87"), std::string::npos);
}

TEST(TokenizerTest, SaveLoadPreservesIdsAndFingerprint) {
  testing::TempDir dir;
  const auto tok = testing::science_tokenizer();
  tok->save(dir / "vocab.txt");
  const Tokenizer back = Tokenizer::load(dir / "vocab.txt");
  EXPECT_EQ(back.vocab_size(), tok->vocab_size());
  EXPECT_EQ(back.fingerprint(), tok->fingerprint());
  for (const auto& s : testing::science_sentences()) EXPECT_EQ(back.encode(s), tok->encode(s));
}

TEST(TokenizerTest, LoadAppendsSentinelsOnlyWhenAbsent) {
  const std::string text = "<pad>\t0\n</s>\t0\n<unk>\t0\n\xE2\x96\x81" "a\t-1\n";
  const Tokenizer t = Tokenizer::from_vocab_text(text, 3);
  EXPECT_EQ(t.vocab_size(), 7u);
  EXPECT_EQ(t.special().sentinels.size(), 3u);
  const Tokenizer again = Tokenizer::from_vocab_text(t.to_vocab_text(), 100);
  EXPECT_EQ(again.vocab_size(), 7u);
  EXPECT_THROW(Tokenizer::from_vocab_text("\xE2\x96\x81" "a\t-1\n", 0), SchemaError);
}

TEST(TokenizerTest, BuildVocabularyIsDeterministic) {
  VocabOptions all;
  all.min_count = 1;
  const auto a = build_vocabulary(testing::science_sentences(), all);
  const auto b = build_vocabulary(testing::science_sentences(), all);
  EXPECT_EQ(a.to_vocab_text(), b.to_vocab_text());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  VocabOptions small = all;
  small.max_pieces = 40;
  EXPECT_LT(build_vocabulary(testing::science_sentences(), small).vocab_size(), a.vocab_size());
}

}  // namespace
}  // namespace eduqg
