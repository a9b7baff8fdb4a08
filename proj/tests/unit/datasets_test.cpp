#include <algorithm>
#include <fstream>

#include <gtest/gtest.h>

#include "eduqg/datasets.hpp"
#include "eduqg/error.hpp"
#include "eduqg/io.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

using testing::TempDir;

std::vector<Document> numbered_docs(std::size_t n) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.abstract = "Abstract " + std::to_string(i) + ".";
    d.fields_of_study = {i % 3 == 0 ? "Biology" : (i % 3 == 1 ? "History" : "Physics")};
    docs.push_back(d);
  }
  return docs;
}

TEST(S2orcTest, ReaderKeepsSkipsAndCountsMalformed) {
  TempDir dir;
  std::ofstream(dir / "a.jsonl") << R"({"paper_id": "1", "title": "T", "abstract": "Cells divide.", "mag_field_of_study": ["Biology"]})"
                                 << "\n"
                                 << R"({"paper_id": "2", "abstract": null, "mag_field_of_study": ["Biology"]})" << "\n"
                                 << "\n"
                                 << R"({"paper_id": 3, "abstract": "Ions move.", "mag_field_of_study": null})" << "\n"
                                 << "{not json\n"
                                 << R"({"paper_id": "1", "abstract": "Duplicate.", "mag_field_of_study": ["Physics"]})"
                                 << "\n";
  const auto loaded = load_abstract_corpus(dir / "a.jsonl", CorpusSchema::kS2orc);
  EXPECT_EQ(loaded.stats.records, 5u);
  EXPECT_EQ(loaded.stats.malformed, 1u);
  EXPECT_EQ(loaded.stats.skipped, 2u);  // null abstract, duplicate id
  ASSERT_EQ(loaded.value.size(), 2u);
  EXPECT_EQ(loaded.value[0].id, "1");
  EXPECT_EQ(loaded.value[0].title, "T");
  EXPECT_EQ(loaded.value[0].fields_of_study, (std::set<std::string>{"Biology"}));
  EXPECT_EQ(loaded.value[1].id, "3");
  EXPECT_TRUE(loaded.value[1].fields_of_study.empty());
}

TEST(S2orcTest, MostlyMalformedFileIsASchemaError) {
  TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "oops\n[1,2]\n" << R"({"paper_id": "1", "abstract": "x"})" << "\n";
  EXPECT_THROW(load_abstract_corpus(dir / "bad.jsonl", CorpusSchema::kS2orc), SchemaError);
  EXPECT_THROW(load_abstract_corpus(dir / "missing.jsonl", CorpusSchema::kS2orc), IoError);
}

TEST(S2orcTest, CanonicalRoundTrip) {
  TempDir dir;
  auto docs = numbered_docs(5);
  docs[2].title = "A title";
  write_documents_jsonl(dir / "docs.jsonl", docs);
  EXPECT_EQ(load_abstract_corpus(dir / "docs.jsonl", CorpusSchema::kCanonical).value, docs);
}

TEST(FilterTest, KeepsExactlyDocumentsWithAMatchingField) {
  const auto docs = numbered_docs(30);
  const std::set<std::string> fields = {"Biology", "Physics"};
  const auto kept = filter_by_field(docs, fields);
  EXPECT_EQ(kept.size(), 20u);
  for (const auto& d : kept) EXPECT_TRUE(has_any_field(d, fields));
  for (const auto& d : docs) {
    const bool in = std::find(kept.begin(), kept.end(), d) != kept.end();
    EXPECT_EQ(in, has_any_field(d, fields));
  }
  EXPECT_THROW(filter_by_field(docs, {}), InvalidArgument);
}

TEST(DownsampleTest, SizeOrderAndDeterminism) {
  const auto docs = numbered_docs(200);
  const auto s = downsample(docs, 50, 7);
  ASSERT_EQ(s.size(), 50u);
  EXPECT_EQ(s, downsample(docs, 50, 7));
  EXPECT_NE(s, downsample(docs, 50, 8));
  // original relative order is kept
  std::vector<std::size_t> positions;
  for (const auto& d : s) positions.push_back(std::stoul(d.id.substr(1)));
  EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
  EXPECT_EQ(downsample(docs, 500, 7), docs);
}

TEST(DownsampleTest, SmallSampleNestsInLargeSample) {
  const auto docs = numbered_docs(1000);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto small = downsample(docs, 100, seed);
    const auto large = downsample(docs, 600, seed);
    for (const auto& d : small) {
      EXPECT_NE(std::find(large.begin(), large.end(), d), large.end()) << "seed " << seed;
    }
  }
}

TEST(DownsampleTest, IndicesAreDistinctAndCoverUniformly) {
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto idx = sample_indices(20, 5, seed);
    ASSERT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 5u);
    for (const auto i : idx) ++hits[i];
  }
  for (const int h : hits) EXPECT_NEAR(h, 500, 90);
}

TEST(DownsampleTest, ReservoirPathMatchesSizeAndOrder) {
  const auto docs = numbered_docs(300);
  const auto s = downsample(docs, 40, 3, /*materialize_limit=*/10);
  ASSERT_EQ(s.size(), 40u);
  std::vector<std::size_t> positions;
  for (const auto& d : s) positions.push_back(std::stoul(d.id.substr(1)));
  EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
  EXPECT_EQ(std::set<std::size_t>(positions.begin(), positions.end()).size(), 40u);
}

TEST(SquadTest, ParsesNestedStructure) {
  const Json root = Json::parse(R"({"version": "1.1", "data": [{"title": "T", "paragraphs": [
      {"context": "Cells divide.", "qas": [
        {"id": "q1", "question": "What divides?", "answers": [{"text": "Cells", "answer_start": 0}]},
        {"id": "q2", "question": "  ", "answers": []}]}]}]})");
  const auto loaded = parse_squad(root, SplitName::kValidation);
  EXPECT_EQ(loaded.stats.records, 2u);
  EXPECT_EQ(loaded.stats.skipped, 1u);
  ASSERT_EQ(loaded.value.examples.size(), 1u);
  const auto& ex = loaded.value.examples[0];
  EXPECT_EQ(ex.id, "q1");
  EXPECT_EQ(ex.context, "Cells divide.");
  EXPECT_EQ(ex.question, "What divides?");
  EXPECT_EQ(ex.answer, "Cells");
  EXPECT_EQ(ex.source, Source::kSquad);
  EXPECT_EQ(loaded.value.name, SplitName::kValidation);
}

TEST(SquadTest, SchemaErrorNamesThePath) {
  const Json root = Json::parse(R"({"data": [{"paragraphs": [{"context": "x", "qas": [{"id": "q"}]}]}]})");
  try {
    parse_squad(root, SplitName::kTrain);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("$.data[0].paragraphs[0].qas[0].question"), std::string::npos) << e.what();
  }
}

TEST(SciqTest, ParsesFlatRecordsAndSkipsEmptySupport) {
  const Json root = Json::parse(R"([
      {"question": "What do lenses focus?", "distractor1": "a", "distractor2": "b", "distractor3": "c",
       "correct_answer": "light", "support": "Lenses focus light."},
      {"question": "Q?", "distractor1": "a", "distractor2": "b", "distractor3": "c",
       "correct_answer": "x", "support": ""}])");
  const auto loaded = parse_sciq(root, SplitName::kTest);
  EXPECT_EQ(loaded.stats.records, 2u);
  EXPECT_EQ(loaded.stats.skipped, 1u);
  ASSERT_EQ(loaded.value.examples.size(), 1u);
  EXPECT_EQ(loaded.value.examples[0].id, "sciq-test-0");
  EXPECT_EQ(loaded.value.examples[0].answer, "light");
  EXPECT_EQ(loaded.value.examples[0].source, Source::kSciq);
  EXPECT_THROW(parse_sciq(Json::object(), SplitName::kTest), SchemaError);
}

TEST(QgJsonlTest, RoundTripAndOverlap) {
  TempDir dir;
  auto examples = testing::science_examples();
  examples[1].answer = "starch";
  write_qg_jsonl(dir / "qg.jsonl", examples);
  EXPECT_EQ(read_qg_jsonl(dir / "qg.jsonl"), examples);
  EXPECT_TRUE(overlapping_ids(examples, {}).empty());
  EXPECT_EQ(overlapping_ids(examples, {examples[2]}), (std::vector<std::string>{examples[2].id}));
}

TEST(QgJsonlTest, MalformedLineReportsLineNumber) {
  TempDir dir;
  std::ofstream(dir / "x.jsonl") << R"({"id": "a", "context": "c", "question": "q"})" << "\n{broken\n";
  try {
    read_qg_jsonl(dir / "x.jsonl");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace eduqg
