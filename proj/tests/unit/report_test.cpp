#include <gtest/gtest.h>

#include "eduqg/error.hpp"
#include "eduqg/report.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

MetricReport fixture(const std::string& id, std::array<double, 4> bleu, double f1, double ppl, double div) {
  MetricReport r;
  r.model_id = id;
  r.scorer_id = "kn3";
  r.corpus.bleu = bleu;
  r.corpus.f1 = f1;
  r.corpus.perplexity = ppl;
  r.corpus.diversity = div;
  return r;
}

SignificanceResult sig(const std::string& candidate, const std::string& metric, bool significant) {
  SignificanceResult s;
  s.baseline_id = "base";
  s.candidate_id = candidate;
  s.metric = metric;
  s.significant = significant;
  return s;
}

// Hand-ranked expectations: BLEU-1 distinct values, BLEU-2 a tie for best,
// BLEU-3 a tie for second, BLEU-2 of the last row set to 4 below, BLEU-4 all equal, perplexity lower-is-better,
// diversity differing only past the printed precision.
const std::vector<MetricReport>& fixtures() {
  static const std::vector<MetricReport> r = {
      fixture("base", {30.0, 5.0, 3.0, 1.0}, 20.0, 10.0, 0.1201),
      fixture("mid", {20.0, 5.0, 2.0, 1.0}, 25.0, 12.0, 0.1204),
      fixture("top", {10.0, 1.0, 2.0, 1.0}, 15.0, 8.0, 0.0500),
  };
  return r;
}

const std::vector<std::vector<std::string>> kExpected = {
    {"base", "**30.00**", "**5.00**", "**3.00**", "**1.00**", "*20.00*", "*10.00*", "**0.120**"},
    {"mid", "*20.00* (*)", "**5.00**", "*2.00*", "**1.00** (*)", "**25.00** (*)", "12.00", "**0.120**"},
    {"top", "10.00", "*4.00*", "*2.00*", "**1.00**", "15.00", "**8.00**", "*0.050*"},
};

TEST(ReportTest, ColumnsPerStyle) {
  EXPECT_EQ(report_columns(ReportStyle::kTable1).size(), 2u);
  const auto cols = report_columns(ReportStyle::kTable2);
  ASSERT_EQ(cols.size(), 7u);
  EXPECT_EQ(cols[0].header, "BLEU-1");
  EXPECT_TRUE(cols[5].lower_is_better);
  EXPECT_EQ(report_style_from_string("table4"), ReportStyle::kTable4);
  EXPECT_THROW(report_style_from_string("table3"), ConfigError);
}

TEST(ReportTest, BoldItalicAndSignificanceMatchHandRanking) {
  auto reports = fixtures();
  reports[2].corpus.bleu[1] = 4.0;
  const std::vector<SignificanceResult> s = {sig("mid", "bleu1", true), sig("mid", "bleu4", true),
                                             sig("mid", "f1", true), sig("top", "f1", false)};
  const auto rendered = render_report(reports, s, ReportStyle::kTable2);
  const auto rows = testing::parse_markdown_table(rendered.text);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][1], "BLEU-1 ↑");
  EXPECT_EQ(rows[0][6], "Perplexity ↓");
  for (std::size_t i = 0; i < kExpected.size(); ++i) EXPECT_EQ(rows[i + 1], kExpected[i]) << "row " << i;
  EXPECT_NE(rendered.text.find("(*) one-tailed paired t-test"), std::string::npos);
  EXPECT_NE(rendered.text.find("Perplexity scorer: kn3"), std::string::npos);
}

TEST(ReportTest, SingleRowHasNoMarks) {
  const auto rendered = render_report({fixtures()[0]}, {}, ReportStyle::kTable2);
  const auto rows = testing::parse_markdown_table(rendered.text);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][1], "30.00");
  EXPECT_EQ(rendered.text.find('*'), rendered.text.find("(*) one-tailed") + 1);
}

TEST(ReportTest, DisplayNamesAndCsv) {
  RenderOptions opts;
  opts.display_name = [](const std::string& id) { return id == "mid" ? "Mid, model" : id; };
  opts.title = "Fixture";
  const auto rendered = render_report(fixtures(), {sig("mid", "f1", true)}, ReportStyle::kTable1, opts);
  EXPECT_EQ(rendered.text.rfind("Fixture\n\n", 0), 0u);
  const auto rows = testing::parse_markdown_table(rendered.text);
  ASSERT_EQ(rows[0].size(), 3u);
  EXPECT_EQ(rows[2][0], "Mid, model");
  EXPECT_NE(rendered.csv.find("\"Mid, model\","), std::string::npos);
  EXPECT_EQ(rendered.csv.substr(0, rendered.csv.find('\n')), "model,perplexity,diversity,significant");
  EXPECT_THROW(render_report({}, {}, ReportStyle::kTable2), InvalidArgument);
}

TEST(ReportTest, ExampleIndicesAreSortedSeededSubsets) {
  const auto a = example_indices(20, 5, 3);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(a, example_indices(20, 5, 3));
  EXPECT_NE(a, example_indices(20, 5, 4));
  EXPECT_EQ(example_indices(3, 3, 1), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(example_indices(3, 5, 1), InvalidArgument);
}

TEST(ReportTest, ExamplesTableShowsSelectedRows) {
  const std::vector<std::string> contexts = {"c0", "c1", "c2", "c3"};
  const std::vector<std::vector<std::string>> questions = {{"a0", "a1", "a2", "a3"}, {"b0", "b1", "b2", "b3"}};
  const auto text = examples_table({"A", "B"}, questions, contexts, 2, 9);
  const auto rows = testing::parse_markdown_table(text);
  ASSERT_EQ(rows.size(), 3u);
  const auto idx = example_indices(4, 2, 9);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto i = std::to_string(idx[r]);
    EXPECT_NE(std::find(rows[r + 1].begin(), rows[r + 1].end(), "c" + i), rows[r + 1].end());
    EXPECT_NE(std::find(rows[r + 1].begin(), rows[r + 1].end(), "a" + i), rows[r + 1].end());
    EXPECT_NE(std::find(rows[r + 1].begin(), rows[r + 1].end(), "b" + i), rows[r + 1].end());
  }
}

}  // namespace
}  // namespace eduqg
