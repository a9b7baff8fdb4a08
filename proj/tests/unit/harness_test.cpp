#include <gtest/gtest.h>

#include "eduqg/error.hpp"
#include "eduqg/harness.hpp"
#include "test_support.hpp"

namespace eduqg {
namespace {

using Labels = std::vector<std::string>;

std::vector<ProvenanceRecord> path_of(const Labels& labels, std::size_t pretrain_examples = 0) {
  std::vector<ProvenanceRecord> out = {{"BASE", "init:toy", 0, 0, 0, ""}};
  for (const auto& l : labels) {
    const auto colon = l.find(':');
    ProvenanceRecord r;
    r.stage = l.substr(0, colon);
    r.dataset_id = l.substr(colon + 1);
    if (r.stage == "PRETRAIN") r.examples = pretrain_examples;
    out.push_back(r);
  }
  return out;
}

TEST(HarnessTest, ExpectedPaths) {
  EXPECT_EQ(expected_path(ModelId::kLeaf), (Labels{"FINETUNE:squad"}));
  EXPECT_EQ(expected_path(ModelId::kEduqgSmall), (Labels{"PRETRAIN:s2orc", "FINETUNE:squad"}));
  EXPECT_EQ(expected_path(ModelId::kEduqgLarge), (Labels{"PRETRAIN:s2orc", "FINETUNE:squad"}));
  EXPECT_EQ(expected_path(ModelId::kLeafPlus), (Labels{"FINETUNE:squad", "FINETUNE:sciq"}));
  EXPECT_EQ(expected_path(ModelId::kEduqgPlus), (Labels{"PRETRAIN:s2orc", "FINETUNE:squad", "FINETUNE:sciq"}));
}

TEST(HarnessTest, ClassifyPath) {
  EXPECT_EQ(classify_path(path_of({"FINETUNE:squad"}), 10, 100), ModelId::kLeaf);
  EXPECT_EQ(classify_path(path_of({"PRETRAIN:s2orc", "FINETUNE:squad"}, 10), 10, 100), ModelId::kEduqgSmall);
  EXPECT_EQ(classify_path(path_of({"PRETRAIN:s2orc", "FINETUNE:squad"}, 100), 10, 100), ModelId::kEduqgLarge);
  EXPECT_EQ(classify_path(path_of({"FINETUNE:squad", "FINETUNE:sciq"}), 10, 100), ModelId::kLeafPlus);
  EXPECT_EQ(classify_path(path_of({"PRETRAIN:s2orc", "FINETUNE:squad", "FINETUNE:sciq"}, 100), 10, 100),
            ModelId::kEduqgPlus);
  EXPECT_EQ(classify_path(path_of({"PRETRAIN:s2orc", "FINETUNE:squad", "FINETUNE:sciq"}, 10), 10, 100),
            std::nullopt);
  EXPECT_EQ(classify_path(path_of({"FINETUNE:sciq", "FINETUNE:squad"}), 10, 100), std::nullopt);
  EXPECT_EQ(classify_path(path_of({"PRETRAIN:s2orc", "FINETUNE:squad"}, 50), 10, 100), std::nullopt);
  EXPECT_EQ(classify_path({}, 10, 100), std::nullopt);
}

TEST(HarnessTest, BaselinesAndRows) {
  EXPECT_EQ(baseline_of(ModelId::kLeaf), std::nullopt);
  EXPECT_EQ(baseline_of(ModelId::kEduqgSmall), ModelId::kLeaf);
  EXPECT_EQ(baseline_of(ModelId::kEduqgLarge), ModelId::kLeaf);
  EXPECT_EQ(baseline_of(ModelId::kLeafPlus), ModelId::kLeaf);
  EXPECT_EQ(baseline_of(ModelId::kEduqgPlus), ModelId::kEduqgLarge);
  EXPECT_EQ(report_rows(ReportStyle::kTable2),
            (std::vector<ModelId>{ModelId::kLeaf, ModelId::kEduqgSmall, ModelId::kEduqgLarge}));
  EXPECT_EQ(report_rows(ReportStyle::kTable4), (std::vector<ModelId>{ModelId::kLeafPlus, ModelId::kEduqgPlus}));
  for (const auto id : all_models()) EXPECT_EQ(model_from_string(to_string(id)), id);
  EXPECT_EQ(display_name(ModelId::kEduqgSmall), "EduQG Small");
  EXPECT_THROW(model_from_string("GPT"), ConfigError);
}

TEST(HarnessTest, ConfigRoundTripAndHash) {
  testing::TempDir dir;
  const Json j = testing::tiny_experiment(dir.path());
  const auto cfg = ExperimentConfig::from_json(j, dir.path());
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.pretrain_small, 50u);
  EXPECT_EQ(cfg.decode.beam_width, 2u);
  EXPECT_EQ(cfg.hash(), ExperimentConfig::from_json(j, dir.path()).hash());
  Json other = j;
  other["seed"] = 14;
  EXPECT_NE(ExperimentConfig::from_json(other, dir.path()).hash(), cfg.hash());
  Json bad = j;
  bad["models"] = {"LEAF", "NOPE"};
  EXPECT_THROW(ExperimentConfig::from_json(bad, dir.path()), ConfigError);
}

TEST(HarnessTest, MissingInputsFailBeforeTraining) {
  testing::TempDir dir;
  Json j = testing::tiny_experiment(dir.path());
  j["datasets"]["sciq_test"] = (dir / "absent.json").string();
  const auto cfg = ExperimentConfig::from_json(j, dir.path());
  EXPECT_THROW(run_matrix(cfg), IoError);
  EXPECT_FALSE(std::filesystem::exists(dir / "run" / "stages"));
}

TEST(HarnessTest, TinyMatrixBuildsAllPathsAndCaches) {
  testing::TempDir dir;
  const auto cfg = ExperimentConfig::from_json(testing::tiny_experiment(dir.path()), dir.path());
  const RunManifest first = run_matrix(cfg);
  ASSERT_EQ(first.models.size(), 5u);
  for (const auto& m : first.models) {
    ASSERT_EQ(m.status, "complete") << to_string(m.id) << ": " << m.error;
    Labels labels;
    for (std::size_t i = 1; i < m.provenance.size(); ++i) labels.push_back(m.provenance[i].label());
    EXPECT_EQ(labels, expected_path(m.id));
    EXPECT_EQ(classify_path(m.provenance, 50, 200), m.id);
    EXPECT_TRUE(std::filesystem::exists(cfg.run_dir / m.questions));
    EXPECT_TRUE(std::filesystem::exists(cfg.run_dir / m.report));
    EXPECT_EQ(m.stage_keys.size(), m.provenance.size());
  }
  EXPECT_EQ(first.human.size(), 2u);
  EXPECT_EQ(first.significance.size(), 4u * 5u);
  EXPECT_GT(first.cache_misses, 0u);

  const RunManifest loaded = RunManifest::load(cfg.run_dir);
  EXPECT_EQ(loaded.content_hash(), first.content_hash());

  const RunManifest second = run_matrix(cfg);
  EXPECT_EQ(second.cache_misses, 0u);
  EXPECT_GT(second.cache_hits, 0u);
  EXPECT_EQ(second.content_hash(), first.content_hash());

  const auto table2 = testing::parse_markdown_table(report_from_manifest(cfg.run_dir, ReportStyle::kTable2).text);
  ASSERT_EQ(table2.size(), 4u);
  EXPECT_EQ(table2[1][0], "Leaf");
  EXPECT_EQ(table2[2][0], "EduQG Small");
  EXPECT_EQ(table2[3][0], "EduQG Large");
  const auto table4 = testing::parse_markdown_table(report_from_manifest(cfg.run_dir, ReportStyle::kTable4).text);
  ASSERT_EQ(table4.size(), 3u);
  EXPECT_EQ(table4[1][0], "Leaf+");
  const auto table1 = testing::parse_markdown_table(report_from_manifest(cfg.run_dir, ReportStyle::kTable1).text);
  ASSERT_EQ(table1.size(), 3u);
  EXPECT_EQ(table1[2][0], "SciQ");

  const auto examples = testing::parse_markdown_table(examples_from_manifest(cfg.run_dir, 5, 1));
  ASSERT_EQ(examples.size(), 6u);
  EXPECT_EQ(examples[0].size(), 6u);
}

TEST(HarnessTest, FailedModelDoesNotStopTheOthers) {
  testing::TempDir dir;
  Json j = testing::tiny_experiment(dir.path());
  j["train"]["pretrain"]["corruption"] = {{"rate", 0.999}, {"mean_span_len", 3}};
  const auto cfg = ExperimentConfig::from_json(j, dir.path());
  const RunManifest m = run_matrix(cfg);
  for (const auto& o : m.models) {
    const bool pretrained = expected_path(o.id).front() == "PRETRAIN:s2orc";
    EXPECT_EQ(o.status, pretrained ? "failed" : "complete") << to_string(o.id);
    if (pretrained) {
      EXPECT_FALSE(o.error.empty());
    }
  }
  for (const auto& s : m.significance) {
    EXPECT_EQ(s.candidate_id, "LEAF_PLUS");
  }
  EXPECT_NO_THROW(report_from_manifest(cfg.run_dir, ReportStyle::kTable2));
}

}  // namespace
}  // namespace eduqg
