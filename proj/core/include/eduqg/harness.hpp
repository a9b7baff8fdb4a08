#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eduqg/checkpoint.hpp"
#include "eduqg/generation.hpp"
#include "eduqg/metrics.hpp"
#include "eduqg/report.hpp"
#include "eduqg/trainer.hpp"

namespace eduqg {

enum class ModelId { kLeaf, kEduqgSmall, kEduqgLarge, kLeafPlus, kEduqgPlus };

std::string to_string(ModelId id);  // LEAF, EDUQG_SMALL, ...
ModelId model_from_string(const std::string& s);
std::string display_name(ModelId id);  // Leaf, EduQG Small, ...
const std::vector<ModelId>& all_models();

/// Stage labels after BASE for each model, e.g. LEAF_PLUS ->
/// [FINETUNE:squad, FINETUNE:sciq].
std::vector<std::string> expected_path(ModelId id);

/// Which of the five paths a provenance list follows; the pre-training
/// sample size separates EDUQG_SMALL from EDUQG_LARGE.
std::optional<ModelId> classify_path(const std::vector<ProvenanceRecord>& provenance, std::size_t small_size,
                                     std::size_t large_size);

/// Designated significance baseline: LEAF for EDUQG_SMALL/LARGE and
/// LEAF_PLUS, EDUQG_LARGE for EDUQG_PLUS.
std::optional<ModelId> baseline_of(ModelId id);

/// Models a report style shows, in row order.
std::vector<ModelId> report_rows(ReportStyle style);

struct DatasetPaths {
  std::filesystem::path s2orc;
  std::string s2orc_schema = "s2orc";
  std::set<std::string> s2orc_fields = {"Biology", "Chemistry", "Physics"};
  std::filesystem::path squad_train;
  std::optional<std::filesystem::path> squad_validation;
  std::filesystem::path sciq_train;
  std::optional<std::filesystem::path> sciq_validation;
  std::filesystem::path sciq_test;
};

struct BaseSpec {
  std::string preset = "toy";  // toy, or t5_small_compat with `path`
  std::optional<std::filesystem::path> path;
  VocabOptions vocab;
  Json model_overrides = Json::object();  // merged into the preset's ModelConfig
};

struct ExperimentConfig {
  std::filesystem::path run_dir;
  std::uint64_t seed = 13;
  std::vector<ModelId> models = all_models();
  BaseSpec base;
  DatasetPaths datasets;
  std::size_t pretrain_small = 2000;
  std::size_t pretrain_large = 20000;
  TrainSpec pretrain;
  TrainSpec finetune_squad;
  TrainSpec finetune_sciq;
  DecodeSpec decode;
  Json scorer = Json::object();
  std::optional<std::size_t> test_limit;
  bool distinct2 = false;

  void validate() const;
  /// Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const Json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  Json to_json() const;
  /// Hash of the resolved configuration.
  std::string hash() const;
};

struct ModelOutcome {
  ModelId id = ModelId::kLeaf;
  std::string status;  // complete or failed
  std::string error;
  std::vector<ProvenanceRecord> provenance;
  std::vector<std::string> stage_keys;
  std::filesystem::path checkpoint;
  std::filesystem::path questions;
  std::filesystem::path report;
  std::filesystem::path per_example;
};

struct HumanBaseline {
  std::string dataset;
  double perplexity = 0.0;
  double diversity = 0.0;
  std::size_t questions = 0;
  std::string scorer_id;

  Json to_json() const;
  static HumanBaseline from_json(const Json& j);
};

/// Perplexity and diversity of the reference questions themselves.
HumanBaseline human_baseline(const std::string& name, const DatasetSplit<QGExample>& split,
                             const LanguageScorer& scorer);

struct RunManifest {
  std::string config_hash;
  Json config;
  std::string started_at;
  std::string finished_at;
  std::vector<ModelOutcome> models;
  std::vector<SignificanceResult> significance;
  std::vector<HumanBaseline> human;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;

  /// Hash over everything except timestamps and cache counters.
  std::string content_hash() const;
  const ModelOutcome* find(ModelId id) const;

  Json to_json() const;
  static RunManifest from_json(const Json& j);
  void save(const std::filesystem::path& run_dir) const;
  static RunManifest load(const std::filesystem::path& run_dir);
};

/// Significance of every candidate against its designated baseline on
/// bleu1..bleu4 and f1 (models absent from `reports` are skipped).
std::vector<SignificanceResult> significance_tests(const std::map<ModelId, MetricReport>& reports);

/// Builds every enabled model along its path (stage outputs cached under
/// run_dir/stages), generates on the science test contexts, evaluates and
/// writes run_dir/manifest.json. Missing datasets fail before training.
RunManifest run_matrix(const ExperimentConfig& config);

/// Report text for a finished run.
RenderedReport report_from_manifest(const std::filesystem::path& run_dir, ReportStyle style);

/// Examples table from a finished run's saved questions.
std::string examples_from_manifest(const std::filesystem::path& run_dir, std::size_t k, std::uint64_t seed);

}  // namespace eduqg
