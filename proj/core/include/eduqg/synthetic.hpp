#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eduqg/io.hpp"

namespace eduqg {

/// Sizes of a generated corpus family. Science facts are shared between the
/// abstracts, the science QG splits and the scorer's reference text; events
/// (people, organisations, places, years) and everyday facts feed the
/// SQuAD-style splits.
struct SyntheticOptions {
  std::uint64_t seed = 7;
  std::size_t abstracts = 30000;
  double off_target_fraction = 0.2;  // abstracts outside Biology/Chemistry/Physics
  std::size_t squad_train = 3000;
  std::size_t squad_dev = 500;
  std::size_t sciq_train = 1500;
  std::size_t sciq_validation = 200;
  std::size_t sciq_test = 500;
  std::size_t reference_sentences = 20000;
  double first_sentence_fraction = 0.85;  // questions asked about the opening sentence
  double squad_general_fraction = 0.5;    // general-domain QG paragraphs built from everyday facts
};

/// Generated files in the datasets' native layouts.
struct SyntheticCorpus {
  std::vector<Json> abstracts;  // S2ORC-style records, one per JSON line
  Json squad_train;             // SQuAD v1.1 document
  Json squad_dev;
  Json sciq_train;  // SciQ arrays
  Json sciq_validation;
  Json sciq_test;
  std::vector<std::string> reference;  // plain sentences for the perplexity scorer
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

/// Writes s2orc/abstracts.jsonl, squad/train-v1.1.json, squad/dev-v1.1.json,
/// sciq/{train,valid,test}.json and reference/reference.txt under `dir`.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace eduqg
