#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "eduqg/io.hpp"
#include "eduqg/model.hpp"
#include "eduqg/tokenizer.hpp"

namespace eduqg {

/// One training stage that contributed to a checkpoint.
struct ProvenanceRecord {
  std::string stage;       // BASE, PRETRAIN or FINETUNE
  std::string dataset_id;  // e.g. init:toy, s2orc, squad, sciq
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::size_t examples = 0;  // size of the training set the stage consumed
  std::string spec_hash;     // hash of the stage's TrainSpec (empty for BASE)

  /// `STAGE:dataset`, e.g. FINETUNE:squad.
  std::string label() const;

  Json to_json() const;
  static ProvenanceRecord from_json(const Json& j);

  friend bool operator==(const ProvenanceRecord&, const ProvenanceRecord&) = default;
};

/// Parameters, shape and training history of one model. Treated as an
/// immutable value: training returns a new Checkpoint with one more
/// provenance record.
struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  std::vector<ProvenanceRecord> provenance;
  std::shared_ptr<const Tokenizer> tokenizer;

  std::vector<std::string> provenance_labels() const;
};

/// Fresh parameters for `config`; provenance = [BASE init:<base_name>].
/// config.vocab_size must cover the tokenizer.
Checkpoint init_model(const ModelConfig& config, std::shared_ptr<const Tokenizer> tokenizer, std::uint64_t seed,
                      const std::string& base_name = "toy");

/// Checkpoint directory: checkpoint.json (config, provenance, tensor index),
/// model.safetensors (F64) and vocab.txt.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Loads a native checkpoint directory, or a Hugging Face T5 directory
/// (config.json, model.safetensors and an exported spiece.vocab). Tensor
/// shape mismatches raise SchemaError naming the tensor.
Checkpoint load_base(const std::filesystem::path& dir);

/// Checks every tensor the config implies against `params`.
void validate_parameters(const ModelConfig& config, const ParameterSet& params);

}  // namespace eduqg
