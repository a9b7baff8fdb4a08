#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eduqg/checkpoint.hpp"
#include "eduqg/datasets.hpp"
#include "eduqg/optimizer.hpp"
#include "eduqg/textproc.hpp"

namespace eduqg {

enum class Stage { kPretrain, kFinetune };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// Everything that determines one training stage's result.
struct TrainSpec {
  Stage stage = Stage::kFinetune;
  std::string dataset_id;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> epochs;
  std::size_t batch_size = 8;
  OptimizerSpec optimizer;
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
  std::size_t eval_every = 0;        // validation-loss interval, 0 = off
  std::size_t early_stop_patience = 0;  // evaluations without improvement, 0 = off

  CorruptionOptions corruption;         // PRETRAIN
  std::size_t max_document_tokens = 512;  // PRETRAIN: abstracts are tail-truncated first
  QGFormat format;                      // FINETUNE

  /// Throws ConfigError unless exactly one of steps/epochs is set and
  /// batch_size >= 1.
  void validate() const;

  Json to_json() const;
  static TrainSpec from_json(const Json& j);
  static TrainSpec load(const std::filesystem::path& path);

  /// Hash of the canonical JSON form.
  std::string hash() const;
};

struct TrainRecord {
  std::size_t step = 0;  // optimizer steps completed
  double loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since the stage started

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct EvalRecord {
  std::size_t step = 0;
  double validation_loss = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::vector<EvalRecord> evaluations;
  bool stopped_early = false;

  /// step,loss,lr,wall_time
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static TrainLog read_csv(const std::filesystem::path& path);
};

/// Tokenized training examples. Denoising sets hold raw sequences and corrupt
/// them afresh each epoch; supervised sets hold fixed pairs.
class TrainingSet {
 public:
  static TrainingSet denoising(std::vector<TokenSequence> sequences, CorruptionOptions options, SpecialIds special);
  static TrainingSet supervised(std::vector<SeqPair> pairs);

  std::size_t size() const;

  /// Example `index` as seen in `epoch`; deterministic in (seed, epoch, index).
  SeqPair example(std::size_t index, std::size_t epoch, std::uint64_t seed) const;

 private:
  bool denoising_ = false;
  std::vector<TokenSequence> sequences_;
  std::vector<SeqPair> pairs_;
  CorruptionOptions options_;
  SpecialIds special_;
};

TrainingSet make_pretraining_set(const std::vector<Document>& docs, const Tokenizer& tokenizer, const TrainSpec& spec);
TrainingSet make_finetuning_set(const DatasetSplit<QGExample>& split, const Tokenizer& tokenizer,
                                const TrainSpec& spec);

/// Dataset indices forming batch `step`: the (seed, epoch) permutation of
/// [0, n) cut into consecutive batches.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step);

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);
std::size_t total_steps(const TrainSpec& spec, std::size_t n);

struct BatchLoss {
  double loss = 0.0;          // mean cross-entropy over non-pad target tokens
  std::size_t tokens = 0;
  std::vector<Matrix> grads;  // empty unless requested
};

/// Mean token cross-entropy of a batch. Throws InvalidArgument when every
/// target token is padding. `dropout_seed` absent disables dropout.
BatchLoss batch_loss(const ModelConfig& config, const ParameterSet& params, const std::vector<SeqPair>& batch,
                     TokenId pad, bool with_grads, std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// A resumable training loop. Batch order, corruption and dropout are pure
/// functions of (spec.seed, step), so stopping after N steps, saving and
/// resuming reproduces an uninterrupted run exactly.
class TrainSession {
 public:
  TrainSession(Checkpoint start, std::shared_ptr<const TrainingSet> data, TrainSpec spec,
               std::shared_ptr<const TrainingSet> validation = nullptr);

  /// Runs until `limit` total steps (or the end of the stage).
  void run_until(std::size_t limit);
  void run() { run_until(total_); }

  bool done() const { return step_ >= total_ || log_.stopped_early; }
  std::size_t step() const { return step_; }
  std::size_t total() const { return total_; }
  const TrainLog& log() const { return log_; }

  /// Current parameters with this stage's provenance record appended.
  Checkpoint checkpoint() const;

  /// Checkpoint plus optimizer moments and loop state.
  void save(const std::filesystem::path& dir) const;
  static TrainSession resume(const std::filesystem::path& dir, std::shared_ptr<const TrainingSet> data,
                             TrainSpec spec, std::shared_ptr<const TrainingSet> validation = nullptr);

 private:
  double validation_loss() const;

  Checkpoint current_;
  std::vector<ProvenanceRecord> parent_provenance_;
  std::shared_ptr<const TrainingSet> data_;
  std::shared_ptr<const TrainingSet> validation_;
  TrainSpec spec_;
  Adam adam_;
  std::size_t step_ = 0;
  std::size_t total_ = 0;
  TrainLog log_;
  double wall_offset_ = 0.0;
  double best_validation_ = 0.0;
  std::size_t bad_evaluations_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

/// Continued pre-training on span-corrupted abstracts. Throws on an empty
/// document stream or a non-PRETRAIN spec.
TrainResult pretrain(const Checkpoint& ckpt, const std::vector<Document>& docs, const TrainSpec& spec);

/// Supervised question-generation fine-tuning.
TrainResult finetune(const Checkpoint& ckpt, const DatasetSplit<QGExample>& examples, const TrainSpec& spec,
                     const DatasetSplit<QGExample>* validation = nullptr);

}  // namespace eduqg
