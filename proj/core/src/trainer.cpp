#include "eduqg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/config.hpp"
#include "eduqg/error.hpp"
#include "eduqg/rng.hpp"
#include "eduqg/safetensors.hpp"

namespace eduqg {

namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed so order, corruption and dropout never share
// a random stream.
constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;
constexpr std::uint64_t kCorruptStream = 0x636f7272ULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;

TokenId pad_of(const Checkpoint& ckpt) {
  return ckpt.tokenizer ? ckpt.tokenizer->special().pad : 0;
}

}  // namespace

std::string to_string(Stage s) {
  return s == Stage::kPretrain ? "PRETRAIN" : "FINETUNE";
}

Stage stage_from_string(const std::string& s) {
  if (s == "PRETRAIN" || s == "pretrain") return Stage::kPretrain;
  if (s == "FINETUNE" || s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + s + "' (PRETRAIN or FINETUNE)");
}

void TrainSpec::validate() const {
  if (steps.has_value() == epochs.has_value()) {
    throw ConfigError("train spec needs exactly one of steps or epochs");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (log_every < 1) throw ConfigError("log_every must be at least 1");
  if (dataset_id.empty()) throw ConfigError("train spec needs a dataset_id");
  if (corruption.rate < 0.0 || corruption.rate >= 1.0) throw ConfigError("corruption rate must be in [0, 1)");
  if (corruption.mean_span_len < 1) throw ConfigError("mean_span_len must be at least 1");
  if (format.max_input_len < 1 || format.max_target_len < 1) throw ConfigError("max lengths must be positive");
  optimizer.validate();
}

Json TrainSpec::to_json() const {
  Json j;
  j["stage"] = to_string(stage);
  j["dataset_id"] = dataset_id;
  j["steps"] = steps ? Json(*steps) : Json(nullptr);
  j["epochs"] = epochs ? Json(*epochs) : Json(nullptr);
  j["batch_size"] = batch_size;
  j["optimizer"] = optimizer.to_json();
  j["seed"] = seed;
  j["log_every"] = log_every;
  j["eval_every"] = eval_every;
  j["early_stop_patience"] = early_stop_patience;
  j["corruption"] = {{"rate", corruption.rate}, {"mean_span_len", corruption.mean_span_len}};
  j["max_document_tokens"] = max_document_tokens;
  j["format"] = {{"prefix", format.prefix},
                 {"max_input_len", format.max_input_len},
                 {"max_target_len", format.max_target_len}};
  return j;
}

namespace {

void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

}  // namespace

TrainSpec TrainSpec::from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"stage", "dataset_id", "steps", "epochs", "batch_size", "optimizer", "seed", "log_every",
                       "eval_every", "early_stop_patience", "corruption", "max_document_tokens", "format"},
                      "train spec");
  if (const auto it = j.find("corruption"); it != j.end()) {
    reject_unknown_keys(*it, {"rate", "mean_span_len"}, "train spec corruption");
  }
  if (const auto it = j.find("format"); it != j.end()) {
    reject_unknown_keys(*it, {"prefix", "max_input_len", "max_target_len"}, "train spec format");
  }
  TrainSpec s;
  try {
    s.stage = stage_from_string(j.at("stage").get<std::string>());
    s.dataset_id = j.value("dataset_id", std::string());
    if (j.contains("steps") && !j["steps"].is_null()) s.steps = j["steps"].get<std::size_t>();
    if (j.contains("epochs") && !j["epochs"].is_null()) s.epochs = j["epochs"].get<std::size_t>();
    s.batch_size = j.value("batch_size", s.batch_size);
    if (s.stage == Stage::kPretrain) {
      s.optimizer.schedule = LrSchedule::kInverseSqrt;
      s.optimizer.lr = 1e-3;
      s.optimizer.warmup_steps = 100;
    }
    if (j.contains("optimizer")) {
      Json opt = s.optimizer.to_json();
      opt.merge_patch(j["optimizer"]);
      s.optimizer = OptimizerSpec::from_json(opt);
    }
    s.seed = j.value("seed", s.seed);
    s.log_every = j.value("log_every", s.log_every);
    s.eval_every = j.value("eval_every", s.eval_every);
    s.early_stop_patience = j.value("early_stop_patience", s.early_stop_patience);
    if (const auto it = j.find("corruption"); it != j.end()) {
      s.corruption.rate = it->value("rate", s.corruption.rate);
      s.corruption.mean_span_len = it->value("mean_span_len", s.corruption.mean_span_len);
    }
    s.max_document_tokens = j.value("max_document_tokens", s.max_document_tokens);
    if (const auto it = j.find("format"); it != j.end()) {
      s.format.prefix = it->value("prefix", s.format.prefix);
      s.format.max_input_len = it->value("max_input_len", s.format.max_input_len);
      s.format.max_target_len = it->value("max_target_len", s.format.max_target_len);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("train spec: ") + e.what());
  }
  s.validate();
  return s;
}

TrainSpec TrainSpec::load(const fs::path& path) {
  try {
    return from_json(load_config(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string TrainSpec::hash() const {
  return config_hash(to_json());
}

std::string TrainLog::to_csv() const {
  std::string out = "step,loss,lr,wall_time\n";
  for (const auto& r : records) {
    out += fmt::format("{},{:.17g},{:.17g},{:.6f}\n", r.step, r.loss, r.lr, r.wall_time);
  }
  return out;
}

void TrainLog::write_csv(const fs::path& path) const {
  write_file_atomic(path, to_csv());
}

TrainLog TrainLog::read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  TrainLog log;
  if (!std::getline(in, line) || trim(line) != "step,loss,lr,wall_time") {
    throw SchemaError(path.string() + ": expected header step,loss,lr,wall_time");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 4) throw SchemaError(fmt::format("{}:{}: expected 4 columns", path.string(), lineno));
    try {
      log.records.push_back({std::stoul(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
    } catch (const std::exception&) {
      throw SchemaError(fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  return log;
}

TrainingSet TrainingSet::denoising(std::vector<TokenSequence> sequences, CorruptionOptions options,
                                   SpecialIds special) {
  TrainingSet t;
  t.denoising_ = true;
  t.sequences_ = std::move(sequences);
  t.options_ = options;
  t.special_ = std::move(special);
  return t;
}

TrainingSet TrainingSet::supervised(std::vector<SeqPair> pairs) {
  TrainingSet t;
  t.pairs_ = std::move(pairs);
  return t;
}

std::size_t TrainingSet::size() const {
  return denoising_ ? sequences_.size() : pairs_.size();
}

SeqPair TrainingSet::example(std::size_t index, std::size_t epoch, std::uint64_t seed) const {
  if (!denoising_) {
    return pairs_.at(index);
  }
  const auto pair = corrupt_spans(sequences_.at(index), options_, derive_seed(seed, kCorruptStream, epoch, index),
                                  special_);
  return {pair.input, pair.target};
}

TrainingSet make_pretraining_set(const std::vector<Document>& docs, const Tokenizer& tokenizer,
                                 const TrainSpec& spec) {
  std::vector<TokenSequence> seqs;
  seqs.reserve(docs.size());
  for (const auto& doc : docs) {
    TokenSequence seq = tokenizer.encode(doc.abstract);
    if (seq.ids.size() > spec.max_document_tokens) seq.ids.resize(spec.max_document_tokens);
    if (seq.ids.size() >= 2) seqs.push_back(std::move(seq));
  }
  if (seqs.empty()) {
    throw InvalidArgument("pre-training document stream is empty");
  }
  return TrainingSet::denoising(std::move(seqs), spec.corruption, tokenizer.special());
}

TrainingSet make_finetuning_set(const DatasetSplit<QGExample>& split, const Tokenizer& tokenizer,
                                const TrainSpec& spec) {
  if (split.examples.empty()) {
    throw InvalidArgument("fine-tuning split is empty");
  }
  std::vector<SeqPair> pairs;
  pairs.reserve(split.examples.size());
  for (const auto& ex : split.examples) {
    pairs.push_back(make_qg_pair(ex, tokenizer, spec.format));
  }
  return TrainingSet::supervised(std::move(pairs));
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  if (n == 0 || batch_size == 0) throw InvalidArgument("steps_per_epoch: empty dataset or zero batch size");
  return (n + batch_size - 1) / batch_size;
}

std::size_t total_steps(const TrainSpec& spec, std::size_t n) {
  if (spec.steps) return *spec.steps;
  return *spec.epochs * steps_per_epoch(n, spec.batch_size);
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t step) {
  const std::size_t per_epoch = steps_per_epoch(n, batch_size);
  const std::size_t epoch = step / per_epoch;
  const std::size_t slot = step % per_epoch;
  const auto order = permutation(n, derive_seed(seed, kOrderStream, epoch));
  const std::size_t begin = slot * batch_size;
  const std::size_t end = std::min(n, begin + batch_size);
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

BatchLoss batch_loss(const ModelConfig& config, const ParameterSet& params, const std::vector<SeqPair>& batch,
                     TokenId pad, bool with_grads, std::optional<std::uint64_t> dropout_seed) {
  BatchLoss out;
  for (const auto& p : batch) {
    out.tokens += static_cast<std::size_t>(std::count_if(p.target.ids.begin(), p.target.ids.end(),
                                                         [pad](TokenId t) { return t != pad; }));
  }
  if (out.tokens == 0) {
    throw InvalidArgument("batch has no non-pad target tokens");
  }
  if (with_grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.grads.push_back(Matrix::Zero(params.at(i).rows(), params.at(i).cols()));
    }
  }
  const double weight = 1.0 / static_cast<double>(out.tokens);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Graph graph(with_grads);
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(derive_seed(*dropout_seed, k));
    const Var loss = build_seq2seq_loss(graph, config, params, batch[k].input.ids, batch[k].target.ids, pad, weight,
                                        rng ? &*rng : nullptr);
    out.loss += graph.value(loss)(0, 0);
    if (with_grads) {
      graph.backward(loss);
      graph.for_each_parameter_grad([&](std::size_t slot, const Matrix& g) { out.grads[slot] += g; });
    }
  }
  return out;
}

TrainSession::TrainSession(Checkpoint start, std::shared_ptr<const TrainingSet> data, TrainSpec spec,
                           std::shared_ptr<const TrainingSet> validation)
    : current_(std::move(start)),
      parent_provenance_(current_.provenance),
      data_(std::move(data)),
      validation_(std::move(validation)),
      spec_(std::move(spec)),
      adam_(spec_.optimizer, current_.params) {
  spec_.validate();
  if (!data_ || data_->size() == 0) {
    throw InvalidArgument("training set is empty");
  }
  total_ = total_steps(spec_, data_->size());
}

double TrainSession::validation_loss() const {
  const TokenId pad = pad_of(current_);
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (std::size_t begin = 0; begin < validation_->size(); begin += spec_.batch_size) {
    std::vector<SeqPair> batch;
    for (std::size_t i = begin; i < std::min(validation_->size(), begin + spec_.batch_size); ++i) {
      batch.push_back(validation_->example(i, 0, spec_.seed));
    }
    const auto bl = batch_loss(current_.config, current_.params, batch, pad, false);
    weighted += bl.loss * static_cast<double>(bl.tokens);
    tokens += bl.tokens;
  }
  return weighted / static_cast<double>(tokens);
}

void TrainSession::run_until(std::size_t limit) {
  limit = std::min(limit, total_);
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  const TokenId pad = pad_of(current_);
  const std::size_t per_epoch = steps_per_epoch(data_->size(), spec_.batch_size);
  while (step_ < limit && !log_.stopped_early) {
    const auto indices = batch_indices(data_->size(), spec_.batch_size, spec_.seed, step_);
    const std::size_t epoch = step_ / per_epoch;
    std::vector<SeqPair> batch;
    batch.reserve(indices.size());
    for (const auto i : indices) batch.push_back(data_->example(i, epoch, spec_.seed));
    auto bl = batch_loss(current_.config, current_.params, batch, pad, true,
                         derive_seed(spec_.seed, kDropoutStream, step_));
    if (!std::isfinite(bl.loss)) {
      throw TrainingError(fmt::format("non-finite loss {} at step {} ({}, epoch {}, first example {})", bl.loss,
                                      step_, spec_.dataset_id, epoch, indices.front()));
    }
    const double lr = learning_rate(spec_.optimizer, step_);
    adam_.step(current_.params, bl.grads);
    ++step_;
    if (step_ % spec_.log_every == 0 || step_ == total_) {
      log_.records.push_back({step_, bl.loss, lr, elapsed()});
      spdlog::debug("{} step {}/{} loss {:.4f} lr {:.3g}", spec_.dataset_id, step_, total_, bl.loss, lr);
    }
    if (validation_ && spec_.eval_every > 0 && step_ % spec_.eval_every == 0) {
      const double v = validation_loss();
      log_.evaluations.push_back({step_, v});
      if (spec_.early_stop_patience > 0) {
        if (log_.evaluations.size() == 1 || v < best_validation_) {
          best_validation_ = v;
          bad_evaluations_ = 0;
        } else if (++bad_evaluations_ >= spec_.early_stop_patience) {
          log_.stopped_early = true;
        }
      }
    }
  }
  wall_offset_ = elapsed();
}

Checkpoint TrainSession::checkpoint() const {
  Checkpoint out = current_;
  out.provenance = parent_provenance_;
  ProvenanceRecord r;
  r.stage = to_string(spec_.stage);
  r.dataset_id = spec_.dataset_id;
  r.steps = step_;
  r.seed = spec_.seed;
  r.examples = data_->size();
  r.spec_hash = spec_.hash();
  out.provenance.push_back(r);
  return out;
}

void TrainSession::save(const fs::path& dir) const {
  const Checkpoint ckpt = checkpoint();
  save_checkpoint(ckpt, dir);
  std::vector<NamedMatrix> moments;
  for (std::size_t i = 0; i < current_.params.size(); ++i) {
    moments.push_back({"m." + current_.params.name(i), &adam_.first_moment()[i], false});
    moments.push_back({"v." + current_.params.name(i), &adam_.second_moment()[i], false});
  }
  write_safetensors(dir / "optimizer.safetensors", moments);
  Json state;
  state["step"] = step_;
  state["adam_steps"] = adam_.steps_taken();
  state["spec"] = spec_.to_json();
  state["spec_hash"] = spec_.hash();
  state["parent_provenance"] = Json::array();
  for (const auto& r : parent_provenance_) state["parent_provenance"].push_back(r.to_json());
  state["log"] = Json::array();
  for (const auto& r : log_.records) state["log"].push_back({r.step, r.loss, r.lr, r.wall_time});
  state["evaluations"] = Json::array();
  for (const auto& e : log_.evaluations) state["evaluations"].push_back({e.step, e.validation_loss});
  state["stopped_early"] = log_.stopped_early;
  state["wall_time"] = wall_offset_;
  state["best_validation"] = best_validation_;
  state["bad_evaluations"] = bad_evaluations_;
  write_json(dir / "train_state.json", state);
}

TrainSession TrainSession::resume(const fs::path& dir, std::shared_ptr<const TrainingSet> data, TrainSpec spec,
                                  std::shared_ptr<const TrainingSet> validation) {
  const Json state = read_json(dir / "train_state.json");
  if (state.at("spec_hash").get<std::string>() != spec.hash()) {
    throw ConfigError(dir.string() + ": saved session was produced by a different train spec");
  }
  TrainSession session(load_checkpoint(dir), std::move(data), std::move(spec), std::move(validation));
  session.parent_provenance_.clear();
  for (const auto& r : state.at("parent_provenance")) {
    session.parent_provenance_.push_back(ProvenanceRecord::from_json(r));
  }
  session.current_.provenance = session.parent_provenance_;
  const SafeTensors moments = SafeTensors::read(dir / "optimizer.safetensors");
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < session.current_.params.size(); ++i) {
    const Matrix& p = session.current_.params.at(i);
    for (auto* target : {&m, &v}) {
      const std::string name = (target == &m ? "m." : "v.") + session.current_.params.name(i);
      if (!moments.contains(name)) throw SchemaError(dir.string() + ": optimizer state lacks " + name);
      const auto values = moments.values(name);
      if (values.size() != static_cast<std::size_t>(p.size())) {
        throw SchemaError(dir.string() + ": optimizer tensor " + name + " has the wrong size");
      }
      Matrix x(p.rows(), p.cols());
      std::copy(values.begin(), values.end(), x.data());
      target->push_back(std::move(x));
    }
  }
  session.adam_.restore(state.at("adam_steps").get<std::size_t>(), std::move(m), std::move(v));
  session.step_ = state.at("step").get<std::size_t>();
  for (const auto& r : state.at("log")) {
    session.log_.records.push_back(
        {r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()});
  }
  for (const auto& e : state.at("evaluations")) {
    session.log_.evaluations.push_back({e[0].get<std::size_t>(), e[1].get<double>()});
  }
  session.log_.stopped_early = state.value("stopped_early", false);
  session.wall_offset_ = state.value("wall_time", 0.0);
  session.best_validation_ = state.value("best_validation", 0.0);
  session.bad_evaluations_ = state.value("bad_evaluations", std::size_t{0});
  return session;
}

TrainResult pretrain(const Checkpoint& ckpt, const std::vector<Document>& docs, const TrainSpec& spec) {
  if (spec.stage != Stage::kPretrain) throw ConfigError("pretrain needs a PRETRAIN train spec");
  if (!ckpt.tokenizer) throw InvalidArgument("checkpoint has no tokenizer");
  auto data = std::make_shared<const TrainingSet>(make_pretraining_set(docs, *ckpt.tokenizer, spec));
  TrainSession session(ckpt, data, spec);
  session.run();
  return {session.checkpoint(), session.log()};
}

TrainResult finetune(const Checkpoint& ckpt, const DatasetSplit<QGExample>& examples, const TrainSpec& spec,
                     const DatasetSplit<QGExample>* validation) {
  if (spec.stage != Stage::kFinetune) throw ConfigError("finetune needs a FINETUNE train spec");
  if (!ckpt.tokenizer) throw InvalidArgument("checkpoint has no tokenizer");
  auto data = std::make_shared<const TrainingSet>(make_finetuning_set(examples, *ckpt.tokenizer, spec));
  std::shared_ptr<const TrainingSet> val;
  if (validation && !validation->examples.empty()) {
    val = std::make_shared<const TrainingSet>(make_finetuning_set(*validation, *ckpt.tokenizer, spec));
  }
  TrainSession session(ckpt, data, spec, val);
  session.run();
  return {session.checkpoint(), session.log()};
}

}  // namespace eduqg
