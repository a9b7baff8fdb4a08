#include "eduqg/checkpoint.hpp"

#include <functional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "eduqg/error.hpp"
#include "eduqg/safetensors.hpp"

namespace eduqg {

namespace fs = std::filesystem;

std::string ProvenanceRecord::label() const {
  return stage + ":" + dataset_id;
}

Json ProvenanceRecord::to_json() const {
  return Json{{"stage", stage},       {"dataset_id", dataset_id}, {"steps", steps},
              {"seed", seed},         {"examples", examples},     {"spec_hash", spec_hash}};
}

ProvenanceRecord ProvenanceRecord::from_json(const Json& j) {
  ProvenanceRecord r;
  try {
    r.stage = j.at("stage").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.steps = j.value("steps", std::size_t{0});
    r.seed = j.value("seed", std::uint64_t{0});
    r.examples = j.value("examples", std::size_t{0});
    r.spec_hash = j.value("spec_hash", std::string());
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("provenance record: ") + e.what());
  }
  return r;
}

std::vector<std::string> Checkpoint::provenance_labels() const {
  std::vector<std::string> out;
  for (const auto& r : provenance) {
    out.push_back(r.label());
  }
  return out;
}

Checkpoint init_model(const ModelConfig& config, std::shared_ptr<const Tokenizer> tokenizer, std::uint64_t seed,
                      const std::string& base_name) {
  config.validate();
  if (tokenizer && tokenizer->vocab_size() > config.vocab_size) {
    throw ConfigError(fmt::format("model vocab_size {} smaller than tokenizer vocabulary {}", config.vocab_size,
                                  tokenizer->vocab_size()));
  }
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = init_parameters(config, seed);
  ckpt.tokenizer = std::move(tokenizer);
  ProvenanceRecord base;
  base.stage = "BASE";
  base.dataset_id = "init:" + base_name;
  base.seed = seed;
  ckpt.provenance.push_back(base);
  return ckpt;
}

void validate_parameters(const ModelConfig& config, const ParameterSet& params) {
  for (const auto& shape : parameter_layout(config)) {
    const auto slot = params.find(shape.name);
    if (!slot) {
      throw SchemaError("checkpoint is missing tensor " + shape.name);
    }
    const Matrix& m = params.at(*slot);
    if (m.rows() != shape.rows || m.cols() != shape.cols) {
      throw SchemaError(fmt::format("tensor {} has shape {}x{}, config expects {}x{}", shape.name, m.rows(), m.cols(),
                                    shape.rows, shape.cols));
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  validate_parameters(ckpt.config, ckpt.params);
  fs::create_directories(dir);
  std::vector<NamedMatrix> tensors;
  Json index = Json::object();
  for (const auto& shape : parameter_layout(ckpt.config)) {
    const Matrix& m = ckpt.params.get(shape.name);
    tensors.push_back({shape.name, &m, shape.is_vector});
    index[shape.name] = shape.is_vector ? Json::array({m.size()}) : Json::array({m.rows(), m.cols()});
  }
  write_safetensors(dir / "model.safetensors", tensors, {{"format", "eduqg"}});
  Json manifest;
  manifest["format"] = "eduqg-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = ckpt.config.to_json();
  manifest["provenance"] = Json::array();
  for (const auto& r : ckpt.provenance) {
    manifest["provenance"].push_back(r.to_json());
  }
  manifest["tensors"] = "model.safetensors";
  manifest["tensor_index"] = index;
  if (ckpt.tokenizer) {
    ckpt.tokenizer->save(dir / "vocab.txt");
    manifest["vocabulary"] = "vocab.txt";
    manifest["vocabulary_fingerprint"] = ckpt.tokenizer->fingerprint();
  }
  write_json(dir / "checkpoint.json", manifest);
}

namespace {

ParameterSet read_parameters(const ModelConfig& config, const SafeTensors& file, const fs::path& origin,
                             const std::function<std::string(const std::string&)>& rename) {
  ParameterSet params;
  for (const auto& shape : parameter_layout(config)) {
    const std::string stored = rename(shape.name);
    const auto it = file.tensors().find(stored);
    if (it == file.tensors().end()) {
      throw SchemaError(fmt::format("{}: missing tensor {}", origin.string(), stored));
    }
    const auto& dims = it->second.shape;
    const bool ok = shape.is_vector ? (dims.size() == 1 && dims[0] == shape.cols)
                                    : (dims.size() == 2 && dims[0] == shape.rows && dims[1] == shape.cols);
    if (!ok) {
      std::string got;
      for (const auto d : dims) {
        got += (got.empty() ? "" : "x") + std::to_string(d);
      }
      throw SchemaError(fmt::format("{}: tensor {} has shape [{}], config expects {}x{}", origin.string(), stored, got,
                                    shape.rows, shape.cols));
    }
    const auto values = file.values(stored);
    Matrix m(shape.rows, shape.cols);
    std::copy(values.begin(), values.end(), m.data());
    params.add(shape.name, std::move(m));
  }
  return params;
}

Checkpoint load_native(const fs::path& dir) {
  const Json manifest = read_json(dir / "checkpoint.json");
  if (manifest.value("format", std::string()) != "eduqg-checkpoint") {
    throw SchemaError((dir / "checkpoint.json").string() + ": not an eduqg checkpoint manifest");
  }
  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(manifest.at("config"));
  for (const auto& r : manifest.at("provenance")) {
    ckpt.provenance.push_back(ProvenanceRecord::from_json(r));
  }
  const fs::path tensor_path = dir / manifest.value("tensors", std::string("model.safetensors"));
  ckpt.params = read_parameters(ckpt.config, SafeTensors::read(tensor_path), tensor_path,
                                [](const std::string& name) { return name; });
  if (manifest.contains("vocabulary")) {
    ckpt.tokenizer = std::make_shared<const Tokenizer>(
        Tokenizer::load(dir / manifest.at("vocabulary").get<std::string>(), 0));
    if (ckpt.tokenizer->vocab_size() > ckpt.config.vocab_size) {
      throw SchemaError(fmt::format("{}: vocabulary of {} exceeds model vocab_size {}", dir.string(),
                                    ckpt.tokenizer->vocab_size(), ckpt.config.vocab_size));
    }
  }
  return ckpt;
}

Checkpoint load_hf_t5(const fs::path& dir) {
  const Json hf = read_json(dir / "config.json");
  ModelConfig c;
  try {
    c.vocab_size = hf.at("vocab_size").get<std::size_t>();
    c.d_model = hf.at("d_model").get<std::size_t>();
    c.num_layers = hf.at("num_layers").get<std::size_t>();
    c.num_heads = hf.at("num_heads").get<std::size_t>();
    c.feedforward_dim = hf.at("d_ff").get<std::size_t>();
    c.dropout = hf.value("dropout_rate", 0.1);
    c.relative_buckets = hf.value("relative_attention_num_buckets", std::size_t{32});
    c.relative_max_distance = hf.value("relative_attention_max_distance", std::size_t{128});
    c.layer_norm_eps = hf.value("layer_norm_epsilon", 1e-6);
    c.tie_embeddings = hf.value("tie_word_embeddings", true);
    if (hf.value("num_decoder_layers", c.num_layers) != c.num_layers) {
      throw ConfigError("encoder and decoder depths differ");
    }
    if (hf.value("d_kv", c.d_model / c.num_heads) * c.num_heads != c.d_model) {
      throw ConfigError("d_kv * num_heads must equal d_model");
    }
    if (hf.value("feed_forward_proj", std::string("relu")) != "relu") {
      throw ConfigError("only the ReLU feed-forward variant is supported");
    }
  } catch (const Json::exception& e) {
    throw ConfigError((dir / "config.json").string() + ": " + e.what());
  }
  c.validate();
  Checkpoint ckpt;
  ckpt.config = c;
  const fs::path tensor_path = dir / "model.safetensors";
  const SafeTensors file = SafeTensors::read(tensor_path);
  ckpt.params = read_parameters(c, file, tensor_path, [&](const std::string& name) {
    if (name == "shared.weight" && !file.contains(name) && file.contains("encoder.embed_tokens.weight")) {
      return std::string("encoder.embed_tokens.weight");
    }
    return name;
  });
  const fs::path vocab = dir / "spiece.vocab";
  if (!fs::exists(vocab)) {
    throw IoError(vocab.string() + " not found (export spiece.model with spm_export_vocab)");
  }
  auto tok = Tokenizer::load(vocab, 0);
  const std::size_t extra = c.vocab_size >= tok.vocab_size() + 100 ? 100 : 0;
  ckpt.tokenizer = std::make_shared<const Tokenizer>(Tokenizer::load(vocab, extra));
  if (ckpt.tokenizer->vocab_size() > c.vocab_size) {
    throw SchemaError("tokenizer vocabulary exceeds model vocab_size");
  }
  ProvenanceRecord base;
  base.stage = "BASE";
  base.dataset_id = "hf:" + dir.filename().string();
  ckpt.provenance.push_back(base);
  return ckpt;
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& dir) {
  return load_native(dir);
}

Checkpoint load_base(const fs::path& dir) {
  if (fs::exists(dir / "checkpoint.json")) {
    return load_native(dir);
  }
  if (fs::exists(dir / "config.json") && fs::exists(dir / "model.safetensors")) {
    return load_hf_t5(dir);
  }
  throw IoError(dir.string() + ": neither checkpoint.json nor a Hugging Face T5 directory");
}

}  // namespace eduqg
