#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eduqg/graph.hpp"
#include "eduqg/io.hpp"
#include "eduqg/tokenizer.hpp"

namespace eduqg {

/// Encoder-decoder shape. Both stacks use `num_layers` blocks.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t feedforward_dim = 256;
  double dropout = 0.1;
  std::size_t relative_buckets = 32;
  std::size_t relative_max_distance = 128;
  double layer_norm_eps = 1e-6;
  bool tie_embeddings = true;

  std::size_t head_dim() const { return d_model / num_heads; }

  /// Throws ConfigError when a count is zero, d_model % num_heads != 0 or
  /// dropout is outside [0, 1).
  void validate() const;

  Json to_json() const;
  static ModelConfig from_json(const Json& j);

  /// d_model 64, 2 + 2 layers, 4 heads, feed-forward 256.
  static ModelConfig toy(std::size_t vocab_size);
  /// T5-Small (60M parameters): d_model 512, 6 + 6 layers, 8 heads, 2048.
  static ModelConfig t5_small(std::size_t vocab_size = 32128);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named tensors in a fixed order. Vectors (norm gains) are 1 x d.
class ParameterSet {
 public:
  void add(std::string name, Matrix value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t slot) const { return names_[slot]; }
  const Matrix& at(std::size_t slot) const { return values_[slot]; }
  Matrix& at(std::size_t slot) { return values_[slot]; }
  std::optional<std::size_t> find(std::string_view name) const;
  const Matrix& get(std::string_view name) const;

  std::size_t total_elements() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TensorShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool is_vector = false;  // stored as a 1-D tensor on disk
};

/// Every parameter the config implies, in canonical order. Names follow the
/// Hugging Face T5 layout so public checkpoints map one-to-one.
std::vector<TensorShape> parameter_layout(const ModelConfig& config);

/// T5 initialization scheme, deterministic in seed.
ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed);

/// T5 relative-position bucket for memory_position - query_position.
std::int32_t relative_position_bucket(std::int64_t relative_position, bool bidirectional, std::size_t num_buckets,
                                      std::size_t max_distance);

/// Decoder input for teacher forcing: [pad] + target[0 .. n-1).
std::vector<TokenId> shift_right(std::span<const TokenId> target, TokenId start);

/// Scores one (input, target) pair on a recording graph and returns the
/// weighted cross-entropy node. Target positions equal to `pad` are
/// masked. `dropout_rng` null or config.dropout == 0 disables dropout.
Var build_seq2seq_loss(Graph& graph, const ModelConfig& config, const ParameterSet& params,
                       std::span<const TokenId> input, std::span<const TokenId> target, TokenId pad, double weight,
                       Rng* dropout_rng);

/// Per-position next-token log-probabilities (rows = decoder positions,
/// cols = vocabulary) for decoder input `decoder_input`. Dropout off.
Matrix forward_log_probs(const ModelConfig& config, const ParameterSet& params, std::span<const TokenId> input,
                         std::span<const TokenId> decoder_input);

/// Encoder output plus the cross-attention keys/values of every decoder
/// block, computed once per context.
struct EncodedInput {
  Matrix hidden;
  std::vector<Matrix> cross_keys;
  std::vector<Matrix> cross_values;
};

/// Self-attention cache of one decoding hypothesis.
struct DecoderState {
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::size_t length = 0;
};

EncodedInput encode_input(const ModelConfig& config, const ParameterSet& params, std::span<const TokenId> input);

/// Feeds `token` as the next decoder input and returns the log-probability
/// row for the following position. Equivalent to the last row of
/// forward_log_probs over the whole prefix.
Vector decode_step(const ModelConfig& config, const ParameterSet& params, const EncodedInput& encoded,
                   DecoderState& state, TokenId token);

}  // namespace eduqg
