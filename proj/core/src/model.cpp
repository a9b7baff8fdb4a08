#include "eduqg/model.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <tuple>

#include <fmt/format.h>

#include "eduqg/error.hpp"

namespace eduqg {

// --- config -------------------------------------------------------------------

void ModelConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || num_layers < 1 || num_heads < 1 || feedforward_dim < 1 ||
      relative_buckets < 2 || relative_max_distance < 1) {
    throw ConfigError("model config: all counts must be >= 1");
  }
  if (d_model % num_heads != 0) {
    throw ConfigError(fmt::format("model config: d_model {} not divisible by num_heads {}", d_model, num_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError(fmt::format("model config: dropout {} outside [0, 1)", dropout));
  }
}

Json ModelConfig::to_json() const {
  return Json{{"vocab_size", vocab_size},
              {"d_model", d_model},
              {"num_layers", num_layers},
              {"num_heads", num_heads},
              {"feedforward_dim", feedforward_dim},
              {"dropout", dropout},
              {"relative_buckets", relative_buckets},
              {"relative_max_distance", relative_max_distance},
              {"layer_norm_eps", layer_norm_eps},
              {"tie_embeddings", tie_embeddings}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.feedforward_dim = j.at("feedforward_dim").get<std::size_t>();
    c.dropout = j.value("dropout", 0.1);
    c.relative_buckets = j.value("relative_buckets", std::size_t{32});
    c.relative_max_distance = j.value("relative_max_distance", std::size_t{128});
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-6);
    c.tie_embeddings = j.value("tie_embeddings", true);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::toy(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::t5_small(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 512;
  c.num_layers = 6;
  c.num_heads = 8;
  c.feedforward_dim = 2048;
  c.dropout = 0.1;
  return c;
}

// --- parameters ---------------------------------------------------------------

void ParameterSet::add(std::string name, Matrix value) {
  if (index_.contains(name)) {
    throw InvalidArgument("duplicate parameter " + name);
  }
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

const Matrix& ParameterSet::get(std::string_view name) const {
  const auto slot = find(name);
  if (!slot) {
    throw InvalidArgument(fmt::format("no parameter named {}", name));
  }
  return values_[*slot];
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) {
    n += static_cast<std::size_t>(v.size());
  }
  return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.names_ != b.names_) {
    return false;
  }
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    const Matrix& x = a.values_[i];
    const Matrix& y = b.values_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols() ||
        std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

namespace {

std::string attn_name(const char* stack, std::size_t block, std::size_t layer, const char* kind, const char* proj) {
  return fmt::format("{}.block.{}.layer.{}.{}.{}.weight", stack, block, layer, kind, proj);
}

std::string norm_name(const char* stack, std::size_t block, std::size_t layer) {
  return fmt::format("{}.block.{}.layer.{}.layer_norm.weight", stack, block, layer);
}

std::string ff_name(const char* stack, std::size_t block, std::size_t layer, const char* proj) {
  return fmt::format("{}.block.{}.layer.{}.DenseReluDense.{}.weight", stack, block, layer, proj);
}

std::string rel_bias_name(const char* stack) {
  return fmt::format("{}.block.0.layer.0.SelfAttention.relative_attention_bias.weight", stack);
}

enum class InitKind { kEmbedding, kQuery, kKeyValue, kOutput, kRelBias, kFfIn, kFfOut, kNorm };

}  // namespace

std::vector<TensorShape> parameter_layout(const ModelConfig& c) {
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto inner = static_cast<Eigen::Index>(c.num_heads * c.head_dim());
  const auto ff = static_cast<Eigen::Index>(c.feedforward_dim);
  const auto vocab = static_cast<Eigen::Index>(c.vocab_size);
  std::vector<TensorShape> out;
  out.push_back({"shared.weight", vocab, d, false});
  const auto add_attention = [&](const char* stack, std::size_t block, std::size_t layer, const char* kind) {
    out.push_back({attn_name(stack, block, layer, kind, "q"), inner, d, false});
    out.push_back({attn_name(stack, block, layer, kind, "k"), inner, d, false});
    out.push_back({attn_name(stack, block, layer, kind, "v"), inner, d, false});
    out.push_back({attn_name(stack, block, layer, kind, "o"), d, inner, false});
    if (block == 0 && layer == 0) {
      out.push_back({rel_bias_name(stack), static_cast<Eigen::Index>(c.relative_buckets),
                     static_cast<Eigen::Index>(c.num_heads), false});
    }
    out.push_back({norm_name(stack, block, layer), 1, d, true});
  };
  const auto add_ff = [&](const char* stack, std::size_t block, std::size_t layer) {
    out.push_back({ff_name(stack, block, layer, "wi"), ff, d, false});
    out.push_back({ff_name(stack, block, layer, "wo"), d, ff, false});
    out.push_back({norm_name(stack, block, layer), 1, d, true});
  };
  for (std::size_t b = 0; b < c.num_layers; ++b) {
    add_attention("encoder", b, 0, "SelfAttention");
    add_ff("encoder", b, 1);
  }
  out.push_back({"encoder.final_layer_norm.weight", 1, d, true});
  for (std::size_t b = 0; b < c.num_layers; ++b) {
    add_attention("decoder", b, 0, "SelfAttention");
    add_attention("decoder", b, 1, "EncDecAttention");
    add_ff("decoder", b, 2);
  }
  out.push_back({"decoder.final_layer_norm.weight", 1, d, true});
  if (!c.tie_embeddings) {
    out.push_back({"lm_head.weight", vocab, d, false});
  }
  return out;
}

ParameterSet init_parameters(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  const double d = static_cast<double>(c.d_model);
  const double dk = static_cast<double>(c.head_dim());
  const double heads = static_cast<double>(c.num_heads);
  const double ff = static_cast<double>(c.feedforward_dim);
  const auto kind_of = [](const std::string& name) {
    if (name.ends_with("layer_norm.weight")) return InitKind::kNorm;
    if (name.ends_with("relative_attention_bias.weight")) return InitKind::kRelBias;
    if (name.ends_with(".q.weight")) return InitKind::kQuery;
    if (name.ends_with(".k.weight") || name.ends_with(".v.weight")) return InitKind::kKeyValue;
    if (name.ends_with(".o.weight")) return InitKind::kOutput;
    if (name.ends_with(".wi.weight")) return InitKind::kFfIn;
    if (name.ends_with(".wo.weight")) return InitKind::kFfOut;
    return InitKind::kEmbedding;
  };
  ParameterSet params;
  const auto layout = parameter_layout(c);
  for (std::size_t slot = 0; slot < layout.size(); ++slot) {
    const auto& shape = layout[slot];
    double stddev = 1.0;
    switch (kind_of(shape.name)) {
      case InitKind::kNorm:
        params.add(shape.name, Matrix::Ones(shape.rows, shape.cols));
        continue;
      case InitKind::kEmbedding:
        stddev = 1.0;
        break;
      case InitKind::kQuery:
        stddev = 1.0 / std::sqrt(d * dk);
        break;
      case InitKind::kKeyValue:
      case InitKind::kRelBias:
      case InitKind::kFfIn:
        stddev = 1.0 / std::sqrt(d);
        break;
      case InitKind::kOutput:
        stddev = 1.0 / std::sqrt(heads * dk);
        break;
      case InitKind::kFfOut:
        stddev = 1.0 / std::sqrt(ff);
        break;
    }
    Rng rng(derive_seed(seed, slot, 0x9a3));
    Matrix value(shape.rows, shape.cols);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      value.data()[i] = stddev * rng.normal();
    }
    params.add(shape.name, std::move(value));
  }
  return params;
}

// --- positions ------------------------------------------------------------------

std::int32_t relative_position_bucket(std::int64_t relative_position, bool bidirectional, std::size_t num_buckets,
                                      std::size_t max_distance) {
  std::int64_t bucket = 0;
  auto buckets = static_cast<std::int64_t>(num_buckets);
  std::int64_t n = 0;
  if (bidirectional) {
    buckets /= 2;
    if (relative_position > 0) {
      bucket += buckets;
    }
    n = relative_position < 0 ? -relative_position : relative_position;
  } else {
    n = relative_position < 0 ? -relative_position : 0;
  }
  const std::int64_t max_exact = buckets / 2;
  if (n < max_exact) {
    return static_cast<std::int32_t>(bucket + n);
  }
  const float scaled = std::log(static_cast<float>(n) / static_cast<float>(max_exact)) /
                       static_cast<float>(std::log(static_cast<double>(max_distance) / static_cast<double>(max_exact))) *
                       static_cast<float>(buckets - max_exact);
  std::int64_t large = max_exact + static_cast<std::int64_t>(scaled);
  large = std::min(large, buckets - 1);
  return static_cast<std::int32_t>(bucket + large);
}

namespace {

std::shared_ptr<const IndexTable> bucket_table(Eigen::Index lq, Eigen::Index lk, bool bidirectional,
                                               std::size_t num_buckets, std::size_t max_distance) {
  using Key = std::tuple<Eigen::Index, Eigen::Index, bool, std::size_t, std::size_t>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const IndexTable>> cache;
  const Key key{lq, lk, bidirectional, num_buckets, max_distance};
  std::lock_guard lock(mutex);
  if (const auto it = cache.find(key); it != cache.end()) {
    return it->second;
  }
  auto table = std::make_shared<IndexTable>(lq, lk);
  for (Eigen::Index i = 0; i < lq; ++i) {
    for (Eigen::Index j = 0; j < lk; ++j) {
      (*table)(i, j) = relative_position_bucket(j - i, bidirectional, num_buckets, max_distance);
    }
  }
  cache.emplace(key, table);
  return table;
}

// Graph builder shared by training and batch scoring.
class Builder {
 public:
  Builder(Graph& graph, const ModelConfig& config, const ParameterSet& params, Rng* rng)
      : g_(graph), c_(config), p_(params), rng_(rng), slots_(params.size(), Var{}) {}

  Var param(const std::string& name) {
    const auto slot = p_.find(name);
    if (!slot) {
      throw InvalidArgument("model is missing parameter " + name);
    }
    if (slots_[*slot].index < 0) {
      slots_[*slot] = g_.parameter(p_.at(*slot), *slot);
    }
    return slots_[*slot];
  }

  Var drop(Var x) {
    if (rng_ == nullptr || c_.dropout == 0.0) {
      return x;
    }
    return g_.dropout(x, c_.dropout, *rng_);
  }

  Var attention_block(Var x, Var kv_source, const char* stack, std::size_t block, std::size_t layer, const char* kind,
                      bool self, bool causal) {
    const Var h = g_.rms_norm(x, param(norm_name(stack, block, layer)), c_.layer_norm_eps);
    const Var src = self ? h : kv_source;
    const Var q = g_.linear(h, param(attn_name(stack, block, layer, kind, "q")));
    const Var k = g_.linear(src, param(attn_name(stack, block, layer, kind, "k")));
    const Var v = g_.linear(src, param(attn_name(stack, block, layer, kind, "v")));
    std::optional<Var> bias;
    std::shared_ptr<const IndexTable> buckets;
    if (self) {
      bias = param(rel_bias_name(stack));
      const auto len = g_.value(x).rows();
      buckets = bucket_table(len, len, !causal, c_.relative_buckets, c_.relative_max_distance);
    }
    const Var a = g_.attention(q, k, v, c_.num_heads, bias, buckets, causal);
    const Var o = g_.linear(a, param(attn_name(stack, block, layer, kind, "o")));
    return g_.add(x, drop(o));
  }

  Var ff_block(Var x, const char* stack, std::size_t block, std::size_t layer) {
    const Var h = g_.rms_norm(x, param(norm_name(stack, block, layer)), c_.layer_norm_eps);
    const Var inner = drop(g_.relu(g_.linear(h, param(ff_name(stack, block, layer, "wi")))));
    const Var out = g_.linear(inner, param(ff_name(stack, block, layer, "wo")));
    return g_.add(x, drop(out));
  }

  Var encoder(std::span<const TokenId> ids) {
    Var x = drop(g_.embed(param("shared.weight"), ids));
    for (std::size_t b = 0; b < c_.num_layers; ++b) {
      x = attention_block(x, x, "encoder", b, 0, "SelfAttention", true, false);
      x = ff_block(x, "encoder", b, 1);
    }
    return drop(g_.rms_norm(x, param("encoder.final_layer_norm.weight"), c_.layer_norm_eps));
  }

  Var decoder(std::span<const TokenId> ids, Var encoded) {
    Var x = drop(g_.embed(param("shared.weight"), ids));
    for (std::size_t b = 0; b < c_.num_layers; ++b) {
      x = attention_block(x, x, "decoder", b, 0, "SelfAttention", true, true);
      x = attention_block(x, encoded, "decoder", b, 1, "EncDecAttention", false, false);
      x = ff_block(x, "decoder", b, 2);
    }
    return drop(g_.rms_norm(x, param("decoder.final_layer_norm.weight"), c_.layer_norm_eps));
  }

  Var logits(Var hidden) {
    if (c_.tie_embeddings) {
      const double s = 1.0 / std::sqrt(static_cast<double>(c_.d_model));
      return g_.linear(g_.scale(hidden, s), param("shared.weight"));
    }
    return g_.linear(hidden, param("lm_head.weight"));
  }

 private:
  Graph& g_;
  const ModelConfig& c_;
  const ParameterSet& p_;
  Rng* rng_;
  std::vector<Var> slots_;
};

void check_ids(std::span<const TokenId> ids, std::size_t vocab, const char* what) {
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InvalidArgument(fmt::format("{}: token id {} outside vocabulary of {}", what, id, vocab));
    }
  }
}

}  // namespace

std::vector<TokenId> shift_right(std::span<const TokenId> target, TokenId start) {
  std::vector<TokenId> out;
  out.reserve(target.size());
  if (target.empty()) {
    return out;
  }
  out.push_back(start);
  out.insert(out.end(), target.begin(), target.end() - 1);
  return out;
}

Var build_seq2seq_loss(Graph& graph, const ModelConfig& config, const ParameterSet& params,
                       std::span<const TokenId> input, std::span<const TokenId> target, TokenId pad, double weight,
                       Rng* dropout_rng) {
  check_ids(input, config.vocab_size, "input");
  check_ids(target, config.vocab_size, "target");
  Builder b(graph, config, params, dropout_rng);
  const Var enc = b.encoder(input);
  const auto dec_in = shift_right(target, pad);
  const Var dec = b.decoder(dec_in, enc);
  return graph.cross_entropy(b.logits(dec), target, pad, weight);
}

Matrix forward_log_probs(const ModelConfig& config, const ParameterSet& params, std::span<const TokenId> input,
                         std::span<const TokenId> decoder_input) {
  check_ids(input, config.vocab_size, "input");
  check_ids(decoder_input, config.vocab_size, "decoder input");
  Graph graph(false);
  Builder b(graph, config, params, nullptr);
  const Var enc = b.encoder(input);
  const Var dec = b.decoder(decoder_input, enc);
  return log_softmax_rows(graph.value(b.logits(dec)));
}

// --- incremental inference ---------------------------------------------------------

namespace {

Matrix rms(const Matrix& x, const Matrix& gain, double eps) {
  Matrix out(x.rows(), x.cols());
  const auto d = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(r) = x.row(r).cwiseProduct(gain) / std::sqrt(x.row(r).squaredNorm() / d + eps);
  }
  return out;
}

// softmax(q k^T + bias) v for a single query row per head.
Eigen::RowVectorXd attend_row(const Eigen::RowVectorXd& q, const Matrix& keys, const Matrix& values,
                              std::size_t heads, const Matrix* bias, std::int64_t query_pos,
                              const ModelConfig& c) {
  const Eigen::Index dk = q.cols() / static_cast<Eigen::Index>(heads);
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(q.cols());
  const Eigen::Index lk = keys.rows();
  if (lk == 0) {
    return out;
  }
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dk;
    Eigen::VectorXd scores = keys.middleCols(c0, dk) * q.segment(c0, dk).transpose();
    if (bias != nullptr) {
      for (Eigen::Index j = 0; j < lk; ++j) {
        const auto bucket = relative_position_bucket(j - query_pos, false, c.relative_buckets, c.relative_max_distance);
        scores(j) += (*bias)(bucket, static_cast<Eigen::Index>(h));
      }
    }
    const double m = scores.maxCoeff();
    scores = (scores.array() - m).exp();
    scores /= scores.sum();
    out.segment(c0, dk) = scores.transpose() * values.middleCols(c0, dk);
  }
  return out;
}

void append_row(Matrix& m, const Eigen::RowVectorXd& row) {
  m.conservativeResize(m.rows() + 1, row.cols());
  m.row(m.rows() - 1) = row;
}

}  // namespace

EncodedInput encode_input(const ModelConfig& config, const ParameterSet& params, std::span<const TokenId> input) {
  check_ids(input, config.vocab_size, "input");
  Graph graph(false);
  Builder b(graph, config, params, nullptr);
  EncodedInput out;
  out.hidden = graph.value(b.encoder(input));
  for (std::size_t blk = 0; blk < config.num_layers; ++blk) {
    out.cross_keys.push_back(out.hidden * params.get(attn_name("decoder", blk, 1, "EncDecAttention", "k")).transpose());
    out.cross_values.push_back(out.hidden *
                               params.get(attn_name("decoder", blk, 1, "EncDecAttention", "v")).transpose());
  }
  return out;
}

Vector decode_step(const ModelConfig& c, const ParameterSet& params, const EncodedInput& encoded,
                   DecoderState& state, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
    throw InvalidArgument(fmt::format("decode_step: token id {} outside vocabulary of {}", token, c.vocab_size));
  }
  if (state.keys.empty()) {
    state.keys.assign(c.num_layers, Matrix(0, static_cast<Eigen::Index>(c.d_model)));
    state.values.assign(c.num_layers, Matrix(0, static_cast<Eigen::Index>(c.d_model)));
  }
  const auto pos = static_cast<std::int64_t>(state.length);
  const Matrix& shared = params.get("shared.weight");
  const Matrix& self_bias = params.get(rel_bias_name("decoder"));
  Matrix x = shared.row(token);
  for (std::size_t blk = 0; blk < c.num_layers; ++blk) {
    {
      const Matrix h = rms(x, params.get(norm_name("decoder", blk, 0)), c.layer_norm_eps);
      const Eigen::RowVectorXd q = h * params.get(attn_name("decoder", blk, 0, "SelfAttention", "q")).transpose();
      const Eigen::RowVectorXd k = h * params.get(attn_name("decoder", blk, 0, "SelfAttention", "k")).transpose();
      const Eigen::RowVectorXd v = h * params.get(attn_name("decoder", blk, 0, "SelfAttention", "v")).transpose();
      append_row(state.keys[blk], k);
      append_row(state.values[blk], v);
      const auto a = attend_row(q, state.keys[blk], state.values[blk], c.num_heads, &self_bias, pos, c);
      x += a * params.get(attn_name("decoder", blk, 0, "SelfAttention", "o")).transpose();
    }
    {
      const Matrix h = rms(x, params.get(norm_name("decoder", blk, 1)), c.layer_norm_eps);
      const Eigen::RowVectorXd q = h * params.get(attn_name("decoder", blk, 1, "EncDecAttention", "q")).transpose();
      const auto a = attend_row(q, encoded.cross_keys[blk], encoded.cross_values[blk], c.num_heads, nullptr, pos, c);
      x += a * params.get(attn_name("decoder", blk, 1, "EncDecAttention", "o")).transpose();
    }
    {
      const Matrix h = rms(x, params.get(norm_name("decoder", blk, 2)), c.layer_norm_eps);
      const Matrix inner = (h * params.get(ff_name("decoder", blk, 2, "wi")).transpose()).cwiseMax(0.0);
      x += inner * params.get(ff_name("decoder", blk, 2, "wo")).transpose();
    }
  }
  const Matrix out = rms(x, params.get("decoder.final_layer_norm.weight"), c.layer_norm_eps);
  Matrix logits;
  if (c.tie_embeddings) {
    logits = (out / std::sqrt(static_cast<double>(c.d_model))) * shared.transpose();
  } else {
    logits = out * params.get("lm_head.weight").transpose();
  }
  ++state.length;
  return log_softmax_rows(logits).row(0).transpose();
}

}  // namespace eduqg
