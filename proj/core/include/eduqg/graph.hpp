#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eduqg/rng.hpp"
#include "eduqg/tokenizer.hpp"

namespace eduqg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IndexTable = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node of a Graph.
struct Var {
  std::int32_t index = -1;
};

/// Reverse-mode tape over dense matrices. One graph per forward pass; nodes
/// are appended in evaluation order and backward() walks them in reverse.
/// With recording disabled the same ops run forward-only.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var constant(Matrix value);

  /// Leaf bound to an externally owned parameter; `slot` is returned by
  /// for_each_parameter_grad(). The referenced matrix must outlive the graph.
  Var parameter(const Matrix& value, std::size_t slot);

  const Matrix& value(Var v) const;

  /// Rows of `table` selected by ids.
  Var embed(Var table, std::span<const TokenId> ids);

  /// x * weight^T (weight stored out x in).
  Var linear(Var x, Var weight);

  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);

  /// Root-mean-square normalization per row, scaled by a 1 x d gain.
  Var rms_norm(Var x, Var gain, double eps);

  /// Multi-head scaled-free dot-product attention (T5 convention: no
  /// 1/sqrt(d) factor). q: Lq x (H*dk), k/v: Lk x (H*dk). When `bias` is
  /// set, buckets(i, j) selects the row of the (buckets x H) bias matrix
  /// added to score (i, j) of every head. `causal` masks j > i.
  Var attention(Var q, Var k, Var v, std::size_t heads, std::optional<Var> bias,
                std::shared_ptr<const IndexTable> buckets, bool causal);

  /// Inverted dropout; identity when rate == 0.
  Var dropout(Var x, double rate, Rng& rng);

  /// weight * sum_i -log softmax(logits_i)[targets_i], skipping rows whose
  /// target equals `ignore`. Returns a 1 x 1 node.
  Var cross_entropy(Var logits, std::span<const TokenId> targets, TokenId ignore, double weight);

  /// Seeds d(loss) = 1 and propagates to every recorded node.
  void backward(Var loss);

  /// Visits (slot, gradient) for each parameter leaf that received one.
  void for_each_parameter_grad(const std::function<void(std::size_t, const Matrix&)>& visit) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::int64_t slot = -1;
    std::function<void()> backward;
  };

  const Matrix& val(std::int32_t i) const;
  Matrix& grad_of(std::int32_t i);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].needs_grad; }
  Var push(Matrix value, bool needs_grad);

  bool record_ = true;
  std::vector<Node> nodes_;
};

/// Row-wise log-softmax.
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace eduqg
