#include "eduqg/graph.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "eduqg/error.hpp"

namespace eduqg {

Var Graph::push(Matrix value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Matrix& Graph::val(std::int32_t i) const {
  const Node& node = nodes_[static_cast<std::size_t>(i)];
  return node.external != nullptr ? *node.external : node.value;
}

const Matrix& Graph::value(Var v) const {
  return val(v.index);
}

Matrix& Graph::grad_of(std::int32_t i) {
  Node& node = nodes_[static_cast<std::size_t>(i)];
  if (!node.has_grad) {
    const Matrix& v = val(i);
    node.grad = Matrix::Zero(v.rows(), v.cols());
    node.has_grad = true;
  }
  return node.grad;
}

Var Graph::constant(Matrix value) {
  return push(std::move(value), false);
}

Var Graph::parameter(const Matrix& value, std::size_t slot) {
  Node node;
  node.external = &value;
  node.needs_grad = record_;
  node.slot = static_cast<std::int64_t>(slot);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Graph::embed(Var table, std::span<const TokenId> ids) {
  const Matrix& t = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw InvalidArgument(fmt::format("token id {} outside vocabulary of {}", ids[i], t.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  const Var result = push(std::move(out), needs(table));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    std::vector<TokenId> saved(ids.begin(), ids.end());
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, table, result, saved = std::move(saved)] {
      const Matrix& dy = nodes_[static_cast<std::size_t>(result.index)].grad;
      Matrix& dt = grad_of(table.index);
      for (std::size_t i = 0; i < saved.size(); ++i) {
        dt.row(saved[i]) += dy.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return result;
}

Var Graph::linear(Var x, Var weight) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(weight);
  if (xv.cols() != wv.cols()) {
    throw InvalidArgument(fmt::format("linear: input width {} vs weight {}x{}", xv.cols(), wv.rows(), wv.cols()));
  }
  Matrix out = xv * wv.transpose();
  const Var result = push(std::move(out), needs(x) || needs(weight));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, x, weight, result] {
      const Matrix& dy = nodes_[static_cast<std::size_t>(result.index)].grad;
      if (needs(x)) {
        grad_of(x.index).noalias() += dy * value(weight);
      }
      if (needs(weight)) {
        grad_of(weight.index).noalias() += dy.transpose() * value(x);
      }
    };
  }
  return result;
}

Var Graph::add(Var a, Var b) {
  Matrix out = value(a) + value(b);
  const Var result = push(std::move(out), needs(a) || needs(b));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, a, b, result] {
      const Matrix& dy = nodes_[static_cast<std::size_t>(result.index)].grad;
      if (needs(a)) grad_of(a.index) += dy;
      if (needs(b)) grad_of(b.index) += dy;
    };
  }
  return result;
}

Var Graph::scale(Var a, double factor) {
  Matrix out = value(a) * factor;
  const Var result = push(std::move(out), needs(a));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, a, factor, result] {
      grad_of(a.index) += nodes_[static_cast<std::size_t>(result.index)].grad * factor;
    };
  }
  return result;
}

Var Graph::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  const Var result = push(std::move(out), needs(a));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, a, result] {
      const Matrix& dy = nodes_[static_cast<std::size_t>(result.index)].grad;
      grad_of(a.index) += (value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(dy);
    };
  }
  return result;
}

Var Graph::rms_norm(Var x, Var gain, double eps) {
  const Matrix& xv = value(x);
  const Matrix& g = value(gain);
  if (g.rows() != 1 || g.cols() != xv.cols()) {
    throw InvalidArgument("rms_norm: gain must be 1 x d");
  }
  const auto d = static_cast<double>(xv.cols());
  Vector inv_rms(xv.rows());
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    inv_rms(r) = 1.0 / std::sqrt(xv.row(r).squaredNorm() / d + eps);
    out.row(r) = xv.row(r).cwiseProduct(g) * inv_rms(r);
  }
  const Var result = push(std::move(out), needs(x) || needs(gain));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, x, gain, result, inv_rms = std::move(inv_rms), d] {
      const Matrix& dy = nodes_[static_cast<std::size_t>(result.index)].grad;
      const Matrix& xv = value(x);
      const Matrix& g = value(gain);
      if (needs(gain)) {
        Matrix& dg = grad_of(gain.index);
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
          dg += dy.row(r).cwiseProduct(xv.row(r)) * inv_rms(r);
        }
      }
      if (needs(x)) {
        Matrix& dx = grad_of(x.index);
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
          const Eigen::RowVectorXd u = dy.row(r).cwiseProduct(g);
          const double s = inv_rms(r);
          const double dot = u.dot(xv.row(r));
          dx.row(r) += s * u - (s * s * s / d) * dot * xv.row(r);
        }
      }
    };
  }
  return result;
}

Var Graph::attention(Var q, Var k, Var v, std::size_t heads, std::optional<Var> bias,
                     std::shared_ptr<const IndexTable> buckets, bool causal) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const Matrix& vv = value(v);
  const Eigen::Index lq = qv.rows();
  const Eigen::Index lk = kv.rows();
  const Eigen::Index width = qv.cols();
  if (heads == 0 || width % static_cast<Eigen::Index>(heads) != 0 || kv.cols() != width || vv.cols() != width ||
      vv.rows() != lk) {
    throw InvalidArgument("attention: incompatible q/k/v shapes");
  }
  if (bias && (!buckets || buckets->rows() != lq || buckets->cols() != lk)) {
    throw InvalidArgument("attention: bucket table does not match score shape");
  }
  const Eigen::Index dk = width / static_cast<Eigen::Index>(heads);
  Matrix out = Matrix::Zero(lq, width);
  std::vector<Matrix> probs(heads);
  if (lk > 0) {
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dk;
      Matrix scores = qv.middleCols(c0, dk) * kv.middleCols(c0, dk).transpose();
      if (bias) {
        const Matrix& b = value(*bias);
        for (Eigen::Index i = 0; i < lq; ++i) {
          for (Eigen::Index j = 0; j < lk; ++j) {
            scores(i, j) += b((*buckets)(i, j), static_cast<Eigen::Index>(h));
          }
        }
      }
      for (Eigen::Index i = 0; i < lq; ++i) {
        const Eigen::Index visible = causal ? std::min(i + 1, lk) : lk;
        const double m = scores.row(i).head(visible).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < lk; ++j) {
          const double e = j < visible ? std::exp(scores(i, j) - m) : 0.0;
          scores(i, j) = e;
          total += e;
        }
        scores.row(i) /= total;
      }
      out.middleCols(c0, dk).noalias() = scores * vv.middleCols(c0, dk);
      probs[h] = std::move(scores);
    }
  }
  const bool grad = needs(q) || needs(k) || needs(v) || (bias && needs(*bias));
  const Var result = push(std::move(out), grad);
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad && lk > 0) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, q, k, v, heads, bias, buckets, dk, result,
                                                               probs = std::move(probs)] {
      const Matrix& dout = nodes_[static_cast<std::size_t>(result.index)].grad;
      const Matrix& qv = value(q);
      const Matrix& kv = value(k);
      const Matrix& vv = value(v);
      for (std::size_t h = 0; h < heads; ++h) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dk;
        const Matrix& p = probs[h];
        const auto doh = dout.middleCols(c0, dk);
        if (needs(v)) {
          grad_of(v.index).middleCols(c0, dk).noalias() += p.transpose() * doh;
        }
        Matrix dp = doh * vv.middleCols(c0, dk).transpose();
        const Vector row_dot = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - row_dot);
        if (needs(q)) {
          grad_of(q.index).middleCols(c0, dk).noalias() += ds * kv.middleCols(c0, dk);
        }
        if (needs(k)) {
          grad_of(k.index).middleCols(c0, dk).noalias() += ds.transpose() * qv.middleCols(c0, dk);
        }
        if (bias && needs(*bias)) {
          Matrix& db = grad_of(bias->index);
          for (Eigen::Index i = 0; i < ds.rows(); ++i) {
            for (Eigen::Index j = 0; j < ds.cols(); ++j) {
              db((*buckets)(i, j), static_cast<Eigen::Index>(h)) += ds(i, j);
            }
          }
        }
      }
    };
  }
  return result;
}

Var Graph::dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) {
    return x;
  }
  const Matrix& xv = value(x);
  Matrix mask(xv.rows(), xv.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  Matrix out = xv.cwiseProduct(mask);
  const Var result = push(std::move(out), needs(x));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, x, result, mask = std::move(mask)] {
      grad_of(x.index) += nodes_[static_cast<std::size_t>(result.index)].grad.cwiseProduct(mask);
    };
  }
  return result;
}

Var Graph::cross_entropy(Var logits, std::span<const TokenId> targets, TokenId ignore, double weight) {
  const Matrix& z = value(logits);
  if (static_cast<std::size_t>(z.rows()) != targets.size()) {
    throw InvalidArgument("cross_entropy: one target per logit row required");
  }
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const TokenId t = targets[static_cast<std::size_t>(i)];
    if (t == ignore) {
      probs.row(i).setZero();
      continue;
    }
    if (t < 0 || t >= z.cols()) {
      throw InvalidArgument(fmt::format("cross_entropy: target {} outside vocabulary of {}", t, z.cols()));
    }
    const double m = z.row(i).maxCoeff();
    probs.row(i) = (z.row(i).array() - m).exp().matrix();
    const double s = probs.row(i).sum();
    probs.row(i) /= s;
    total += -(z(i, t) - m - std::log(s));
  }
  Matrix out(1, 1);
  out(0, 0) = weight * total;
  const Var result = push(std::move(out), needs(logits));
  if (nodes_[static_cast<std::size_t>(result.index)].needs_grad) {
    std::vector<TokenId> saved(targets.begin(), targets.end());
    nodes_[static_cast<std::size_t>(result.index)].backward = [this, logits, result, weight, ignore,
                                                               probs = std::move(probs), saved = std::move(saved)] {
      const double scale = weight * nodes_[static_cast<std::size_t>(result.index)].grad(0, 0);
      Matrix& dz = grad_of(logits.index);
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const TokenId t = saved[static_cast<std::size_t>(i)];
        if (t == ignore) {
          continue;
        }
        dz.row(i) += scale * probs.row(i);
        dz(i, t) -= scale;
      }
    };
  }
  return result;
}

void Graph::backward(Var loss) {
  if (!record_) {
    throw Error("backward() on a graph built without recording");
  }
  const Matrix& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) {
    throw InvalidArgument("backward: loss must be a scalar node");
  }
  grad_of(loss.index)(0, 0) += 1.0;
  for (auto i = static_cast<std::int64_t>(loss.index); i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (node.has_grad && node.backward) {
      node.backward();
    }
  }
}

void Graph::for_each_parameter_grad(const std::function<void(std::size_t, const Matrix&)>& visit) const {
  for (const Node& node : nodes_) {
    if (node.slot >= 0 && node.has_grad) {
      visit(static_cast<std::size_t>(node.slot), node.grad);
    }
  }
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

}  // namespace eduqg
