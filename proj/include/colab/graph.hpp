#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colab/tensor.hpp"

namespace colab {

enum class OpKind { leaf, affine, relu, softmax_cross_entropy, add, scale };

using NodeId = std::size_t;

namespace detail {

/// Fused, max-shifted softmax cross-entropy over the rows of `logits`.
/// Writes softmax probabilities into `probs` and returns per-row losses.
template <typename T>
std::vector<T> softmax_xent_rows(const BasicTensor<T>& logits, std::span<const int> labels,
                                 BasicTensor<T>& probs) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != batch) {
    throw std::invalid_argument("cross-entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(batch));
  }
  probs = BasicTensor<T>(logits.shape());
  std::vector<T> losses(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("cross-entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    auto z = logits.row(r);
    const T shift = z[argmax(z)];
    T total{0};
    for (std::size_t c = 0; c < classes; ++c) {
      const T e = std::exp(z[c] - shift);
      probs.at(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs.at(r, c) /= total;
    losses[r] = std::log(total) - (z[static_cast<std::size_t>(y)] - shift);
  }
  return losses;
}

}  // namespace detail

/// Tape of differentiable operations. Nodes are appended in evaluation
/// order, so the insertion order is a topological order and backward walks
/// it in reverse. One graph per evaluation; not shared across threads.
template <typename T>
class Graph {
 public:
  NodeId leaf(BasicTensor<T> value) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    return push(std::move(n));
  }

  /// x: (batch, in), w: (out, in), b: (out) -> (batch, out) = x wᵀ + b
  NodeId affine(NodeId x, NodeId w, NodeId b) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    const auto& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.cols() ||
        bv.size() != wv.rows()) {
      throw std::invalid_argument("affine: incompatible shapes x" + shape_string(xv.shape()) +
                                  " w" + shape_string(wv.shape()) + " b" +
                                  shape_string(bv.shape()));
    }
    const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
    BasicTensor<T> y({batch, out});
    for (std::size_t r = 0; r < batch; ++r) {
      auto xr = xv.row(r);
      for (std::size_t o = 0; o < out; ++o) {
        T acc = bv[o];
        auto wr = wv.row(o);
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
        y.at(r, o) = acc;
      }
    }
    Node n;
    n.kind = OpKind::affine;
    n.inputs = {x, w, b};
    n.arity = 3;
    n.value = std::move(y);
    return push(std::move(n));
  }

  NodeId relu(NodeId x) {
    BasicTensor<T> y = value(x);
    for (T& v : y.values()) v = v > T{0} ? v : T{0};
    Node n;
    n.kind = OpKind::relu;
    n.inputs = {x, 0, 0};
    n.arity = 1;
    n.value = std::move(y);
    return push(std::move(n));
  }

  /// Mean softmax cross-entropy of (batch, classes) logits; result has shape (1).
  NodeId softmax_cross_entropy(NodeId logits, std::span<const int> labels) {
    Node n;
    n.kind = OpKind::softmax_cross_entropy;
    n.inputs = {logits, 0, 0};
    n.arity = 1;
    const auto losses = detail::softmax_xent_rows(value(logits), labels, n.aux);
    T total{0};
    for (T l : losses) total += l;
    n.value = BasicTensor<T>({1}, total / static_cast<T>(losses.size()));
    n.labels.assign(labels.begin(), labels.end());
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) {
    value(a).require_same_shape(value(b), "add");
    Node n;
    n.kind = OpKind::add;
    n.inputs = {a, b, 0};
    n.arity = 2;
    n.value = value(a) + value(b);
    return push(std::move(n));
  }

  NodeId scale(NodeId a, T factor) {
    Node n;
    n.kind = OpKind::scale;
    n.inputs = {a, 0, 0};
    n.arity = 1;
    n.factor = factor;
    n.value = value(a) * factor;
    return push(std::move(n));
  }

  const BasicTensor<T>& value(NodeId id) const { return node(id).value; }
  const BasicTensor<T>& grad(NodeId id) const { return node(id).grad; }
  OpKind kind(NodeId id) const { return node(id).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass seeded with d(root) = 1 for every element of root.
  void backward(NodeId root) { backward(root, BasicTensor<T>(value(root).shape(), T{1})); }

  /// Reverse pass with an explicit cotangent for root. Clears gradients
  /// from any earlier pass, so one forward tape serves several seeds.
  void backward(NodeId root, const BasicTensor<T>& seed) {
    value(root).require_same_shape(seed, "backward seed");
    for (std::size_t i = 0; i <= root; ++i) nodes_[i].grad = BasicTensor<T>(nodes_[i].value.shape());
    nodes_[root].grad = seed;
    for (std::size_t i = root + 1; i-- > 0;) propagate(i);
  }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::array<NodeId, 3> inputs{};
    int arity = 0;
    BasicTensor<T> value;
    BasicTensor<T> grad;
    BasicTensor<T> aux;  // softmax probabilities
    std::vector<int> labels;
    T factor{1};
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  const Node& node(NodeId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("graph: unknown node " + std::to_string(id));
    return nodes_[id];
  }

  void propagate(std::size_t i) {
    Node& n = nodes_[i];
    const BasicTensor<T>& g = n.grad;
    switch (n.kind) {
      case OpKind::leaf:
        break;
      case OpKind::affine: {
        const auto& xv = nodes_[n.inputs[0]].value;
        const auto& wv = nodes_[n.inputs[1]].value;
        auto& gx = nodes_[n.inputs[0]].grad;
        auto& gw = nodes_[n.inputs[1]].grad;
        auto& gb = nodes_[n.inputs[2]].grad;
        const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t o = 0; o < out; ++o) {
            const T go = g.at(r, o);
            if (go == T{0}) continue;
            gb[o] += go;
            for (std::size_t k = 0; k < in; ++k) {
              gx.at(r, k) += go * wv.at(o, k);
              gw.at(o, k) += go * xv.at(r, k);
            }
          }
        }
        break;
      }
      case OpKind::relu: {
        // Subgradient at exactly zero is zero.
        const auto& out = n.value;
        auto& gx = nodes_[n.inputs[0]].grad;
        for (std::size_t k = 0; k < out.size(); ++k) {
          if (out[k] > T{0}) gx[k] += g[k];
        }
        break;
      }
      case OpKind::softmax_cross_entropy: {
        auto& gz = nodes_[n.inputs[0]].grad;
        const std::size_t batch = n.aux.rows(), classes = n.aux.cols();
        const T upstream = g[0] / static_cast<T>(batch);
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t c = 0; c < classes; ++c) {
            T p = n.aux.at(r, c);
            if (static_cast<int>(c) == n.labels[r]) p -= T{1};
            gz.at(r, c) += upstream * p;
          }
        }
        break;
      }
      case OpKind::add:
        nodes_[n.inputs[0]].grad += g;
        nodes_[n.inputs[1]].grad += g;
        break;
      case OpKind::scale: {
        auto& ga = nodes_[n.inputs[0]].grad;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.factor * g[k];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace colab
