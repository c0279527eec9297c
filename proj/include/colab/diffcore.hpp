#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "colab/classifier.hpp"
#include "colab/graph.hpp"
#include "colab/tensor.hpp"

namespace colab {

template <typename T>
struct BasicGradientBundle {
  BasicTensor<T> input_grad;
  std::vector<BasicTensor<T>> param_grads;
  T loss{0};
};

using GradientBundle = BasicGradientBundle<double>;

namespace detail {

template <typename T>
BasicTensor<T> as_batch(const BasicTensor<T>& x) {
  if (x.rank() == 1) return BasicTensor<T>({1, x.size()}, x.storage());
  return x;
}

}  // namespace detail

/// Logits for a batch (rows are examples) or a single rank-1 input.
template <typename T>
BasicTensor<T> forward(const BasicClassifier<T>& clf, const BasicTensor<T>& x) {
  Graph<T> g;
  const NodeId in = g.leaf(detail::as_batch(x));
  return g.value(clf.emit(g, in));
}

/// Mean softmax cross-entropy of a logit batch.
template <typename T>
T loss(const BasicTensor<T>& logits, std::span<const int> labels) {
  BasicTensor<T> probs;
  const auto rows = detail::softmax_xent_rows(detail::as_batch(logits), labels, probs);
  T total{0};
  for (T l : rows) total += l;
  return total / static_cast<T>(rows.size());
}

/// Per-example cross-entropy losses.
template <typename T>
std::vector<T> losses(const BasicTensor<T>& logits, std::span<const int> labels) {
  BasicTensor<T> probs;
  return detail::softmax_xent_rows(detail::as_batch(logits), labels, probs);
}

/// Gradient and loss with respect to inputs and parameters. `loss_scale`
/// multiplies the seed of the reverse pass: 1 differentiates the mean
/// loss, batch size differentiates the summed loss (per-example gradients).
template <typename T>
BasicGradientBundle<T> grad_all(const BasicClassifier<T>& clf, const BasicTensor<T>& x,
                                std::span<const int> labels, T loss_scale = T{1}) {
  Graph<T> g;
  const BasicTensor<T> xb = detail::as_batch(x);
  const NodeId in = g.leaf(xb);
  std::vector<NodeId> params;
  const NodeId logits = clf.emit(g, in, &params);
  const NodeId l = g.softmax_cross_entropy(logits, labels);
  g.backward(l, BasicTensor<T>({1}, loss_scale));
  BasicGradientBundle<T> out;
  out.loss = g.value(l)[0];
  out.input_grad = g.grad(in);
  if (x.rank() == 1) out.input_grad = BasicTensor<T>(x.shape(), out.input_grad.storage());
  for (NodeId p : params) out.param_grads.push_back(g.grad(p));
  return out;
}

/// d(mean loss)/dx.
template <typename T>
BasicTensor<T> grad_input(const BasicClassifier<T>& clf, const BasicTensor<T>& x,
                          std::span<const int> labels) {
  return grad_all(clf, x, labels).input_grad;
}

/// Rows are d(loss_i)/d(x_i) for each example independently.
template <typename T>
BasicTensor<T> per_example_input_grads(const BasicClassifier<T>& clf, const BasicTensor<T>& x,
                                       std::span<const int> labels) {
  const auto batch = static_cast<T>(detail::as_batch(x).rows());
  return grad_all(clf, x, labels, batch).input_grad;
}

template <typename T>
BasicGradientBundle<T> grad_params(const BasicClassifier<T>& clf, const BasicTensor<T>& x,
                                   std::span<const int> labels) {
  return grad_all(clf, x, labels);
}

/// Logits and the (classes, input_dim) Jacobian of the logits at one input.
template <typename T>
struct LogitJacobian {
  std::vector<T> logits;
  BasicTensor<T> jacobian;
};

template <typename T>
LogitJacobian<T> logit_jacobian(const BasicClassifier<T>& clf, std::span<const T> x) {
  Graph<T> g;
  const NodeId in = g.leaf(BasicTensor<T>({1, x.size()}, std::vector<T>(x.begin(), x.end())));
  const NodeId out = clf.emit(g, in);
  const std::size_t classes = clf.num_classes();
  LogitJacobian<T> res;
  res.logits.assign(g.value(out).values().begin(), g.value(out).values().end());
  res.jacobian = BasicTensor<T>({classes, x.size()});
  for (std::size_t c = 0; c < classes; ++c) {
    BasicTensor<T> seed({1, classes});
    seed[c] = T{1};
    g.backward(out, seed);
    std::copy(g.grad(in).values().begin(), g.grad(in).values().end(), res.jacobian.row(c).begin());
  }
  return res;
}

/// Max over coordinates of |analytic - central difference| /
/// (|analytic| + |difference| + 1e-12) for a scalar function.
template <typename T>
T max_relative_error(const std::function<T(std::span<const T>)>& f,
                     std::span<const T> analytic, std::vector<T> point, T step) {
  if (!(step > T{0})) throw std::invalid_argument("finite difference step must be positive");
  T worst{0};
  for (std::size_t i = 0; i < point.size(); ++i) {
    const T saved = point[i];
    point[i] = saved + step;
    const T up = f(point);
    point[i] = saved - step;
    const T down = f(point);
    point[i] = saved;
    const T numeric = (up - down) / (T{2} * step);
    const T err = std::abs(analytic[i] - numeric) /
                  (std::abs(analytic[i]) + std::abs(numeric) + static_cast<T>(1e-12));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Central-difference check of the mean-loss gradient with respect to the
/// input and every parameter of `clf`. Returns the worst relative error.
template <typename T>
T finite_diff_check(const BasicClassifier<T>& clf, const BasicTensor<T>& x,
                    std::span<const int> labels, T step) {
  const auto bundle = grad_all(clf, x, labels);
  const BasicTensor<T> xb = detail::as_batch(x);
  T worst = max_relative_error<T>(
      [&](std::span<const T> p) {
        return loss(forward(clf, BasicTensor<T>(xb.shape(), std::vector<T>(p.begin(), p.end()))),
                    labels);
      },
      bundle.input_grad.values(), xb.storage(), step);

  for (std::size_t k = 0; k < clf.params().size(); ++k) {
    BasicClassifier<T> probe = clf;
    worst = std::max(worst, max_relative_error<T>(
                                [&](std::span<const T> p) {
                                  std::copy(p.begin(), p.end(),
                                            probe.mutable_params()[k].values().begin());
                                  return loss(forward(probe, xb), labels);
                                },
                                bundle.param_grads[k].values(), clf.params()[k].storage(), step));
  }
  return worst;
}

/// Predicted class of each row.
template <typename T>
std::vector<int> predict(const BasicClassifier<T>& clf, const BasicTensor<T>& x) {
  const auto logits = forward(clf, x);
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) out[r] = static_cast<int>(argmax(logits.row(r)));
  return out;
}

}  // namespace colab
