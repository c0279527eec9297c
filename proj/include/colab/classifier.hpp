#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colab/graph.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab {

enum class Activation : std::uint32_t { none = 0, relu = 1 };

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::none;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Validates that layer dims chain and end in at least two classes.
void validate_layers(const std::vector<LayerSpec>& layers);

/// Stack of affine layers with optional ReLU, over flattened inputs.
/// Parameters are stored as [W0, b0, W1, b1, ...] with W of shape (out, in).
template <typename T>
class BasicClassifier {
 public:
  BasicClassifier(std::vector<LayerSpec> layers, std::vector<BasicTensor<T>> params)
      : layers_(std::move(layers)), params_(std::move(params)) {
    validate_layers(layers_);
    if (params_.size() != 2 * layers_.size()) {
      throw std::invalid_argument("classifier: expected " + std::to_string(2 * layers_.size()) +
                                  " parameter tensors, got " + std::to_string(params_.size()));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Shape w{layers_[l].out, layers_[l].in};
      const Shape b{layers_[l].out};
      if (params_[2 * l].shape() != w || params_[2 * l + 1].shape() != b) {
        throw std::invalid_argument("classifier: layer " + std::to_string(l) +
                                    " parameters do not match spec " + shape_string(w));
      }
      if (!params_[2 * l].all_finite() || !params_[2 * l + 1].all_finite()) {
        throw std::invalid_argument("classifier: non-finite parameters in layer " +
                                    std::to_string(l));
      }
    }
  }

  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t num_classes() const { return layers_.back().out; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<BasicTensor<T>>& params() const { return params_; }
  std::vector<BasicTensor<T>>& mutable_params() { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// Appends this network to `graph`, reading input from node `x`.
  /// Parameter leaf ids are written to `param_nodes` when given.
  NodeId emit(Graph<T>& graph, NodeId x, std::vector<NodeId>* param_nodes = nullptr) const {
    const auto& xv = graph.value(x);
    if (xv.rank() != 2 || xv.cols() != input_dim()) {
      throw std::invalid_argument("classifier: input shape " + shape_string(xv.shape()) +
                                  " does not match input dimension " +
                                  std::to_string(input_dim()));
    }
    NodeId h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const NodeId w = graph.leaf(params_[2 * l]);
      const NodeId b = graph.leaf(params_[2 * l + 1]);
      if (param_nodes) {
        param_nodes->push_back(w);
        param_nodes->push_back(b);
      }
      h = graph.affine(h, w, b);
      if (layers_[l].activation == Activation::relu) h = graph.relu(h);
    }
    return h;
  }

  template <typename U>
  BasicClassifier<U> cast() const {
    std::vector<BasicTensor<U>> params;
    for (const auto& p : params_) params.push_back(p.template cast<U>());
    return BasicClassifier<U>(layers_, std::move(params));
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<BasicTensor<T>> params_;
};

using Classifier = BasicClassifier<double>;

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) initialization for weights and
/// biases, drawn in declaration order from a generator seeded by `seed`.
template <typename T = double>
BasicClassifier<T> build_mlp(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
  validate_layers(layers);
  Rng rng(seed);
  std::vector<BasicTensor<T>> params;
  for (const auto& layer : layers) {
    const double bound = std::sqrt(1.0 / static_cast<double>(layer.in));
    BasicTensor<T> w({layer.out, layer.in});
    BasicTensor<T> b({layer.out});
    for (T& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    for (T& v : b.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    params.push_back(std::move(w));
    params.push_back(std::move(b));
  }
  return BasicClassifier<T>(layers, std::move(params));
}

/// Single affine layer: logits(x) = W x + b.
template <typename T = double>
BasicClassifier<T> build_affine(BasicTensor<T> weights, BasicTensor<T> bias) {
  if (weights.rank() != 2 || bias.rank() != 1 || bias.size() != weights.rows()) {
    throw std::invalid_argument("build_affine: W" + shape_string(weights.shape()) +
                                " and b" + shape_string(bias.shape()) + " are incompatible");
  }
  std::vector<LayerSpec> layers{{weights.cols(), weights.rows(), Activation::none}};
  std::vector<BasicTensor<T>> params;
  params.push_back(std::move(weights));
  params.push_back(std::move(bias));
  return BasicClassifier<T>(std::move(layers), std::move(params));
}

/// Hidden widths plus input/output dims to a chained ReLU layer table.
std::vector<LayerSpec> mlp_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t num_classes);

struct ModelSnapshot {
  std::vector<LayerSpec> layers;
  std::vector<Tensor> params;
  std::int64_t epoch = -1;
  std::string tag;

  static ModelSnapshot of(const Classifier& clf, std::int64_t epoch, std::string tag) {
    return {clf.layers(), clf.params(), epoch, std::move(tag)};
  }

  Classifier to_classifier() const { return Classifier(layers, params); }
};

/// Binary container:
///   "COLB" | u32 version | u32 layer count | per layer (u32 in, u32 out,
///   u32 activation) | i64 epoch | u32 tag length | tag bytes |
///   f64 parameters per tensor in declaration order.
/// All integers and floats little-endian.
void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path);
ModelSnapshot load_snapshot(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_snapshot(const ModelSnapshot& snapshot);
ModelSnapshot decode_snapshot(std::span<const std::uint8_t> bytes);

inline constexpr std::uint32_t kSnapshotVersion = 1;

}  // namespace colab
