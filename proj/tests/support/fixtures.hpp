#pragma once

#include <vector>

#include "colab/classifier.hpp"
#include "colab/metrics.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab::testing {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

inline Classifier random_affine(std::size_t classes, std::size_t dim, std::uint64_t seed) {
  return build_affine(random_normal({classes, dim}, seed), random_normal({classes}, seed + 1));
}

inline Classifier random_mlp(std::size_t dim, std::vector<std::size_t> hidden, std::size_t classes,
                             std::uint64_t seed) {
  return build_mlp<double>(mlp_layers(dim, hidden, classes), seed);
}

// Epoch traces shaped like the two catastrophic-overfitting regimes.

inline std::vector<EpochRecord> fast_co_trace() {
  std::vector<EpochRecord> t;
  for (std::size_t e = 0; e < 30; ++e) {
    EpochRecord r;
    r.epoch = e;
    if (e <= 13) {
      r.strong_test_acc = 0.20 + 0.25 * static_cast<double>(e) / 13.0;
      r.weak_train_acc = 0.40 + 0.20 * static_cast<double>(e) / 13.0;
    } else {
      r.strong_test_acc = 0.0;
      r.weak_train_acc = 0.95;
    }
    r.std_acc = 0.8;
    r.weak_test_acc = r.strong_test_acc;
    t.push_back(r);
  }
  return t;
}

inline std::vector<EpochRecord> slow_co_trace() {
  std::vector<EpochRecord> t;
  for (std::size_t e = 0; e < 80; ++e) {
    EpochRecord r;
    r.epoch = e;
    const double k = static_cast<double>(e);
    if (e <= 36) {
      r.strong_test_acc = 0.20 + 0.25 * k / 36.0;
      r.weak_train_acc = 0.50 + 0.10 * k / 36.0;
    } else if (e <= 56) {
      r.strong_test_acc = 0.45 * (56.0 - k) / 20.0;
      r.weak_train_acc = 0.60 + 0.30 * (k - 36.0) / 20.0;
    } else {
      r.strong_test_acc = 0.0;
      r.weak_train_acc = 0.90;
    }
    r.std_acc = 0.8;
    r.weak_test_acc = r.strong_test_acc;
    t.push_back(r);
  }
  return t;
}

inline std::vector<EpochRecord> monotone_trace() {
  std::vector<EpochRecord> t;
  for (std::size_t e = 0; e < 40; ++e) {
    EpochRecord r;
    r.epoch = e;
    r.strong_test_acc = 0.1 + 0.01 * static_cast<double>(e);
    r.weak_train_acc = 0.2 + 0.015 * static_cast<double>(e);
    r.std_acc = 0.5 + 0.01 * static_cast<double>(e);
    r.weak_test_acc = r.strong_test_acc;
    t.push_back(r);
  }
  return t;
}

}  // namespace colab::testing
