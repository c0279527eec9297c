#include "colab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "colab/rng.hpp"

namespace colab {

void Dataset::validate() const {
  if (inputs.rows() != labels.size()) {
    throw std::invalid_argument("dataset " + name + ": " + std::to_string(inputs.rows()) +
                                " inputs but " + std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("dataset " + name + ": label " + std::to_string(y) +
                                  " out of range");
    }
  }
  if (pixel_domain) {
    for (double v : inputs.values()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("dataset " + name + ": input value outside [0,1]");
      }
    }
  }
}

Batch gather(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t d = data.input_dim();
  Batch b;
  b.x = Tensor({indices.size(), d});
  b.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = data.inputs.row(indices[r]);
    std::copy(src.begin(), src.end(), b.x.row(r).begin());
    b.y.push_back(data.labels[indices[r]]);
  }
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

Batch whole(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gather(data, all);
}

namespace {

std::size_t pattern_bits(std::size_t num_classes) {
  std::size_t m = 1;
  while ((std::size_t{1} << m) < num_classes) ++m;
  return m;
}

}  // namespace

std::vector<double> blob_center(std::size_t num_classes, std::size_t dim, double separation,
                                std::size_t cls) {
  const std::size_t m = pattern_bits(num_classes);
  std::vector<double> center(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const bool bit = (cls >> (j % m)) & 1U;
    center[j] = 0.5 + (bit ? 0.5 : -0.5) * separation;
  }
  return center;
}

Dataset gen_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                  double separation, double noise_sigma, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("gen_blobs: dimension must be positive");
  if (num_classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
  if (per_class == 0) throw std::invalid_argument("gen_blobs: per_class must be positive");
  if (!(separation > 0.0) || separation > 1.0) {
    throw std::invalid_argument("gen_blobs: separation must lie in (0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("gen_blobs: noise sigma must be >= 0");
  if (dim < pattern_bits(num_classes)) {
    throw std::invalid_argument("gen_blobs: dimension too small to separate " +
                                std::to_string(num_classes) + " classes");
  }

  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < num_classes; ++c) {
    centers.push_back(blob_center(num_classes, dim, separation, c));
  }

  Rng rng(seed);
  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = num_classes;
  ds.pixel_domain = true;
  ds.inputs = Tensor({num_classes * per_class, dim});
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      auto row = ds.inputs.row(ds.labels.size());
      for (std::size_t j = 0; j < dim; ++j) {
        const double noise = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
        row[j] = std::clamp(centers[c][j] + noise, 0.0, 1.0);
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

Dataset gen_rings(std::size_t per_class, const std::vector<double>& radii, double noise_sigma,
                  std::uint64_t seed) {
  if (radii.size() < 2) throw std::invalid_argument("gen_rings: need at least 2 radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] > radii[i - 1]))) {
      throw std::invalid_argument("gen_rings: radii must be positive and strictly increasing");
    }
  }
  if (per_class == 0) throw std::invalid_argument("gen_rings: per_class must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("gen_rings: noise sigma must be >= 0");

  Rng rng(seed);
  Dataset ds;
  ds.name = "rings";
  ds.num_classes = radii.size();
  ds.inputs = Tensor({radii.size() * per_class, 2});
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < radii.size(); ++c) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = radii[c] + (noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0);
      auto row = ds.inputs.row(ds.labels.size());
      row[0] = r * std::cos(angle);
      row[1] = r * std::sin(angle);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

namespace {

std::uint32_t be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size()) {
    throw IdxError(IdxError::Kind::truncated, std::string("idx: truncated header in ") + what);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "idx: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::string name) {
  const std::uint32_t img_magic = be32(images, 0, "images");
  if (img_magic != kIdxImageMagic) {
    throw IdxError(IdxError::Kind::bad_magic, "idx: bad image magic " + std::to_string(img_magic));
  }
  const std::uint32_t lbl_magic = be32(labels, 0, "labels");
  if (lbl_magic != kIdxLabelMagic) {
    throw IdxError(IdxError::Kind::bad_magic, "idx: bad label magic " + std::to_string(lbl_magic));
  }
  const std::size_t n = be32(images, 4, "images");
  const std::size_t rows = be32(images, 8, "images");
  const std::size_t cols = be32(images, 12, "images");
  const std::size_t n_labels = be32(labels, 4, "labels");
  if (n != n_labels) {
    throw IdxError(IdxError::Kind::count_mismatch, "idx: " + std::to_string(n) + " images vs " +
                                                       std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) {
    throw IdxError(IdxError::Kind::truncated, "idx: empty image set");
  }
  const std::size_t d = rows * cols;
  if (images.size() < 16 + n * d) {
    throw IdxError(IdxError::Kind::truncated, "idx: image payload has " +
                                                  std::to_string(images.size() - 16) +
                                                  " bytes, header promises " + std::to_string(n * d));
  }
  if (labels.size() < 8 + n) {
    throw IdxError(IdxError::Kind::truncated, "idx: label payload shorter than header count");
  }

  Dataset ds;
  ds.name = std::move(name);
  ds.pixel_domain = true;
  ds.inputs = Tensor({n, d});
  for (std::size_t i = 0; i < n * d; ++i) ds.inputs[i] = static_cast<double>(images[16 + i]) / 255.0;
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[8 + i];
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  ds.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lbl = read_file(labels);
  return parse_idx(img, lbl, images.filename().string());
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, const BatchPlan& plan) {
  if (plan.batch_size == 0) throw std::invalid_argument("batches: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(stream_seed({plan.shuffle_seed, plan.epoch}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t end = std::min(n, start + plan.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> batches(const Dataset& data, const BatchPlan& plan) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(data.size(), plan)) out.push_back(gather(data, idx));
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (k >= n) return order;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace colab
