#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colab/tensor.hpp"

namespace colab {

/// In-memory labelled examples; `inputs` is (N, d).
struct Dataset {
  std::string name;
  Tensor inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  bool pixel_domain = false;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return inputs.cols(); }

  /// Throws if labels are out of range or pixel-domain inputs leave [0,1].
  void validate() const;
};

struct Batch {
  Tensor x;
  std::vector<int> y;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& data, std::span<const std::size_t> indices);
Batch whole(const Dataset& data);

/// Class centers for gen_blobs: 0.5 + (separation/2) * s_c where s_c is the
/// ±1 pattern whose coordinate j is bit (j mod m) of c, m = ceil(log2 C).
/// Any two centers are exactly `separation` apart in l∞.
std::vector<double> blob_center(std::size_t num_classes, std::size_t dim, double separation,
                                std::size_t cls);

/// Gaussian blobs around blob_center, clamped to [0,1]^d. Examples are
/// interleaved by class.
Dataset gen_blobs(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                  double separation, double noise_sigma, std::uint64_t seed);

/// Concentric rings in the plane, label = ring index; not pixel-domain.
Dataset gen_rings(std::size_t per_class, const std::vector<double>& radii, double noise_sigma,
                  std::uint64_t seed);

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// IDX image/label pair; pixels scaled by 1/255 into [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::string name = "idx");

struct BatchPlan {
  std::size_t batch_size = 1;
  std::uint64_t shuffle_seed = 0;
  std::size_t epoch = 0;
};

/// Index batches covering a permutation of [0, N) fixed by
/// (shuffle_seed, epoch). The last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, const BatchPlan& plan);
std::vector<Batch> batches(const Dataset& data, const BatchPlan& plan);

/// First k indices of a seeded permutation of [0, n), sorted ascending.
/// k >= n returns every index.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace colab
