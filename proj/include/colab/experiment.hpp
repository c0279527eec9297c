#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "colab/attack_spec.hpp"
#include "colab/data.hpp"
#include "colab/trainer.hpp"

namespace colab {

/// Invalid experiment configuration; the message names the offending field
/// (and line, for JSON syntax errors).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind = "blobs";  // blobs | rings | idx
  // blobs
  std::size_t classes = 2;
  std::size_t dim = 20;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  Rational separation{64, 255};
  double noise_sigma = 0.05;
  // rings
  std::vector<double> radii{1.0, 2.0, 3.0};
  // idx
  std::string train_images, train_labels, test_images, test_labels;
};

struct ModelSpec {
  std::vector<std::size_t> hidden{32};
};

struct ProbeSchedule {
  std::vector<std::size_t> epochs;  // empty: no scheduled probes
  std::vector<std::string> which;   // names accepted by run_probe
  std::size_t sample = 64;
  std::vector<double> fractions;    // scaled-curve; empty = 0, 0.05, ..., 1
  std::size_t resolution = 101;     // cross-section
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  ProbeSchedule probes;

  /// Throws ConfigError with a field path on error.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
  void validate() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
/// Hex FNV-1a of the canonical config text.
std::string config_hash(const ExperimentConfig& config);

/// (train, test) for a dataset spec; generated datasets draw from `seed`.
std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& spec, std::uint64_t seed);

inline const std::vector<std::string>& probe_names() {
  static const std::vector<std::string> names{"diversity", "input-grad", "df2", "scaled-curve",
                                              "cosines", "cross-section"};
  return names;
}

struct ProbeOptions {
  std::vector<double> fractions;
  std::size_t resolution = 101;
  DeepFoolConfig df2;
};

/// Runs one named probe for `spec` on the sample and writes its files into
/// `dir` with the given file stem. Returns a JSON summary.
std::string run_probe(const std::string& which, const Classifier& clf, const Batch& sample,
                      const AttackSpec& spec, std::uint64_t seed, const ProbeOptions& options,
                      const std::filesystem::path& dir, const std::string& stem);

/// Mean diversity of two independent draws of `spec` over the rows; rows
/// where either draw is zero are skipped. Returns nullopt if all are skipped.
std::optional<double> mean_diversity(const Classifier& clf, const Tensor& x,
                                     std::span<const int> labels, const AttackSpec& spec,
                                     std::uint64_t seed);

struct RunResult {
  std::filesystem::path dir;
  TrainResult train;
};

/// Trains and writes `<out>/<name>/{config.json, manifest.json, epochs.csv,
/// batches.csv, snapshots/, probes/}`. `out` defaults to config.output_dir.
RunResult run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& out = std::nullopt);

}  // namespace colab
