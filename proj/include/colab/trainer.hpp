#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "colab/attack_spec.hpp"
#include "colab/classifier.hpp"
#include "colab/data.hpp"
#include "colab/metrics.hpp"

namespace colab {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double base_lr = 0.1;
  std::vector<std::size_t> lr_decay_epochs;
  double lr_decay_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  AttackSpec attack;  // training adversary; none = standard training
  AttackSpec eval_attack = AttackSpec::parse("pgd(eps=8/255,steps=10,restarts=1)");
  AttackSpec strong_attack = AttackSpec::parse("pgd(eps=8/255,steps=50,restarts=10)");
  std::uint64_t seed = 0;

  /// Seeded test subsample for the per-epoch strong attack and probes.
  std::size_t probe_sample = 512;
  /// Computes strong accuracy, input-gradient norms and DF2 statistics per epoch.
  bool epoch_probes = true;
  /// Per-batch records; probes run on `batch_probe_sample` test examples.
  bool record_batches = false;
  std::size_t batch_probe_sample = 64;
  DeepFoolConfig df2;

  void validate() const;
};

/// Piecewise-constant schedule: base_lr divided by the decay factor once for
/// every decay epoch <= epoch.
double lr_at(const TrainConfig& config, std::size_t epoch);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fraction of examples still classified correctly under `spec` (clean
/// accuracy for none). Multi-restart attacks count an example as robust only
/// if every restart fails.
double evaluate(const Classifier& clf, const Dataset& data, const AttackSpec& spec,
                std::uint64_t seed, std::size_t batch_size = 256);

/// Same, over an explicit batch.
double evaluate(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                const AttackSpec& spec, std::uint64_t seed);

struct TrainResult {
  Classifier model;
  MetricsTrace trace;
  ModelSnapshot best;
};

/// Called after each epoch's record is complete.
using EpochHook = std::function<void(const Classifier&, const EpochRecord&)>;

/// Momentum SGD on l(x + delta, y) with delta from config.attack. The best
/// snapshot maximises eval_attack accuracy on the full test set (earliest
/// epoch on ties). Throws TrainingDiverged on a non-finite loss.
TrainResult train(const TrainConfig& config, Classifier model, const Dataset& train_set,
                  const Dataset& test_set, const EpochHook& hook = {});

}  // namespace colab
