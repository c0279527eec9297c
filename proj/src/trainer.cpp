#include "colab/trainer.hpp"

#include <cmath>
#include <string>

#include "colab/diffcore.hpp"
#include "colab/probes.hpp"
#include "colab/rng.hpp"

namespace colab {

namespace {

// Stream tags so that training, evaluation and probe randomness never share
// a seed for the same (epoch, batch).
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kStrongStream = 3;
constexpr std::uint64_t kSampleStream = 4;
constexpr std::uint64_t kBatchProbeStream = 5;

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) n += static_cast<int>(argmax(logits.row(r))) == labels[r];
  return n;
}

std::string best_tag(const AttackSpec& spec) {
  if (spec.method == AttackMethod::pgd && spec.restarts == 1) {
    return "best-by-test-PGD" + std::to_string(spec.steps);
  }
  return "best-by-test-" + spec.label();
}

struct ProbeValues {
  double weak_acc = 0.0;
  double grad_l2 = 0.0;
  Df2Stats df2;
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw std::invalid_argument("train config: base_lr must be > 0");
  if (!(lr_decay_factor > 0.0)) throw std::invalid_argument("train config: lr_decay_factor must be > 0");
  if (!(momentum >= 0.0)) throw std::invalid_argument("train config: momentum must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
  df2.validate();
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  double lr = config.base_lr;
  for (std::size_t boundary : config.lr_decay_epochs) {
    if (epoch >= boundary) lr /= config.lr_decay_factor;
  }
  return lr;
}

double evaluate(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                const AttackSpec& spec, std::uint64_t seed) {
  const auto p = run_attack(spec, clf, x, labels, seed, RestartSelect::prefer_misclassified);
  const Tensor logits = forward(clf, x + p.delta);
  return static_cast<double>(count_correct(logits, labels)) / static_cast<double>(labels.size());
}

double evaluate(const Classifier& clf, const Dataset& data, const AttackSpec& spec,
                std::uint64_t seed, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  std::size_t b = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size, ++b) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch batch = gather(data, idx);
    const auto p = run_attack(spec, clf, batch.x, batch.y, stream_seed({seed, b}),
                              RestartSelect::prefer_misclassified);
    correct += count_correct(forward(clf, batch.x + p.delta), batch.y);
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const TrainConfig& config, Classifier model, const Dataset& train_set,
                  const Dataset& test_set, const EpochHook& hook) {
  config.validate();
  if (train_set.size() == 0 || test_set.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (train_set.input_dim() != model.input_dim() || test_set.input_dim() != model.input_dim()) {
    throw std::invalid_argument("train: dataset dimension does not match the model");
  }

  const Batch probe = gather(test_set, sample_indices(test_set.size(), config.probe_sample,
                                                      stream_seed({config.seed, kSampleStream})));
  const Batch batch_probe =
      gather(test_set, sample_indices(test_set.size(), config.batch_probe_sample,
                                      stream_seed({config.seed, kBatchProbeStream})));

  auto run_probes = [&](const Classifier& clf, const Batch& sample, std::uint64_t seed) {
    ProbeValues v;
    v.weak_acc = evaluate(clf, sample.x, sample.y, config.eval_attack, seed);
    v.grad_l2 = input_grad_l2(clf, sample.x, sample.y);
    v.df2 = df2_stats(clf, sample.x, sample.y, config.df2);
    return v;
  };

  std::vector<Tensor> velocity;
  for (const auto& p : model.params()) velocity.emplace_back(p.shape());

  TrainResult result{model, {}, ModelSnapshot::of(model, -1, best_tag(config.eval_attack))};
  double best_weak = -1.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const auto plan = BatchPlan{config.batch_size, config.seed, epoch};
    std::size_t seen = 0, adv_correct = 0;
    double delta_l2_sum = 0.0, gap_sum = 0.0;

    const auto index_batches = batch_indices(train_set.size(), plan);
    for (std::size_t b = 0; b < index_batches.size(); ++b) {
      const Batch batch = gather(train_set, index_batches[b]);
      const auto p = run_attack(config.attack, model, batch.x, batch.y,
                                stream_seed({config.seed, kTrainStream, epoch, b}));
      const Tensor adv = batch.x + p.delta;
      const auto bundle = grad_all(model, adv, batch.y);
      if (!std::isfinite(bundle.loss)) {
        throw TrainingDiverged("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      const Tensor adv_logits = forward(model, adv);
      const double clean_loss = loss(forward(model, batch.x), std::span<const int>(batch.y));
      const std::size_t rows = batch.y.size();
      const std::size_t batch_correct = count_correct(adv_logits, batch.y);
      seen += rows;
      adv_correct += batch_correct;
      delta_l2_sum += p.mean_l2() * static_cast<double>(rows);
      gap_sum += (bundle.loss - clean_loss) * static_cast<double>(rows);

      auto& params = model.mutable_params();
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& theta = params[k];
        auto& v = velocity[k];
        const auto& g = bundle.param_grads[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          const double step = g[i] + config.weight_decay * theta[i];
          v[i] = config.momentum * v[i] + step;
          theta[i] -= lr * v[i];
        }
      }

      if (config.record_batches) {
        BatchRecord rec;
        rec.epoch = epoch;
        rec.batch = b;
        rec.lr = lr;
        rec.train_loss = bundle.loss;
        rec.weak_train_acc = static_cast<double>(batch_correct) / static_cast<double>(rows);
        rec.delta_l2_mean = p.mean_l2();
        rec.loss_gap = bundle.loss - clean_loss;
        const auto pv = run_probes(model, batch_probe, stream_seed({config.seed, kEvalStream, epoch, b}));
        rec.weak_test_acc = pv.weak_acc;
        rec.input_grad_l2_mean = pv.grad_l2;
        rec.df2_iters_mean = pv.df2.mean_iterations;
        rec.df2_norm_mean = pv.df2.mean_l2;
        result.trace.batches.push_back(rec);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.std_acc = evaluate(model, test_set, AttackSpec::none(), 0);
    rec.weak_train_acc = static_cast<double>(adv_correct) / static_cast<double>(seen);
    rec.weak_test_acc = evaluate(model, test_set, config.eval_attack,
                                 stream_seed({config.seed, kEvalStream, epoch}));
    rec.delta_l2_mean = delta_l2_sum / static_cast<double>(seen);
    rec.loss_gap = gap_sum / static_cast<double>(seen);
    if (config.epoch_probes) {
      rec.strong_test_acc = evaluate(model, probe.x, probe.y, config.strong_attack,
                                     stream_seed({config.seed, kStrongStream, epoch}));
      rec.input_grad_l2_mean = input_grad_l2(model, probe.x, probe.y);
      const auto df2 = df2_stats(model, probe.x, probe.y, config.df2);
      rec.df2_iters_mean = df2.mean_iterations;
      rec.df2_norm_mean = df2.mean_l2;
    }
    result.trace.epochs.push_back(rec);

    if (rec.weak_test_acc > best_weak) {
      best_weak = rec.weak_test_acc;
      result.best = ModelSnapshot::of(model, static_cast<std::int64_t>(epoch), result.best.tag);
    }
    if (hook) hook(model, rec);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace colab
