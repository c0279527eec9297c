#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "colab/experiment.hpp"
#include "colab/probes.hpp"
#include "colab/rng.hpp"

namespace {

using namespace colab;

struct Options {
  std::string config;
  std::string out;
  std::string snapshot;
  std::string attack;
  std::string which;
  std::string csv;
  std::optional<std::uint64_t> seed;
  CoDetectorConfig co;
};

ExperimentConfig load_config(const Options& o) {
  auto cfg = ExperimentConfig::load(o.config);
  if (o.seed) cfg.seed = cfg.train.seed = *o.seed;
  if (!o.attack.empty()) {
    try {
      cfg.train.attack = AttackSpec::parse(o.attack);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("--attack: ") + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

Classifier load_model(const Options& o, const Dataset& data) {
  if (!std::filesystem::exists(o.snapshot)) {
    throw std::runtime_error("snapshot not found: " + o.snapshot);
  }
  const auto clf = load_snapshot(o.snapshot).to_classifier();
  if (clf.input_dim() != data.input_dim()) {
    throw std::runtime_error("snapshot input dimension " + std::to_string(clf.input_dim()) +
                             " does not match dataset dimension " +
                             std::to_string(data.input_dim()));
  }
  return clf;
}

int cmd_train(const Options& o) {
  const auto cfg = load_config(o);
  std::optional<std::filesystem::path> out;
  if (!o.out.empty()) out = o.out;
  const auto res = run_experiment(cfg, out);
  const auto& last = res.train.trace.epochs.back();
  std::cout << "wrote " << res.dir.string() << "\n"
            << "final: std_acc=" << format_g9(last.std_acc)
            << " weak_test_acc=" << format_g9(last.weak_test_acc)
            << " strong_test_acc=" << format_g9(last.strong_test_acc) << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const auto cfg = load_config(o);
  const auto [train_set, test_set] = build_datasets(cfg.dataset, cfg.seed);
  const auto clf = load_model(o, test_set);
  const AttackSpec spec = o.attack.empty() ? cfg.train.strong_attack : AttackSpec::parse(o.attack);
  nlohmann::ordered_json j;
  j["attack"] = spec.str();
  j["label"] = spec.label();
  j["examples"] = test_set.size();
  j["accuracy"] = evaluate(clf, test_set, spec, stream_seed({cfg.seed, 500}));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_probe(const Options& o, const std::string& which) {
  const auto cfg = load_config(o);
  const auto [train_set, test_set] = build_datasets(cfg.dataset, cfg.seed);
  const auto clf = load_model(o, test_set);
  const auto idx = sample_indices(test_set.size(), cfg.probes.sample, stream_seed({cfg.seed, 300}));
  const Batch sample = gather(test_set, idx);
  const std::filesystem::path dir = std::filesystem::path(o.out.empty() ? "." : o.out);
  const ProbeOptions popts{cfg.probes.fractions, cfg.probes.resolution, cfg.train.df2};
  std::cout << run_probe(which, clf, sample, cfg.train.attack, stream_seed({cfg.seed, 400}), popts,
                         dir, which)
            << "\n";
  return 0;
}

int cmd_detect_co(const Options& o) {
  std::ifstream in(o.csv);
  if (!in) throw std::runtime_error("cannot open epoch csv: " + o.csv);
  const auto trace = read_epoch_csv(in);
  std::cout << co_events_json(detect_co(trace, o.co)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-training lab for catastrophic overfitting"};
  app.set_version_flag("--version", COLAB_VERSION);
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool snapshot) {
    sub->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--attack", o.attack, "Attack spec, e.g. \"pgd(eps=8/255,alpha=2/255,steps=50,restarts=10)\"");
    sub->add_option("--out", o.out, "Output directory");
    if (snapshot) sub->add_option("--snapshot", o.snapshot, "Model snapshot (.colb)")->required();
  };

  auto* train = app.add_subcommand("train", "Train per config and write the run directory");
  train->alias("run");
  add_common(train, false);

  auto* eval = app.add_subcommand("eval", "Robust accuracy of a snapshot on the test split");
  add_common(eval, true);

  auto* probe = app.add_subcommand("probe", "Run one probe on a snapshot");
  add_common(probe, true);
  probe->add_option("--which", o.which, "Probe name")
      ->required()
      ->check(CLI::IsMember(probe_names()));

  auto* xsec = app.add_subcommand("cross-section", "Decision-boundary cross-section of a snapshot");
  add_common(xsec, true);

  auto* co = app.add_subcommand("detect-co", "Catastrophic-overfitting events in an epoch CSV");
  co->add_option("csv,--csv", o.csv, "Epoch CSV")->required();
  co->add_option("--window", o.co.window, "Window in epochs")->check(CLI::PositiveNumber);
  co->add_option("--strong-drop", o.co.strong_drop, "Strong-accuracy drop in points");
  co->add_option("--weak-rise", o.co.weak_rise, "Weak-accuracy rise in points");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*probe) return cmd_probe(o, o.which);
    if (*xsec) return cmd_probe(o, "cross-section");
    if (*co) return cmd_detect_co(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
