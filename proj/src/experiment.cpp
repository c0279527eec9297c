#include "colab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "colab/diffcore.hpp"
#include "colab/probes.hpp"
#include "colab/rng.hpp"

namespace colab {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kDataStream = 100;
constexpr std::uint64_t kModelStream = 200;
constexpr std::uint64_t kProbeSampleStream = 300;
constexpr std::uint64_t kProbeStream = 400;

// Reads fields out of one JSON object, tracking the path for diagnostics and
// rejecting unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(field(key), "wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  void get_size(const char* key, std::size_t& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_number_unsigned()) fail(field(key), "expected a non-negative integer");
    out = it->get<std::size_t>();
  }

  void get_rational(const char* key, Rational& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) fail(field(key), "expected a rational string such as \"8/255\"");
    try {
      out = Rational::parse(it->get<std::string>());
    } catch (const std::exception& e) {
      fail(field(key), e.what());
    }
  }

  void get_attack(const char* key, AttackSpec& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) fail(field(key), "expected an attack string such as \"fgsm(eps=8/255)\"");
    try {
      out = AttackSpec::parse(it->get<std::string>());
    } catch (const std::exception& e) {
      fail(field(key), e.what());
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Reader(it == j_.end() ? empty : *it, field(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(field(key.c_str()), "unknown field");
    }
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config field '" + where + "': " + what);
  }

 private:
  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i <= 20; ++i) f.push_back(i / 20.0);
  return f;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Tensor row_tensor(const Tensor& x, std::size_t r) {
  return Tensor({1, x.cols()}, std::vector<double>(x.row(r).begin(), x.row(r).end()));
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw ConfigError("config line " + std::to_string(line) + ": " + e.what());
  }

  ExperimentConfig c;
  Reader root(j, "");
  root.get("name", c.name);
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  Reader d = root.child("dataset");
  d.get("kind", c.dataset.kind);
  d.get_size("classes", c.dataset.classes);
  d.get_size("dim", c.dataset.dim);
  d.get_size("train_per_class", c.dataset.train_per_class);
  d.get_size("test_per_class", c.dataset.test_per_class);
  d.get_rational("separation", c.dataset.separation);
  d.get("noise_sigma", c.dataset.noise_sigma);
  d.get("radii", c.dataset.radii);
  d.get("train_images", c.dataset.train_images);
  d.get("train_labels", c.dataset.train_labels);
  d.get("test_images", c.dataset.test_images);
  d.get("test_labels", c.dataset.test_labels);
  d.finish();

  Reader m = root.child("model");
  m.get("hidden", c.model.hidden);
  m.finish();

  Reader t = root.child("train");
  t.get_size("epochs", c.train.epochs);
  t.get_size("batch_size", c.train.batch_size);
  t.get("lr", c.train.base_lr);
  t.get("lr_decay_epochs", c.train.lr_decay_epochs);
  t.get("lr_decay_factor", c.train.lr_decay_factor);
  t.get("momentum", c.train.momentum);
  t.get("weight_decay", c.train.weight_decay);
  t.get_attack("attack", c.train.attack);
  t.get_attack("eval_attack", c.train.eval_attack);
  t.get_attack("strong_attack", c.train.strong_attack);
  t.get_size("probe_sample", c.train.probe_sample);
  t.get("epoch_probes", c.train.epoch_probes);
  t.get("record_batches", c.train.record_batches);
  t.get_size("batch_probe_sample", c.train.batch_probe_sample);
  Reader df = t.child("df2");
  df.get("eta", c.train.df2.eta);
  df.get_size("max_iterations", c.train.df2.max_iterations);
  df.finish();
  t.finish();

  Reader p = root.child("probes");
  p.get("epochs", c.probes.epochs);
  p.get("which", c.probes.which);
  p.get_size("sample", c.probes.sample);
  p.get("fractions", c.probes.fractions);
  p.get_size("resolution", c.probes.resolution);
  p.finish();
  root.finish();

  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["output_dir"] = output_dir;

  json d;
  d["kind"] = dataset.kind;
  if (dataset.kind == "blobs") {
    d["classes"] = dataset.classes;
    d["dim"] = dataset.dim;
  }
  if (dataset.kind != "idx") {
    d["train_per_class"] = dataset.train_per_class;
    d["test_per_class"] = dataset.test_per_class;
    d["noise_sigma"] = dataset.noise_sigma;
  }
  if (dataset.kind == "blobs") d["separation"] = dataset.separation.str();
  if (dataset.kind == "rings") d["radii"] = dataset.radii;
  if (dataset.kind == "idx") {
    d["train_images"] = dataset.train_images;
    d["train_labels"] = dataset.train_labels;
    d["test_images"] = dataset.test_images;
    d["test_labels"] = dataset.test_labels;
  }
  j["dataset"] = d;
  j["model"] = {{"hidden", model.hidden}};

  json t;
  t["epochs"] = train.epochs;
  t["batch_size"] = train.batch_size;
  t["lr"] = train.base_lr;
  t["lr_decay_epochs"] = train.lr_decay_epochs;
  t["lr_decay_factor"] = train.lr_decay_factor;
  t["momentum"] = train.momentum;
  t["weight_decay"] = train.weight_decay;
  t["attack"] = train.attack.str();
  t["eval_attack"] = train.eval_attack.str();
  t["strong_attack"] = train.strong_attack.str();
  t["probe_sample"] = train.probe_sample;
  t["epoch_probes"] = train.epoch_probes;
  t["record_batches"] = train.record_batches;
  t["batch_probe_sample"] = train.batch_probe_sample;
  t["df2"] = {{"eta", train.df2.eta}, {"max_iterations", train.df2.max_iterations}};
  j["train"] = t;

  json p;
  p["epochs"] = probes.epochs;
  p["which"] = probes.which;
  p["sample"] = probes.sample;
  p["fractions"] = probes.fractions;
  p["resolution"] = probes.resolution;
  j["probes"] = p;
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& where, const std::string& what) { Reader::fail(where, what); };
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
    bad("name", "must be a non-empty directory name");
  }
  if (dataset.kind == "blobs") {
    if (dataset.classes < 2) bad("dataset.classes", "must be >= 2");
    if (dataset.dim < 1) bad("dataset.dim", "must be >= 1");
    if (dataset.separation.value() <= 0) bad("dataset.separation", "must be > 0");
  } else if (dataset.kind == "rings") {
    if (dataset.radii.size() < 2) bad("dataset.radii", "needs at least two rings");
  } else if (dataset.kind == "idx") {
    if (dataset.train_images.empty() || dataset.train_labels.empty() ||
        dataset.test_images.empty() || dataset.test_labels.empty()) {
      bad("dataset", "idx needs train_images, train_labels, test_images and test_labels");
    }
  } else {
    bad("dataset.kind", "expected blobs, rings or idx, got '" + dataset.kind + "'");
  }
  if (dataset.kind != "idx") {
    if (dataset.train_per_class < 1) bad("dataset.train_per_class", "must be >= 1");
    if (dataset.test_per_class < 1) bad("dataset.test_per_class", "must be >= 1");
    if (!(dataset.noise_sigma >= 0)) bad("dataset.noise_sigma", "must be >= 0");
  }
  for (std::size_t h : model.hidden) {
    if (h < 1) bad("model.hidden", "layer widths must be >= 1");
  }
  if (train.epochs < 1) bad("train.epochs", "must be >= 1");
  if (train.batch_size < 1) bad("train.batch_size", "must be >= 1");
  if (!(train.base_lr > 0.0)) bad("train.lr", "must be > 0");
  if (!(train.lr_decay_factor > 0.0)) bad("train.lr_decay_factor", "must be > 0");
  if (!(train.momentum >= 0.0)) bad("train.momentum", "must be >= 0");
  if (!(train.weight_decay >= 0.0)) bad("train.weight_decay", "must be >= 0");
  try {
    train.df2.validate();
  } catch (const std::invalid_argument& e) {
    bad("train.df2", e.what());
  }
  for (const auto& w : probes.which) {
    const auto& names = probe_names();
    if (std::find(names.begin(), names.end(), w) == names.end()) {
      bad("probes.which", "unknown probe '" + w + "'");
    }
  }
  for (std::size_t e : probes.epochs) {
    if (e >= train.epochs) bad("probes.epochs", "epoch " + std::to_string(e) + " is never reached");
  }
  if (probes.sample < 1) bad("probes.sample", "must be >= 1");
  if (probes.resolution < 2) bad("probes.resolution", "must be >= 2");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  return hex64(fnv1a64(config.to_json_text()));
}

std::pair<Dataset, Dataset> build_datasets(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "blobs") {
    return {gen_blobs(spec.classes, spec.dim, spec.train_per_class, spec.separation.value(),
                      spec.noise_sigma, stream_seed({seed, kDataStream, 0})),
            gen_blobs(spec.classes, spec.dim, spec.test_per_class, spec.separation.value(),
                      spec.noise_sigma, stream_seed({seed, kDataStream, 1}))};
  }
  if (spec.kind == "rings") {
    return {gen_rings(spec.train_per_class, spec.radii, spec.noise_sigma,
                      stream_seed({seed, kDataStream, 0})),
            gen_rings(spec.test_per_class, spec.radii, spec.noise_sigma,
                      stream_seed({seed, kDataStream, 1}))};
  }
  if (spec.kind == "idx") {
    auto train = load_idx(spec.train_images, spec.train_labels);
    auto test = load_idx(spec.test_images, spec.test_labels);
    // Both splits must agree on the class count.
    const std::size_t classes = std::max(train.num_classes, test.num_classes);
    train.num_classes = test.num_classes = classes;
    return {std::move(train), std::move(test)};
  }
  throw ConfigError("unknown dataset kind '" + spec.kind + "'");
}

std::optional<double> mean_diversity(const Classifier& clf, const Tensor& x,
                                     std::span<const int> labels, const AttackSpec& spec,
                                     std::uint64_t seed) {
  const auto a = run_attack(spec, clf, x, labels, stream_seed({seed, 1}));
  const auto b = run_attack(spec, clf, x, labels, stream_seed({seed, 2}));
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (a.l2[r] == 0.0 || b.l2[r] == 0.0) continue;
    total += diversity(a.delta.row(r), b.delta.row(r));
    ++used;
  }
  if (used == 0) return std::nullopt;
  return total / static_cast<double>(used);
}

std::string run_probe(const std::string& which, const Classifier& clf, const Batch& sample,
                      const AttackSpec& spec, std::uint64_t seed, const ProbeOptions& options,
                      const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  json s;
  s["probe"] = which;
  s["attack"] = spec.str();
  s["rows"] = sample.y.size();
  const auto csv_path = dir / (stem + ".csv");
  const auto json_path = dir / (stem + ".json");

  if (which == "diversity") {
    const auto d = mean_diversity(clf, sample.x, sample.y, spec, seed);
    s["mean_diversity"] = d ? json(*d) : json(nullptr);
  } else if (which == "input-grad") {
    s["input_grad_l2_mean"] = input_grad_l2(clf, sample.x, sample.y);
  } else if (which == "df2") {
    const auto st = df2_stats(clf, sample.x, sample.y, options.df2);
    s["mean_iterations"] = st.mean_iterations;
    s["mean_l2"] = st.mean_l2;
    s["fooled_fraction"] = st.fooled_fraction;
  } else if (which == "scaled-curve") {
    const auto fr = options.fractions.empty() ? default_fractions() : options.fractions;
    const auto curve = scaled_accuracy_curve(clf, sample.x, sample.y, spec, fr, seed);
    std::ostringstream out;
    write_curve_csv(out, curve);
    write_text(csv_path, out.str());
    s["accuracy_at_full"] = curve.accuracy.back();
  } else if (which == "cosines") {
    const auto tm = spec.threat_model();
    const Tensor init = uniform_init(sample.x.shape(), tm.epsilon, seed);
    Perturbation p;
    if (spec.method == AttackMethod::rs_fgsm) {
      p = rs_fgsm_from(clf, sample.x, sample.y, tm, init);
    } else if (spec.method == AttackMethod::rs_deepfool_linf_1) {
      p = rs_deepfool_linf_1_from(clf, sample.x, sample.y, tm, spec.deepfool, init);
    } else {
      throw std::invalid_argument("cosines probe needs rs_fgsm or rs_df_linf_1, got " +
                                  method_name(spec.method));
    }
    const Tensor gs = gradient_sign(clf, sample.x, sample.y, Tensor(sample.x.shape()));
    std::ostringstream out;
    out << "index,cos_init,cos_grad_sign\n";
    double ci = 0.0, cg = 0.0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < sample.y.size(); ++r) {
      if (norm_l2(p.delta.row(r)) == 0.0 || norm_l2(gs.row(r)) == 0.0) continue;
      const auto c = direction_cosines(p.delta.row(r), init.row(r), gs.row(r));
      out << sample.indices[r] << ',' << format_g9(c.to_init) << ',' << format_g9(c.to_grad_sign)
          << '\n';
      ci += c.to_init;
      cg += c.to_grad_sign;
      ++used;
    }
    write_text(csv_path, out.str());
    s["rows_used"] = used;
    s["mean_cos_init"] = used ? json(ci / used) : json(nullptr);
    s["mean_cos_grad_sign"] = used ? json(cg / used) : json(nullptr);
  } else if (which == "cross-section") {
    std::optional<std::size_t> anchor;
    Tensor x0, v1, v2;
    int y0[1] = {0};
    for (std::size_t r = 0; r < sample.x.rows() && !anchor; ++r) {
      x0 = row_tensor(sample.x, r);
      y0[0] = sample.y[r];
      v1 = deepfool_l2(clf, x0, y0, options.df2).perturbation.delta;
      v2 = run_attack(spec, clf, x0, y0, seed).delta;
      if (norm_l2(v1.values()) > 0.0 && norm_l2(v2.values()) > 0.0) anchor = r;
    }
    if (!anchor) throw std::invalid_argument("cross-section: no sample row has two nonzero spanning perturbations");
    const auto grid = cross_section(clf, x0.values(), v1.values(), v2.values(), -1.5, 1.5,
                                    options.resolution, y0[0]);
    std::ostringstream out;
    write_cross_section_csv(out, grid);
    write_text(csv_path, out.str());
    const std::string sidecar = cross_section_json(grid, sample.indices[*anchor]);
    write_text(json_path, sidecar + "\n");
    return sidecar;
  } else {
    throw std::invalid_argument("unknown probe '" + which + "'");
  }
  const std::string text = s.dump(2);
  write_text(json_path, text + "\n");
  return text;
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::optional<std::filesystem::path>& out) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path dir =
      (out ? *out : std::filesystem::path(config.output_dir)) / config.name;
  std::filesystem::create_directories(dir / "snapshots");
  std::filesystem::create_directories(dir / "probes");
  write_text(dir / "config.json", config.to_json_text());

  auto [train_set, test_set] = build_datasets(config.dataset, config.seed);
  train_set.validate();
  test_set.validate();
  const auto layers =
      mlp_layers(train_set.input_dim(), config.model.hidden, train_set.num_classes);
  Classifier model = build_mlp<double>(layers, stream_seed({config.seed, kModelStream}));

  TrainConfig tc = config.train;
  tc.seed = config.seed;
  const auto sample_idx = sample_indices(test_set.size(), config.probes.sample,
                                         stream_seed({config.seed, kProbeSampleStream}));
  const Batch sample = gather(test_set, sample_idx);
  ProbeOptions popts{config.probes.fractions, config.probes.resolution, tc.df2};

  EpochHook hook = [&](const Classifier& clf, const EpochRecord& rec) {
    if (std::find(config.probes.epochs.begin(), config.probes.epochs.end(), rec.epoch) ==
        config.probes.epochs.end()) {
      return;
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "epoch_%03zu_", rec.epoch);
    for (const auto& which : config.probes.which) {
      run_probe(which, clf, sample, tc.attack, stream_seed({config.seed, kProbeStream, rec.epoch}),
                popts, dir / "probes", stem + which);
    }
  };

  RunResult result{dir, train(tc, std::move(model), train_set, test_set, hook)};

  {
    std::ostringstream csv;
    write_epoch_csv(csv, result.train.trace.epochs);
    write_text(dir / "epochs.csv", csv.str());
  }
  if (tc.record_batches) {
    std::ostringstream csv;
    write_batch_csv(csv, result.train.trace.batches);
    write_text(dir / "batches.csv", csv.str());
  }
  save_snapshot(result.train.best, dir / "snapshots" / "best.colb");
  save_snapshot(ModelSnapshot::of(result.train.model,
                                  static_cast<std::int64_t>(tc.epochs) - 1, "final"),
                dir / "snapshots" / "final.colb");

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json m;
  m["name"] = config.name;
  m["config_hash"] = config_hash(config);
  m["code_version"] = COLAB_VERSION;
  m["wall_time_seconds"] = wall;
  m["attack"] = tc.attack.str();
  m["eps"] = tc.attack.eps.str();
  m["alpha"] = tc.attack.alpha.str();
  m["epochs"] = result.train.trace.epochs.size();
  m["best_epoch"] = result.train.best.epoch;
  m["train_size"] = train_set.size();
  m["test_size"] = test_set.size();
  m["probe_sample_indices"] = sample_idx;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  return result;
}

}  // namespace colab
