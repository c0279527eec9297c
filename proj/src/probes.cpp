#include "colab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "colab/diffcore.hpp"

namespace colab {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
  const double aa = dot(a, a), bb = dot(b, b);
  if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("cosine: zero vector");
  // sqrt(fl(d * d)) == d, so cosine(v, v) is exactly 1.
  return std::clamp(dot(a, b) / std::sqrt(aa * bb), -1.0, 1.0);
}

double diversity(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine(a, b);
}

DirectionCosines direction_cosines(std::span<const double> delta, std::span<const double> init,
                                   std::span<const double> grad_sign) {
  return {cosine(delta, init), cosine(delta, grad_sign)};
}

double input_grad_l2(const Classifier& clf, const Tensor& x, std::span<const int> labels) {
  if (x.rows() == 0) throw std::invalid_argument("input_grad_l2: empty sample");
  const Tensor g = per_example_input_grads(clf, x, labels);
  double total = 0.0;
  for (std::size_t r = 0; r < g.rows(); ++r) total += norm_l2(g.row(r));
  return total / static_cast<double>(g.rows());
}

Df2Stats df2_stats(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                   const DeepFoolConfig& cfg) {
  if (x.rows() == 0) throw std::invalid_argument("df2_stats: empty sample");
  double iters = 0.0, norms = 0.0, fooled = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Tensor row({1, x.cols()}, std::vector<double>(x.row(r).begin(), x.row(r).end()));
    const int y[1] = {labels[r]};
    try {
      const auto res = deepfool_l2(clf, row, y, cfg);
      iters += static_cast<double>(res.iterations[0]);
      norms += norm_l2(res.raw.values());
      fooled += res.fooled[0] ? 1.0 : 0.0;
    } catch (const DegenerateLinearization&) {
      iters += static_cast<double>(cfg.max_iterations);
    }
  }
  const double n = static_cast<double>(x.rows());
  return {iters / n, norms / n, fooled / n};
}

AccuracyCurve scaled_accuracy_curve(const Classifier& clf, const Tensor& x,
                                    std::span<const int> labels, const AttackSpec& spec,
                                    const std::vector<double>& fractions, std::uint64_t seed) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0) || (i > 0 && fractions[i] < fractions[i - 1])) {
      throw std::invalid_argument("scaled_accuracy_curve: fractions must be sorted within [0,1]");
    }
  }
  const auto p = run_attack(spec, clf, x, labels, seed);
  AccuracyCurve curve;
  curve.fractions = fractions;
  curve.attack = spec.str();
  for (double f : fractions) {
    const auto pred = predict(clf, x + scale_perturbation(p.delta, f));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < pred.size(); ++r) correct += pred[r] == labels[r];
    curve.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(pred.size()));
  }
  return curve;
}

void write_curve_csv(std::ostream& out, const AccuracyCurve& curve) {
  out << "fraction,accuracy\n";
  for (std::size_t i = 0; i < curve.fractions.size(); ++i) {
    out << format_g9(curve.fractions[i]) << ',' << format_g9(curve.accuracy[i]) << '\n';
  }
}

double CrossSectionGrid::coord(std::size_t i) const {
  return range_lo + (range_hi - range_lo) * static_cast<double>(i) /
                        static_cast<double>(resolution - 1);
}

CrossSectionGrid cross_section(const Classifier& clf, std::span<const double> x,
                               std::span<const double> v1, std::span<const double> v2,
                               double range_lo, double range_hi, std::size_t resolution,
                               int true_label) {
  if (v1.size() != x.size() || v2.size() != x.size()) {
    throw std::invalid_argument("cross_section: axis dimension mismatch");
  }
  if (norm_l2(v1) == 0.0 || norm_l2(v2) == 0.0) {
    throw std::invalid_argument("cross_section: zero axis vector");
  }
  if (resolution < 2) throw std::invalid_argument("cross_section: resolution must be >= 2");
  if (!(range_hi > range_lo)) throw std::invalid_argument("cross_section: empty range");

  CrossSectionGrid grid;
  grid.anchor.assign(x.begin(), x.end());
  grid.axis1.assign(v1.begin(), v1.end());
  grid.axis2.assign(v2.begin(), v2.end());
  grid.range_lo = range_lo;
  grid.range_hi = range_hi;
  grid.resolution = resolution;
  grid.true_label = true_label;

  const std::size_t d = x.size();
  grid.labels.resize(resolution * resolution);
  // One row of the grid per forward pass.
  Tensor points({resolution, d});
  for (std::size_t i = 0; i < resolution; ++i) {
    const double s = grid.coord(i);
    for (std::size_t j = 0; j < resolution; ++j) {
      const double t = grid.coord(j);
      // s*v1 + t*v2 is summed before adding x so swapping the axes gives
      // bitwise-identical points.
      for (std::size_t k = 0; k < d; ++k) points.at(j, k) = x[k] + (s * v1[k] + t * v2[k]);
    }
    const Tensor logits = forward(clf, points);
    for (std::size_t j = 0; j < resolution; ++j) {
      grid.labels[i * resolution + j] = static_cast<int>(argmax(logits.row(j)));
    }
  }
  const Tensor clean = forward(clf, Tensor({1, d}, std::vector<double>(x.begin(), x.end())));
  grid.clean_label = static_cast<int>(argmax(clean.values()));
  return grid;
}

void write_cross_section_csv(std::ostream& out, const CrossSectionGrid& grid) {
  out << "s,t,label\n";
  for (std::size_t i = 0; i < grid.resolution; ++i) {
    for (std::size_t j = 0; j < grid.resolution; ++j) {
      out << format_g9(grid.coord(i)) << ',' << format_g9(grid.coord(j)) << ',' << grid.label(i, j)
          << '\n';
    }
  }
}

std::string cross_section_json(const CrossSectionGrid& grid, std::size_t anchor_index) {
  nlohmann::ordered_json j;
  j["anchor_index"] = anchor_index;
  j["axis1_l2"] = norm_l2(grid.axis1);
  j["axis2_l2"] = norm_l2(grid.axis2);
  j["axis1_linf"] = norm_linf(grid.axis1);
  j["axis2_linf"] = norm_linf(grid.axis2);
  j["range"] = {grid.range_lo, grid.range_hi};
  j["resolution"] = grid.resolution;
  j["true_label"] = grid.true_label;
  j["clean_label"] = grid.clean_label;
  return j.dump(2);
}

std::vector<CoEvent> detect_co(const std::vector<EpochRecord>& trace, const CoDetectorConfig& cfg) {
  if (cfg.window < 1) throw std::invalid_argument("detect_co: window must be >= 1");
  if (trace.size() < cfg.window + 1) {
    throw std::invalid_argument("detect_co: trace has " + std::to_string(trace.size()) +
                                " epochs, window " + std::to_string(cfg.window) + " needs " +
                                std::to_string(cfg.window + 1));
  }
  constexpr double kSlack = 1e-9;
  std::vector<CoEvent> events;
  std::size_t last_candidate = 0;
  bool open = false;
  for (std::size_t e = 0; e + cfg.window < trace.size(); ++e) {
    const auto& before = trace[e];
    const auto& after = trace[e + cfg.window];
    const bool falling = trace[e + 1].strong_test_acc < before.strong_test_acc;
    const double drop = 100.0 * (before.strong_test_acc - after.strong_test_acc);
    const double rise = 100.0 * (after.weak_train_acc - before.weak_train_acc);
    if (!falling || drop + kSlack < cfg.strong_drop || rise + kSlack < cfg.weak_rise) continue;
    if (open && e <= last_candidate + cfg.window) {
      last_candidate = e;
      continue;
    }
    events.push_back({before.epoch, before.strong_test_acc, after.strong_test_acc,
                      before.weak_train_acc, after.weak_train_acc, cfg.window});
    last_candidate = e;
    open = true;
  }
  return events;
}

std::string co_events_json(const std::vector<CoEvent>& events) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["onset_epoch"] = e.onset_epoch;
    j["strong_acc_before"] = e.strong_before;
    j["strong_acc_after"] = e.strong_after;
    j["weak_acc_before"] = e.weak_before;
    j["weak_acc_after"] = e.weak_after;
    j["window"] = e.window;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace colab
