#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "colab/attack_spec.hpp"
#include "colab/attacks.hpp"
#include "colab/classifier.hpp"
#include "colab/metrics.hpp"

namespace colab {

// -- direction statistics ---------------------------------------------------

/// Cosine similarity; throws std::invalid_argument for a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

/// 1 - cos(a, b), in [0, 2].
double diversity(std::span<const double> a, std::span<const double> b);

struct DirectionCosines {
  double to_init = 0.0;
  double to_grad_sign = 0.0;
};

DirectionCosines direction_cosines(std::span<const double> delta, std::span<const double> init,
                                   std::span<const double> grad_sign);

// -- margin and gradient statistics ----------------------------------------

/// Mean over rows of ||d loss_i / d x_i||_2.
double input_grad_l2(const Classifier& clf, const Tensor& x, std::span<const int> labels);

struct Df2Stats {
  double mean_iterations = 0.0;
  double mean_l2 = 0.0;  // of the accumulated perturbation before overshoot
  double fooled_fraction = 0.0;
};

/// Runs DF2 on every row. A row whose linearization degenerates counts as
/// not fooled, with max_iterations and zero norm.
Df2Stats df2_stats(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                   const DeepFoolConfig& cfg = {});

// -- scaled-perturbation accuracy ------------------------------------------

struct AccuracyCurve {
  std::vector<double> fractions;
  std::vector<double> accuracy;
  std::string attack;
  std::size_t epoch = 0;
};

/// Accuracy at x + f * delta for each fraction f, with delta built once by
/// `spec`. Fractions must be sorted ascending within [0, 1].
AccuracyCurve scaled_accuracy_curve(const Classifier& clf, const Tensor& x,
                                    std::span<const int> labels, const AttackSpec& spec,
                                    const std::vector<double>& fractions, std::uint64_t seed);

void write_curve_csv(std::ostream& out, const AccuracyCurve& curve);

// -- cross-sections ---------------------------------------------------------

struct CrossSectionGrid {
  std::vector<double> anchor;
  std::vector<double> axis1;  // typically the DF2 perturbation
  std::vector<double> axis2;  // typically the training-attack perturbation
  double range_lo = -1.5;
  double range_hi = 1.5;
  std::size_t resolution = 101;
  std::vector<int> labels;  // resolution x resolution, row i over axis1
  int true_label = -1;
  int clean_label = -1;

  /// Coefficient of the i-th grid line on either axis.
  double coord(std::size_t i) const;
  int label(std::size_t i, std::size_t j) const { return labels[i * resolution + j]; }
};

/// label(i, j) = argmax logits at x + s_i * v1 + t_j * v2, with s and t in
/// multiples of the respective vector.
CrossSectionGrid cross_section(const Classifier& clf, std::span<const double> x,
                               std::span<const double> v1, std::span<const double> v2,
                               double range_lo = -1.5, double range_hi = 1.5,
                               std::size_t resolution = 101, int true_label = -1);

/// `s,t,label` rows.
void write_cross_section_csv(std::ostream& out, const CrossSectionGrid& grid);
/// Sidecar with anchor index, axis norms and labels.
std::string cross_section_json(const CrossSectionGrid& grid, std::size_t anchor_index);

// -- catastrophic overfitting ----------------------------------------------

struct CoDetectorConfig {
  std::size_t window = 5;
  double strong_drop = 20.0;  // percentage points
  double weak_rise = 10.0;    // percentage points
};

struct CoEvent {
  std::size_t onset_epoch = 0;
  double strong_before = 0.0;
  double strong_after = 0.0;
  double weak_before = 0.0;
  double weak_after = 0.0;
  std::size_t window = 0;
};

/// An epoch e is a candidate when the strong-attack test accuracy starts to
/// fall at e and, comparing e with e + window, it has dropped by at least
/// strong_drop points while the weak-attack training accuracy rose by at
/// least weak_rise points. Candidates whose windows overlap chain into one
/// event reported at the earliest onset.
std::vector<CoEvent> detect_co(const std::vector<EpochRecord>& trace,
                               const CoDetectorConfig& cfg = {});

std::string co_events_json(const std::vector<CoEvent>& events);

}  // namespace colab
