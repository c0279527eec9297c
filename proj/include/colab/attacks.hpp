#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "colab/classifier.hpp"
#include "colab/tensor.hpp"

// Perturbation constructors over batches: x is (batch, d), labels has one
// entry per row, and every returned delta has the shape of x. Randomized
// attacks draw each row from its own stream stream_seed({seed, row}), so a
// row's perturbation does not depend on what else is in the batch.

namespace colab {

/// l∞ threat model. `project` clamps the result back into [-epsilon,
/// epsilon]^d; `pixel_clamp` additionally keeps x + delta inside [0,1]^d.
struct ThreatModel {
  double epsilon = 8.0 / 255.0;
  double alpha = 8.0 / 255.0;
  bool project = true;
  bool pixel_clamp = false;

  void validate() const;
};

enum class AttackMethod {
  none,
  fgsm,
  rs_fgsm,
  r_plus_fgsm,
  boundary_rs_fgsm,
  magnified_rs_fgsm,
  diff_rs_fgsm,
  pgd,
  deepfool_l2,
  deepfool_linf_1,
  rs_deepfool_linf_1,
  min_scale_fgsm,
};

std::string method_name(AttackMethod method);

struct Perturbation {
  Tensor delta;
  AttackMethod method = AttackMethod::none;
  std::uint64_t seed = 0;
  std::vector<std::size_t> iterations;  // per row
  std::vector<double> l2;               // per row, cached
  std::vector<double> linf;             // per row, cached

  static Perturbation make(Tensor delta, AttackMethod method, std::uint64_t seed,
                           std::size_t iterations);
  /// Recomputes cached norms after delta changed.
  void refresh_norms();
  double mean_l2() const;
};

class DegenerateLinearization : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateMagnification : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NormMode { l2, linf };

struct DeepFoolConfig {
  double eta = 0.02;
  std::size_t max_iterations = 50;
  NormMode norm = NormMode::l2;

  void validate() const;
};

struct DeepFoolResult {
  Perturbation perturbation;     // (1 + eta) * raw
  Tensor raw;                    // accumulated steps before overshoot
  std::vector<std::size_t> iterations;
  std::vector<bool> fooled;
};

struct ScaleResult {
  std::optional<double> k_star;
  bool fooled = false;
};

// -- shared utilities -------------------------------------------------------

/// Coordinatewise clamp to [-epsilon, epsilon].
Tensor project_linf(Tensor delta, double epsilon);

/// Elementwise multiply by `fraction` >= 0.
Tensor scale_perturbation(Tensor delta, double fraction);

/// Uniform([-epsilon, epsilon]^d) per row.
Tensor uniform_init(const Shape& shape, double epsilon, std::uint64_t seed);

/// Each coordinate ±magnitude with equal probability, per row.
Tensor sign_init(const Shape& shape, double magnitude, std::uint64_t seed);

/// sign(d loss_i / d x_i) evaluated at x + delta, row by row.
Tensor gradient_sign(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                     const Tensor& delta);

/// Applies projection and the optional pixel clamp of `tm` to delta.
Tensor constrain(const Tensor& x, Tensor delta, const ThreatModel& tm);

// -- single-step attacks ----------------------------------------------------

/// alpha * sign(grad_x loss(x, y)).
Perturbation fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                  const ThreatModel& tm);

/// init + alpha * sign(grad at x + init), projected when tm.project.
Perturbation rs_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                     const ThreatModel& tm, std::uint64_t seed);
Perturbation rs_fgsm_from(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                          const ThreatModel& tm, const Tensor& init);

/// Init in {±eps/2}^d, step eps/2; tm.alpha is not used.
Perturbation r_plus_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                         const ThreatModel& tm, std::uint64_t seed);

/// Init in {±eps}^d, step tm.alpha.
Perturbation boundary_rs_fgsm(const Classifier& clf, const Tensor& x,
                              std::span<const int> labels, const ThreatModel& tm,
                              std::uint64_t seed);

/// RS-FGSM rescaled per row to the l2 norm of FGSM with step epsilon. The
/// result is not projected. Throws DegenerateMagnification when an RS-FGSM
/// row is zero.
Perturbation magnified_rs_fgsm(const Classifier& clf, const Tensor& x,
                               std::span<const int> labels, const ThreatModel& tm,
                               std::uint64_t seed);

/// delta1 + alpha * sign(grad at x + (1-t) delta1 + t delta2), projected.
Perturbation diff_rs_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                          const ThreatModel& tm, double t, std::uint64_t seed);
Perturbation diff_rs_fgsm_from(const Classifier& clf, const Tensor& x,
                               std::span<const int> labels, const ThreatModel& tm, double t,
                               const Tensor& delta1, const Tensor& delta2);

// -- multi-step -------------------------------------------------------------

enum class RestartSelect {
  max_loss,            // restart with the largest final loss
  prefer_misclassified // first restart that fools the model, else max loss
};

Perturbation pgd(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                 const ThreatModel& tm, std::size_t steps, std::size_t restarts,
                 std::uint64_t seed, RestartSelect select = RestartSelect::max_loss);

// -- DeepFool family --------------------------------------------------------

/// Iterative l2 DeepFool towards the nearest wrong class of `labels`.
/// Iteration stops once x + (1 + eta) * raw is no longer labelled y.
DeepFoolResult deepfool_l2(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                           const DeepFoolConfig& cfg);

/// One l∞-dual linearization step scaled by (1 + eta); unprojected. Rows
/// that are misclassified or whose class gradients coincide get zero.
Perturbation deepfool_linf_1(const Classifier& clf, const Tensor& x,
                             std::span<const int> labels, const DeepFoolConfig& cfg);

/// Projected init + (1 + eta) * DF(x + init).
Perturbation rs_deepfool_linf_1(const Classifier& clf, const Tensor& x,
                                std::span<const int> labels, const ThreatModel& tm,
                                const DeepFoolConfig& cfg, std::uint64_t seed);
Perturbation rs_deepfool_linf_1_from(const Classifier& clf, const Tensor& x,
                                     std::span<const int> labels, const ThreatModel& tm,
                                     const DeepFoolConfig& cfg, const Tensor& init);

// -- scale search -----------------------------------------------------------

/// Smallest k on the uniform grid {0, 1/(n-1), ..., 1} with
/// argmax f(x + k delta) != y, per row.
std::vector<ScaleResult> min_scale(const Classifier& clf, const Tensor& x,
                                   std::span<const int> labels, const Tensor& delta,
                                   std::size_t grid_points = 101);

/// eps * sign(grad) shrunk to k* (or kept whole when no grid point fools).
Perturbation min_scale_fgsm(const Classifier& clf, const Tensor& x,
                            std::span<const int> labels, const ThreatModel& tm,
                            std::size_t grid_points = 101);

}  // namespace colab
