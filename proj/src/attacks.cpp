#include "colab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "colab/diffcore.hpp"
#include "colab/rng.hpp"

namespace colab {

void ThreatModel::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("threat model: epsilon must be positive and finite");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("threat model: alpha must be non-negative and finite");
  }
}

void DeepFoolConfig::validate() const {
  if (!(eta >= 0.0)) throw std::invalid_argument("deepfool: overshoot must be >= 0");
  if (max_iterations < 1) throw std::invalid_argument("deepfool: max_iterations must be >= 1");
}

std::string method_name(AttackMethod method) {
  switch (method) {
    case AttackMethod::none: return "none";
    case AttackMethod::fgsm: return "fgsm";
    case AttackMethod::rs_fgsm: return "rs_fgsm";
    case AttackMethod::r_plus_fgsm: return "r_plus_fgsm";
    case AttackMethod::boundary_rs_fgsm: return "boundary_rs_fgsm";
    case AttackMethod::magnified_rs_fgsm: return "magnified_rs_fgsm";
    case AttackMethod::diff_rs_fgsm: return "diff_rs_fgsm";
    case AttackMethod::pgd: return "pgd";
    case AttackMethod::deepfool_l2: return "deepfool_l2";
    case AttackMethod::deepfool_linf_1: return "df_linf_1";
    case AttackMethod::rs_deepfool_linf_1: return "rs_df_linf_1";
    case AttackMethod::min_scale_fgsm: return "min_scale_fgsm";
  }
  return "unknown";
}

Perturbation Perturbation::make(Tensor delta, AttackMethod method, std::uint64_t seed,
                                std::size_t iterations) {
  Perturbation p;
  p.method = method;
  p.seed = seed;
  p.iterations.assign(delta.rows(), iterations);
  p.delta = std::move(delta);
  p.refresh_norms();
  return p;
}

void Perturbation::refresh_norms() {
  l2.resize(delta.rows());
  linf.resize(delta.rows());
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    l2[r] = norm_l2(delta.row(r));
    linf[r] = norm_linf(delta.row(r));
  }
}

double Perturbation::mean_l2() const {
  if (l2.empty()) return 0.0;
  double s = 0.0;
  for (double v : l2) s += v;
  return s / static_cast<double>(l2.size());
}

namespace {

void require_batch(const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 2) throw std::invalid_argument("attack: input must be a (batch, d) tensor");
  if (labels.size() != x.rows()) {
    throw std::invalid_argument("attack: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(x.rows()) + " rows");
  }
}

Tensor pixel_clamp(const Tensor& x, Tensor delta) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double v = x[i] + delta[i];
    if (v > 1.0) {
      delta[i] = 1.0 - x[i];
    } else if (v < 0.0) {
      delta[i] = -x[i];
    }
  }
  return delta;
}

int predict_one(const Classifier& clf, std::span<const double> point) {
  const auto logits = forward(clf, Tensor({1, point.size()}, std::vector<double>(point.begin(), point.end())));
  return static_cast<int>(argmax(logits.values()));
}

std::vector<double> offset(std::span<const double> x, std::span<const double> d, double scale = 1.0) {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + scale * d[j];
  return out;
}

/// Step to the nearest linearized boundary between `cls` and any other class.
std::vector<double> linearized_step(const LogitJacobian<double>& lj, int cls, NormMode mode) {
  const std::size_t classes = lj.logits.size();
  const std::size_t d = lj.jacobian.cols();
  const auto y = static_cast<std::size_t>(cls);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_w;
  double best_gap = 0.0, best_norm = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (k == y) continue;
    std::vector<double> w(d);
    for (std::size_t j = 0; j < d; ++j) w[j] = lj.jacobian.at(k, j) - lj.jacobian.at(y, j);
    const double norm =
        mode == NormMode::l2 ? norm_l2(w) : norm_l1(w);
    if (norm == 0.0) continue;
    const double gap = std::abs(lj.logits[k] - lj.logits[y]);
    const double dist = gap / norm;
    if (dist < best) {
      best = dist;
      best_w = std::move(w);
      best_gap = gap;
      best_norm = norm;
    }
  }
  if (best_w.empty()) {
    throw DegenerateLinearization("deepfool: logit gradients coincide for every class pair");
  }
  std::vector<double> step(d);
  if (mode == NormMode::l2) {
    const double coef = best_gap / (best_norm * best_norm);
    for (std::size_t j = 0; j < d; ++j) step[j] = coef * best_w[j];
  } else {
    const double coef = best_gap / best_norm;
    for (std::size_t j = 0; j < d; ++j) step[j] = coef * sign(best_w[j]);
  }
  return step;
}

/// One DF^inf step at `point`, or zeros when point is not labelled `cls` or
/// the linearization gives no direction.
std::vector<double> linf_step_or_zero(const Classifier& clf, std::span<const double> point, int cls) {
  const auto lj = logit_jacobian<double>(clf, point);
  if (static_cast<int>(argmax(lj.logits)) != cls) return std::vector<double>(point.size(), 0.0);
  try {
    return linearized_step(lj, cls, NormMode::linf);
  } catch (const DegenerateLinearization&) {
    return std::vector<double>(point.size(), 0.0);
  }
}

}  // namespace

Tensor project_linf(Tensor delta, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("project_linf: epsilon must be positive");
  for (double& v : delta.values()) v = std::clamp(v, -epsilon, epsilon);
  return delta;
}

Tensor scale_perturbation(Tensor delta, double fraction) {
  if (!(fraction >= 0.0)) throw std::invalid_argument("scale_perturbation: fraction must be >= 0");
  delta *= fraction;
  return delta;
}

Tensor uniform_init(const Shape& shape, double epsilon, std::uint64_t seed) {
  Tensor out(shape);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    Rng rng(stream_seed({seed, r}));
    for (double& v : out.row(r)) v = rng.uniform(-epsilon, epsilon);
  }
  return out;
}

Tensor sign_init(const Shape& shape, double magnitude, std::uint64_t seed) {
  Tensor out(shape);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    Rng rng(stream_seed({seed, r}));
    for (double& v : out.row(r)) v = rng.coin() ? magnitude : -magnitude;
  }
  return out;
}

Tensor gradient_sign(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                     const Tensor& delta) {
  Tensor g = per_example_input_grads(clf, x + delta, labels);
  for (double& v : g.values()) v = sign(v);
  return g;
}

Tensor constrain(const Tensor& x, Tensor delta, const ThreatModel& tm) {
  if (tm.project) delta = project_linf(std::move(delta), tm.epsilon);
  if (tm.pixel_clamp) {
    delta = pixel_clamp(x, std::move(delta));
    if (tm.project) delta = project_linf(std::move(delta), tm.epsilon);
  }
  return delta;
}

Perturbation fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                  const ThreatModel& tm) {
  tm.validate();
  require_batch(x, labels);
  Tensor delta = gradient_sign(clf, x, labels, Tensor(x.shape())) * tm.alpha;
  return Perturbation::make(constrain(x, std::move(delta), tm), AttackMethod::fgsm, 0, 1);
}

Perturbation rs_fgsm_from(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                          const ThreatModel& tm, const Tensor& init) {
  tm.validate();
  require_batch(x, labels);
  x.require_same_shape(init, "rs_fgsm init");
  const Tensor start = tm.pixel_clamp ? pixel_clamp(x, init) : init;
  Tensor delta = start + gradient_sign(clf, x, labels, start) * tm.alpha;
  return Perturbation::make(constrain(x, std::move(delta), tm), AttackMethod::rs_fgsm, 0, 1);
}

Perturbation rs_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                     const ThreatModel& tm, std::uint64_t seed) {
  auto p = rs_fgsm_from(clf, x, labels, tm, uniform_init(x.shape(), tm.epsilon, seed));
  p.seed = seed;
  return p;
}

Perturbation r_plus_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                         const ThreatModel& tm, std::uint64_t seed) {
  ThreatModel half = tm;
  half.alpha = tm.epsilon / 2.0;
  auto p = rs_fgsm_from(clf, x, labels, half, sign_init(x.shape(), tm.epsilon / 2.0, seed));
  p.method = AttackMethod::r_plus_fgsm;
  p.seed = seed;
  return p;
}

Perturbation boundary_rs_fgsm(const Classifier& clf, const Tensor& x,
                              std::span<const int> labels, const ThreatModel& tm,
                              std::uint64_t seed) {
  auto p = rs_fgsm_from(clf, x, labels, tm, sign_init(x.shape(), tm.epsilon, seed));
  p.method = AttackMethod::boundary_rs_fgsm;
  p.seed = seed;
  return p;
}

Perturbation magnified_rs_fgsm(const Classifier& clf, const Tensor& x,
                               std::span<const int> labels, const ThreatModel& tm,
                               std::uint64_t seed) {
  ThreatModel full = tm;
  full.alpha = tm.epsilon;
  full.pixel_clamp = false;
  ThreatModel rs = tm;
  rs.pixel_clamp = false;
  const auto reference = fgsm(clf, x, labels, full);
  auto p = rs_fgsm(clf, x, labels, rs, seed);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (p.l2[r] == 0.0) {
      throw DegenerateMagnification("magnified_rs_fgsm: RS-FGSM perturbation of row " +
                                    std::to_string(r) + " is zero");
    }
    const double factor = reference.l2[r] / p.l2[r];
    for (double& v : p.delta.row(r)) v *= factor;
  }
  p.method = AttackMethod::magnified_rs_fgsm;
  p.refresh_norms();
  return p;
}

Perturbation diff_rs_fgsm_from(const Classifier& clf, const Tensor& x,
                               std::span<const int> labels, const ThreatModel& tm, double t,
                               const Tensor& delta1, const Tensor& delta2) {
  tm.validate();
  require_batch(x, labels);
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("diff_rs_fgsm: t must lie in [0,1]");
  x.require_same_shape(delta1, "diff_rs_fgsm delta1");
  x.require_same_shape(delta2, "diff_rs_fgsm delta2");
  const Tensor base = tm.pixel_clamp ? pixel_clamp(x, delta1) : delta1;
  Tensor mix = delta1 * (1.0 - t) + delta2 * t;
  if (tm.pixel_clamp) mix = pixel_clamp(x, std::move(mix));
  Tensor delta = base + gradient_sign(clf, x, labels, mix) * tm.alpha;
  return Perturbation::make(constrain(x, std::move(delta), tm), AttackMethod::diff_rs_fgsm, 0, 1);
}

Perturbation diff_rs_fgsm(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                          const ThreatModel& tm, double t, std::uint64_t seed) {
  // delta1 and delta2 come from the same per-row stream, delta1 first, so
  // delta1 equals the RS-FGSM init for the same seed.
  Tensor d1(x.shape()), d2(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Rng rng(stream_seed({seed, r}));
    for (double& v : d1.row(r)) v = rng.uniform(-tm.epsilon, tm.epsilon);
    for (double& v : d2.row(r)) v = rng.uniform(-tm.epsilon, tm.epsilon);
  }
  auto p = diff_rs_fgsm_from(clf, x, labels, tm, t, d1, d2);
  p.seed = seed;
  return p;
}

Perturbation pgd(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                 const ThreatModel& tm, std::size_t steps, std::size_t restarts,
                 std::uint64_t seed, RestartSelect select) {
  tm.validate();
  require_batch(x, labels);
  if (restarts < 1) throw std::invalid_argument("pgd: restarts must be >= 1");
  ThreatModel ball = tm;
  ball.project = true;

  const std::size_t rows = x.rows();
  std::vector<Rng> streams;
  streams.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) streams.emplace_back(stream_seed({seed, r}));

  Tensor best(x.shape());
  std::vector<double> best_loss(rows, -std::numeric_limits<double>::infinity());
  std::vector<bool> best_fools(rows, false);

  for (std::size_t restart = 0; restart < restarts; ++restart) {
    Tensor delta(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      for (double& v : delta.row(r)) v = streams[r].uniform(-tm.epsilon, tm.epsilon);
    }
    delta = constrain(x, std::move(delta), ball);
    for (std::size_t k = 0; k < steps; ++k) {
      delta += gradient_sign(clf, x, labels, delta) * tm.alpha;
      delta = constrain(x, std::move(delta), ball);
    }
    const Tensor logits = forward(clf, x + delta);
    const auto row_loss = losses(logits, labels);
    for (std::size_t r = 0; r < rows; ++r) {
      const bool fools = static_cast<int>(argmax(logits.row(r))) != labels[r];
      bool take = row_loss[r] > best_loss[r];
      if (select == RestartSelect::prefer_misclassified) {
        if (best_fools[r]) {
          take = false;
        } else if (fools) {
          take = true;
        }
      }
      if (take) {
        best_loss[r] = row_loss[r];
        best_fools[r] = fools;
        std::copy(delta.row(r).begin(), delta.row(r).end(), best.row(r).begin());
      }
    }
  }
  return Perturbation::make(std::move(best), AttackMethod::pgd, seed, steps);
}

DeepFoolResult deepfool_l2(const Classifier& clf, const Tensor& x, std::span<const int> labels,
                           const DeepFoolConfig& cfg) {
  cfg.validate();
  require_batch(x, labels);
  if (cfg.norm != NormMode::l2) throw std::invalid_argument("deepfool_l2: norm mode must be l2");
  const std::size_t rows = x.rows(), d = x.cols();
  DeepFoolResult res;
  res.raw = Tensor(x.shape());
  res.iterations.assign(rows, 0);
  res.fooled.assign(rows, false);
  const double overshoot = 1.0 + cfg.eta;

  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = x.row(r);
    const int y = labels[r];
    std::vector<double> total(d, 0.0);
    std::size_t iters = 0;
    bool fooled = predict_one(clf, xr) != y;
    while (!fooled && iters < cfg.max_iterations) {
      const auto lj = logit_jacobian<double>(clf, offset(xr, total));
      const auto step = linearized_step(lj, y, NormMode::l2);
      for (std::size_t j = 0; j < d; ++j) total[j] += step[j];
      ++iters;
      fooled = predict_one(clf, offset(xr, total, overshoot)) != y;
    }
    std::copy(total.begin(), total.end(), res.raw.row(r).begin());
    res.iterations[r] = iters;
    res.fooled[r] = fooled;
  }
  res.perturbation = Perturbation::make(res.raw * overshoot, AttackMethod::deepfool_l2, 0, 0);
  res.perturbation.iterations = res.iterations;
  return res;
}

Perturbation deepfool_linf_1(const Classifier& clf, const Tensor& x,
                             std::span<const int> labels, const DeepFoolConfig& cfg) {
  cfg.validate();
  require_batch(x, labels);
  Tensor delta(x.shape());
  std::vector<std::size_t> iters(x.rows(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (predict_one(clf, x.row(r)) != labels[r]) continue;
    const auto step = linf_step_or_zero(clf, x.row(r), labels[r]);
    for (std::size_t j = 0; j < step.size(); ++j) delta.at(r, j) = (1.0 + cfg.eta) * step[j];
    iters[r] = 1;
  }
  auto p = Perturbation::make(std::move(delta), AttackMethod::deepfool_linf_1, 0, 1);
  p.iterations = std::move(iters);
  return p;
}

Perturbation rs_deepfool_linf_1_from(const Classifier& clf, const Tensor& x,
                                     std::span<const int> labels, const ThreatModel& tm,
                                     const DeepFoolConfig& cfg, const Tensor& init) {
  tm.validate();
  cfg.validate();
  require_batch(x, labels);
  x.require_same_shape(init, "rs_df_linf_1 init");
  const Tensor start = tm.pixel_clamp ? pixel_clamp(x, init) : init;
  Tensor delta = start;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto point = offset(x.row(r), start.row(r));
    const auto step = linf_step_or_zero(clf, point, labels[r]);
    for (std::size_t j = 0; j < step.size(); ++j) delta.at(r, j) += (1.0 + cfg.eta) * step[j];
  }
  return Perturbation::make(constrain(x, std::move(delta), tm), AttackMethod::rs_deepfool_linf_1,
                            0, 1);
}

Perturbation rs_deepfool_linf_1(const Classifier& clf, const Tensor& x,
                                std::span<const int> labels, const ThreatModel& tm,
                                const DeepFoolConfig& cfg, std::uint64_t seed) {
  auto p = rs_deepfool_linf_1_from(clf, x, labels, tm, cfg, uniform_init(x.shape(), tm.epsilon, seed));
  p.seed = seed;
  return p;
}

std::vector<ScaleResult> min_scale(const Classifier& clf, const Tensor& x,
                                   std::span<const int> labels, const Tensor& delta,
                                   std::size_t grid_points) {
  require_batch(x, labels);
  x.require_same_shape(delta, "min_scale delta");
  if (grid_points < 2) throw std::invalid_argument("min_scale: need at least 2 grid points");
  const std::size_t d = x.cols();
  std::vector<ScaleResult> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Tensor grid({grid_points, d});
    for (std::size_t i = 0; i < grid_points; ++i) {
      const double k = static_cast<double>(i) / static_cast<double>(grid_points - 1);
      for (std::size_t j = 0; j < d; ++j) grid.at(i, j) = x.at(r, j) + k * delta.at(r, j);
    }
    const Tensor logits = forward(clf, grid);
    for (std::size_t i = 0; i < grid_points; ++i) {
      if (static_cast<int>(argmax(logits.row(i))) != labels[r]) {
        out[r].k_star = static_cast<double>(i) / static_cast<double>(grid_points - 1);
        out[r].fooled = true;
        break;
      }
    }
  }
  return out;
}

Perturbation min_scale_fgsm(const Classifier& clf, const Tensor& x,
                            std::span<const int> labels, const ThreatModel& tm,
                            std::size_t grid_points) {
  tm.validate();
  require_batch(x, labels);
  Tensor delta = gradient_sign(clf, x, labels, Tensor(x.shape())) * tm.epsilon;
  const auto scales = min_scale(clf, x, labels, delta, grid_points);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double k = scales[r].fooled ? *scales[r].k_star : 1.0;
    for (double& v : delta.row(r)) v *= k;
  }
  return Perturbation::make(constrain(x, std::move(delta), tm), AttackMethod::min_scale_fgsm, 0, 1);
}

}  // namespace colab
