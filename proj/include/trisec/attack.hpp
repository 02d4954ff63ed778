//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_ATTACK_HPP
#define TRISEC_ATTACK_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trisec/errors.hpp"
#include "trisec/metrics.hpp"
#include "trisec/network.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

/// Pixel bounds every adversarial image must respect.
struct ClampRange {
  float lo = 0.0f;
  float hi = 1.0f;
};

/// Settings for the imperceptible targeted attack.
struct AttackConfig {
  std::size_t target_class = 0;
  /// Upper bound on the squared-error cost (0.05 squared).
  double epsilon = 0.0025;
  double cr_min = 0.95;
  double ssi_min = 0.99;
  /// Initial gradient step; halved on cost increase.
  double step_size = 0.01;
  std::size_t max_backoffs = 10;
  std::size_t max_inner_iters = 500;
  std::size_t max_outer_iters = 1000;
  ClampRange clamp_range{};
  std::uint32_t seed = 42;
  /// Half-width of the uniform initial perturbation.
  float init_noise = 1e-3f;
};

/// State after one outer iteration: the misclassification phase has
/// finished and the scores are those that decide the next rescale.
struct TraceRecord {
  std::size_t iter = 0;
  /// Misclassification steps spent in this outer iteration.
  std::size_t inner_iters = 0;
  /// Misclassification steps spent so far across all outer iterations.
  std::size_t total_inner_iters = 0;
  double cost = 0.0;
  double cr = 0.0;
  double ssi = 0.0;
  std::size_t predicted_class = 0;
  double target_confidence = 0.0;
  /// Which gate rescaled the perturbation afterwards: "cr", "ssi" or "none".
  std::string rescale = "none";
};

struct AttackReport {
  bool success = false;
  std::size_t target_class = 0;
  std::size_t original_class = 0;
  double original_confidence = 0.0;
  /// Outer iterations executed.
  std::size_t iterations_run = 0;
  std::size_t inner_iterations_total = 0;
  std::vector<TraceRecord> trace;
  Tensor final_perturbation;
  Tensor final_adversarial_image;
  /// Whether the target is still predicted after 8-bit quantization of the
  /// final image.
  bool post_quantization_success = false;
  std::size_t post_quantization_class = 0;
};

/// Squared-error distance between a predicted and a target distribution.
inline double cost(const Tensor &a_out, const Tensor &y) {
  detail::require_same_shape(a_out, y, "cost");
  double c = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double d = static_cast<double>(a_out[j]) - y[j];
    c += d * d;
  }
  return c;
}

/// Rounds every pixel to the nearest 8-bit level (ties to even).
inline Tensor quantize_8bit(const Tensor &image) {
  Tensor q = image;
  for (auto &v : q.data())
    v = static_cast<float>(
        std::nearbyint(255.0 * std::clamp(static_cast<double>(v), 0.0, 1.0)) /
        255.0);
  return q;
}

/// Moves x + delta back inside the clamp range and returns the adjusted
/// perturbation.
inline Tensor project_perturbation(const Tensor &x, const Tensor &delta,
                                   ClampRange range) {
  Tensor adv = clamp(add(x, delta), range.lo, range.hi);
  return sub(adv, x);
}

struct StepResult {
  Tensor delta;
  ForwardTrace trace;
  double cost = 0.0;
  /// Step size that was finally applied (0 when the gradient vanished).
  double step_used = 0.0;
};

/// One gradient-descent step on the perturbation.
///
/// The gradient is taken at x + delta (after projecting delta into the clamp
/// range). The step starts at `step_size` and is halved up to `max_backoffs`
/// times while it fails to lower the cost; the smallest tried step is kept if
/// none does.
inline StepResult misclassification_step(const NetworkSpec &net,
                                         const Tensor &x, const Tensor &delta,
                                         const Tensor &y, double step_size,
                                         ClampRange range,
                                         std::size_t max_backoffs = 10) {
  Tensor d = project_perturbation(x, delta, range);
  ForwardTrace trace = forward(net, add(x, d));
  const double c0 = cost(trace.output(), y);
  const Tensor grad = input_gradient(net, trace, y);

  if (linf_norm(grad) == 0.0f)
    return {std::move(d), std::move(trace), c0, 0.0};

  StepResult best;
  double eta = step_size;
  for (std::size_t attempt = 0; attempt <= max_backoffs; ++attempt) {
    Tensor candidate = d;
    for (std::size_t i = 0; i < candidate.size(); ++i)
      candidate[i] = static_cast<float>(candidate[i] - eta * grad[i]);
    candidate = project_perturbation(x, candidate, range);
    ForwardTrace t = forward(net, add(x, candidate));
    const double c = cost(t.output(), y);
    best = {std::move(candidate), std::move(t), c, eta};
    if (c < c0)
      break;
    eta *= 0.5;
  }
  return best;
}

/// Shrinks the perturbation by (1 - CR) when the correlation gate fails,
/// otherwise by (1 - SSI) when the structural-similarity gate fails.
/// At most one gate fires per call; the correlation gate is checked first.
inline Tensor imperceptibility_rescale(const Tensor &delta,
                                       const PerceptualScores &scores,
                                       double cr_min, double ssi_min,
                                       std::string *fired = nullptr) {
  auto shrink = [&](double score, const char *gate) {
    if (!(score >= 0.0 && score <= 1.0))
      throw NumericError(std::string("imperceptibility_rescale: ") + gate +
                         " score " + std::to_string(score) +
                         " outside [0, 1]");
    if (fired)
      *fired = gate;
    return mul_scalar(delta, static_cast<float>(1.0 - score));
  };
  if (scores.cr < cr_min)
    return shrink(scores.cr, "cr");
  if (scores.ssi < ssi_min)
    return shrink(scores.ssi, "ssi");
  if (fired)
    *fired = "none";
  return delta;
}

namespace detail {
  inline void validate(const AttackConfig &cfg, const NetworkSpec &net) {
    if (cfg.target_class >= net.num_classes())
      throw ConfigError("target class " + std::to_string(cfg.target_class) +
                        " out of range for " +
                        std::to_string(net.num_classes()) + " classes");
    if (!(cfg.epsilon > 0.0))
      throw ConfigError("epsilon must be positive");
    if (!(cfg.cr_min > 0.0 && cfg.cr_min <= 1.0))
      throw ConfigError("cr_min must lie in (0, 1]");
    if (!(cfg.ssi_min > 0.0 && cfg.ssi_min <= 1.0))
      throw ConfigError("ssi_min must lie in (0, 1]");
    if (!(cfg.step_size > 0.0))
      throw ConfigError("step size must be positive");
    if (cfg.max_inner_iters == 0)
      throw ConfigError("max_inner_iters must be positive");
    if (!(cfg.clamp_range.lo < cfg.clamp_range.hi))
      throw ConfigError("clamp range must satisfy lo < hi");
  }
} // namespace detail

/// Generates a targeted adversarial image that also satisfies the
/// correlation and structural-similarity bounds.
///
/// Each outer iteration runs gradient descent on the perturbation until the
/// cost drops to epsilon (or the inner budget runs out), scores the
/// perturbed image, and either stops with success or shrinks the
/// perturbation through `imperceptibility_rescale` before the next round.
inline AttackReport run_attack(const NetworkSpec &net, const Tensor &x,
                               const AttackConfig &cfg) {
  detail::validate(cfg, net);
  if (x.shape() != net.input_shape())
    throw ShapeError("run_attack: image shape " + shape_str(x.shape()) +
                     " does not match network input " +
                     shape_str(net.input_shape()));
  for (float v : x.data())
    if (!(v >= cfg.clamp_range.lo && v <= cfg.clamp_range.hi))
      throw ConfigError("run_attack: image has pixels outside the clamp range");

  AttackReport report;
  report.target_class = cfg.target_class;
  {
    const Tensor clean = predict(net, x);
    report.original_class = argmax(clean);
    report.original_confidence = clean[report.original_class];
  }
  if (report.original_class == cfg.target_class)
    throw AlreadyTargetClassError("image is already classified as class " +
                                  std::to_string(cfg.target_class));

  const Tensor y = one_hot(net.num_classes(), cfg.target_class);
  std::mt19937 gen(cfg.seed);
  Tensor delta = project_perturbation(
      x, random_uniform(x.shape(), -cfg.init_noise, cfg.init_noise, gen),
      cfg.clamp_range);
  ForwardTrace trace = forward(net, add(x, delta));
  double c = cost(trace.output(), y);

  for (std::size_t outer = 0; outer < cfg.max_outer_iters; ++outer) {
    std::size_t inner = 0;
    while (c > cfg.epsilon && inner < cfg.max_inner_iters) {
      auto step = misclassification_step(net, x, delta, y, cfg.step_size,
                                         cfg.clamp_range, cfg.max_backoffs);
      delta = std::move(step.delta);
      trace = std::move(step.trace);
      c = step.cost;
      ++inner;
    }
    report.inner_iterations_total += inner;

    const Tensor adv = add(x, delta);
    const auto scores = perceptual_scores(x, adv);
    TraceRecord rec;
    rec.iter = outer;
    rec.inner_iters = inner;
    rec.total_inner_iters = report.inner_iterations_total;
    rec.cost = c;
    rec.cr = scores.cr;
    rec.ssi = scores.ssi;
    rec.predicted_class = argmax(trace.output());
    rec.target_confidence = trace.output()[cfg.target_class];
    report.iterations_run = outer + 1;
    report.final_perturbation = delta;
    report.final_adversarial_image = adv;

    if (c <= cfg.epsilon && scores.cr >= cfg.cr_min &&
        scores.ssi >= cfg.ssi_min && rec.predicted_class == cfg.target_class) {
      report.trace.push_back(std::move(rec));
      report.success = true;
      break;
    }

    // x + s * delta stays inside the clamp range for s in [0, 1].
    delta = imperceptibility_rescale(delta, scores, cfg.cr_min, cfg.ssi_min,
                                     &rec.rescale);
    report.trace.push_back(std::move(rec));
    trace = forward(net, add(x, delta));
    c = cost(trace.output(), y);
  }

  if (report.trace.empty()) {
    report.final_perturbation = delta;
    report.final_adversarial_image = add(x, delta);
  }
  const Tensor quantized = quantize_8bit(report.final_adversarial_image);
  report.post_quantization_class = argmax(predict(net, quantized));
  report.post_quantization_success =
      report.post_quantization_class == cfg.target_class;
  return report;
}

} // namespace trisec

#endif // TRISEC_ATTACK_HPP
