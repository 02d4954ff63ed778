//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_BASELINES_HPP
#define TRISEC_BASELINES_HPP

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "trisec/attack.hpp"
#include "trisec/errors.hpp"
#include "trisec/lbfgs.hpp"
#include "trisec/metrics.hpp"
#include "trisec/network.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

/// Adversarial image together with the raw noise that produced it.
struct BaselineResult {
  Tensor adversarial;
  Tensor noise;
};

/// Fast gradient sign method.
///
/// `noise` is the sign of the cost gradient at x. Without a target the cost
/// of the currently predicted class is ascended (x + if_factor * noise);
/// with a target the cost of the target is descended (x - if_factor * noise).
inline BaselineResult fgsm(const NetworkSpec &net, const Tensor &x,
                           std::optional<std::size_t> target, double if_factor,
                           ClampRange range = {}) {
  if (!(if_factor >= 0.0))
    throw ConfigError("fgsm: imperceptibility factor must be non-negative");
  const ForwardTrace trace = forward(net, x);
  std::size_t label = argmax(trace.output());
  if (target) {
    if (*target >= net.num_classes())
      throw ConfigError("fgsm: target class out of range");
    label = *target;
  }
  const Tensor grad =
      input_gradient(net, trace, one_hot(net.num_classes(), label));

  Tensor noise(x.shape());
  for (std::size_t i = 0; i < noise.size(); ++i)
    noise[i] = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);

  const double direction = target ? -1.0 : 1.0;
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i)
    adv[i] = std::clamp(
        static_cast<float>(x[i] + direction * if_factor * noise[i]), range.lo,
        range.hi);
  return {std::move(adv), std::move(noise)};
}

struct LbfgsAttackConfig {
  /// Weight of the squared noise norm against the misclassification cost.
  double c = 0.1;
  std::size_t max_iters = 100;
  ClampRange clamp_range{};
};

/// Box-constrained L-BFGS attack: minimizes c * |noise|^2 + C(x + noise, y)
/// over noise with x + noise kept inside the clamp range. Returns the best
/// iterate by objective; the caller decides whether it misclassifies.
inline BaselineResult lbfgs_attack(const NetworkSpec &net, const Tensor &x,
                                   std::size_t target,
                                   const LbfgsAttackConfig &cfg = {},
                                   LbfgsResult *details = nullptr) {
  if (target >= net.num_classes())
    throw ConfigError("lbfgs_attack: target class out of range");
  if (!(cfg.c >= 0.0))
    throw ConfigError("lbfgs_attack: c must be non-negative");
  if (x.shape() != net.input_shape())
    throw ShapeError("lbfgs_attack: image shape " + shape_str(x.shape()) +
                     " does not match network input " +
                     shape_str(net.input_shape()));
  if (argmax(predict(net, x)) == target)
    throw AlreadyTargetClassError("image is already classified as class " +
                                  std::to_string(target));

  const Tensor y = one_hot(net.num_classes(), target);
  const std::size_t n = x.size();
  Box box;
  box.lo.resize(n);
  box.hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    box.lo[i] = static_cast<double>(cfg.clamp_range.lo) - x[i];
    box.hi[i] = static_cast<double>(cfg.clamp_range.hi) - x[i];
  }

  auto to_image = [&](const std::vector<double> &noise) {
    Tensor adv = x;
    for (std::size_t i = 0; i < n; ++i)
      adv[i] = std::clamp(static_cast<float>(x[i] + noise[i]),
                          cfg.clamp_range.lo, cfg.clamp_range.hi);
    return adv;
  };

  const Objective objective = [&](const std::vector<double> &noise,
                                  std::vector<double> &grad) {
    const ForwardTrace trace = forward(net, to_image(noise));
    const Tensor g = input_gradient(net, trace, y);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      norm2 += noise[i] * noise[i];
      grad[i] = 2.0 * cfg.c * noise[i] + g[i];
    }
    return cfg.c * norm2 + cost(trace.output(), y);
  };

  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  LbfgsResult res =
      lbfgs_minimize(objective, std::vector<double>(n, 0.0), box, opt);

  BaselineResult out;
  out.adversarial = to_image(res.x);
  out.noise = sub(out.adversarial, x);
  if (details)
    *details = std::move(res);
  return out;
}

struct SweepRow {
  double imperceptibility_factor = 0.0;
  std::string attack;
  bool success = false;
  double cr = 0.0;
  double ssi = 0.0;
  std::size_t predicted_class = 0;
  double target_confidence = 0.0;
};

struct SweepResult {
  std::size_t original_class = 0;
  std::size_t target_class = 0;
  std::vector<SweepRow> rows;
};

/// Evaluates FGSM and L-BFGS noise scaled by each imperceptibility factor.
///
/// Each attack's noise is computed once at its natural scale (unit sign
/// noise for FGSM, the optimizer's noise for L-BFGS) and then multiplied by
/// the factor before being added to x. Rows are ordered by descending
/// factor, FGSM before L-BFGS.
inline SweepResult run_if_sweep(const NetworkSpec &net, const Tensor &x,
                                std::size_t target,
                                std::vector<double> if_values,
                                const LbfgsAttackConfig &lbfgs_cfg = {}) {
  if (if_values.empty())
    throw ConfigError("sweep: no imperceptibility factors given");
  for (double f : if_values)
    if (!(f > 0.0))
      throw ConfigError("sweep: imperceptibility factors must be positive");
  std::sort(if_values.begin(), if_values.end(), std::greater<>{});

  SweepResult result;
  result.original_class = argmax(predict(net, x));
  result.target_class = target;

  const Tensor fgsm_noise = fgsm(net, x, target, 1.0, lbfgs_cfg.clamp_range).noise;
  const Tensor lbfgs_noise = lbfgs_attack(net, x, target, lbfgs_cfg).noise;

  auto evaluate = [&](const Tensor &noise, double scale, double factor,
                      const char *name) {
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i)
      adv[i] = std::clamp(static_cast<float>(x[i] + scale * noise[i]),
                          lbfgs_cfg.clamp_range.lo, lbfgs_cfg.clamp_range.hi);
    const Tensor out = predict(net, adv);
    const auto scores = perceptual_scores(x, adv);
    SweepRow row;
    row.imperceptibility_factor = factor;
    row.attack = name;
    row.predicted_class = argmax(out);
    row.success = row.predicted_class == target;
    row.cr = scores.cr;
    row.ssi = scores.ssi;
    row.target_confidence = out[target];
    result.rows.push_back(std::move(row));
  };

  for (double f : if_values) {
    evaluate(fgsm_noise, -f, f, "fgsm");
    evaluate(lbfgs_noise, f, f, "lbfgs");
  }
  return result;
}

} // namespace trisec

#endif // TRISEC_BASELINES_HPP
