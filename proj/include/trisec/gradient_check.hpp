//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_GRADIENT_CHECK_HPP
#define TRISEC_GRADIENT_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "trisec/attack.hpp"
#include "trisec/network.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

/// Forward pass carried out entirely in double precision. Besides the
/// output it records every relu sign and every max-pool winner, so callers
/// can tell whether two inputs fall on the same linear piece of the net.
struct ReferenceForward {
  std::vector<double> output;
  std::vector<std::uint32_t> pattern;
};

inline ReferenceForward reference_forward(const NetworkSpec &net,
                                          const std::vector<double> &input) {
  ReferenceForward res;
  std::vector<double> x = input;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const Layer &l = net.layers()[li];
    const Shape &in = net.shape_at(li);
    const Shape &out = net.shape_at(li + 1);
    std::vector<double> y(shape_size(out), 0.0);
    switch (l.kind) {
    case LayerKind::dense:
      for (std::size_t j = 0; j < l.out; ++j) {
        double acc = l.biases[j];
        for (std::size_t k = 0; k < l.in; ++k)
          acc += static_cast<double>(l.weights[j * l.in + k]) * x[k];
        y[j] = acc;
      }
      break;
    case LayerKind::conv2d: {
      const std::size_t H = in[1], W = in[2], OH = out[1], OW = out[2];
      for (std::size_t o = 0; o < l.out_ch; ++o)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            double acc = l.biases[o];
            for (std::size_t c = 0; c < l.in_ch; ++c)
              for (std::size_t i = 0; i < l.kh; ++i)
                for (std::size_t j = 0; j < l.kw; ++j) {
                  const long h = static_cast<long>(oh * l.stride + i) -
                                 static_cast<long>(l.padding);
                  const long w = static_cast<long>(ow * l.stride + j) -
                                 static_cast<long>(l.padding);
                  if (h < 0 || w < 0 || h >= static_cast<long>(H) ||
                      w >= static_cast<long>(W))
                    continue;
                  acc += static_cast<double>(
                             l.weights[((o * l.in_ch + c) * l.kh + i) * l.kw +
                                       j]) *
                         x[(c * H + static_cast<std::size_t>(h)) * W +
                           static_cast<std::size_t>(w)];
                }
            y[(o * OH + oh) * OW + ow] = acc;
          }
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < x.size(); ++i) {
        res.pattern.push_back(x[i] > 0.0);
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
      }
      break;
    case LayerKind::maxpool2d: {
      const std::size_t C = in[0], H = in[1], W = in[2], OH = out[1],
                        OW = out[2];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            std::size_t best = (c * H + oh * l.stride) * W + ow * l.stride;
            for (std::size_t i = 0; i < l.kh; ++i)
              for (std::size_t j = 0; j < l.kw; ++j) {
                const std::size_t k =
                    (c * H + oh * l.stride + i) * W + ow * l.stride + j;
                if (x[k] > x[best])
                  best = k;
              }
            res.pattern.push_back(static_cast<std::uint32_t>(best));
            y[(c * OH + oh) * OW + ow] = x[best];
          }
      break;
    }
    case LayerKind::flatten:
      y = x;
      break;
    case LayerKind::softmax: {
      const double m = *std::max_element(x.begin(), x.end());
      double total = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i)
        total += (y[i] = std::exp(x[i] - m));
      for (auto &v : y)
        v /= total;
      break;
    }
    }
    x = std::move(y);
  }
  res.output = std::move(x);
  return res;
}

struct GradientCheckOptions {
  std::size_t probes = 100;
  double h = 1e-3;
  double tolerance = 1e-4;
  /// Lower bound on the gradient scale, so an all-but-vanishing gradient is
  /// judged on absolute error instead.
  double floor = 1e-6;
  std::uint32_t seed = 42;
};

struct GradientCheckResult {
  std::size_t checked = 0;
  /// Coordinates skipped because x +/- h crosses a relu or max-pool kink.
  std::size_t skipped_kinks = 0;
  std::size_t failures = 0;
  /// Largest |a_i - n_i| / max(|a_i|, |n_i|, scale), where scale is the
  /// largest analytic component: the error relative to the gradient's size.
  double max_rel_error = 0.0;
  /// Largest |a_i - n_i| / max(|a_i|, |n_i|). Informational: at a fixed step
  /// it is dominated by components that happen to nearly cancel, where the
  /// difference quotient's own truncation error is relatively large.
  double max_componentwise_error = 0.0;
  double scale = 0.0;
  bool passed() const { return checked > 0 && failures == 0; }
};

/// Compares the engine's analytic cost gradient at `x` against central
/// differences of the double-precision reference forward, over `probes`
/// random smooth coordinates. Errors are measured relative to the larger of
/// the component itself and the gradient's largest component.
inline GradientCheckResult check_gradients(const NetworkSpec &net,
                                           const Tensor &x, std::size_t target,
                                           const GradientCheckOptions &opt = {}) {
  const Tensor y = one_hot(net.num_classes(), target);
  const Tensor analytic = input_gradient(net, forward(net, x), y);
  std::vector<double> base(x.data().begin(), x.data().end());

  auto cost_of = [&](const ReferenceForward &f) {
    double c = 0.0;
    for (std::size_t j = 0; j < f.output.size(); ++j) {
      const double d = f.output[j] - y[j];
      c += d * d;
    }
    return c;
  };

  const auto centre = reference_forward(net, base);
  std::mt19937 gen(opt.seed);
  GradientCheckResult res;
  res.scale = opt.floor;
  for (float v : analytic.data())
    res.scale = std::max(res.scale, static_cast<double>(std::abs(v)));
  const std::size_t max_attempts = 50 * opt.probes + x.size();
  for (std::size_t attempt = 0;
       res.checked < opt.probes && attempt < max_attempts; ++attempt) {
    const auto i = std::min(
        x.size() - 1,
        static_cast<std::size_t>(unit_uniform(gen) * static_cast<float>(x.size())));
    std::vector<double> xp = base, xm = base;
    xp[i] += opt.h;
    xm[i] -= opt.h;
    const auto fp = reference_forward(net, xp);
    const auto fm = reference_forward(net, xm);
    if (fp.pattern != centre.pattern || fm.pattern != centre.pattern) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (cost_of(fp) - cost_of(fm)) / (2.0 * opt.h);
    const double a = analytic[i];
    const double err = std::abs(a - numeric);
    const double local = std::max(std::abs(a), std::abs(numeric));
    const double rel = err / std::max(local, res.scale);
    res.max_rel_error = std::max(res.max_rel_error, rel);
    if (local > 0.0)
      res.max_componentwise_error =
          std::max(res.max_componentwise_error, err / local);
    res.failures += rel > opt.tolerance;
    ++res.checked;
  }
  return res;
}

} // namespace trisec

#endif // TRISEC_GRADIENT_CHECK_HPP
