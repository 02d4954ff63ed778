//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_METRICS_HPP
#define TRISEC_METRICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "trisec/errors.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

/// Correlation coefficient and structural similarity of an
/// (original, perturbed) image pair.
struct PerceptualScores {
  double cr = 1.0;
  double ssi = 1.0;
};

/// Pearson correlation over all pixels of both images, channels pooled.
inline double correlation(const Tensor &x, const Tensor &y) {
  detail::require_same_shape(x, y, "correlation");
  if (x.size() < 2)
    throw ShapeError("correlation: need at least 2 elements");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateImageError("correlation: constant image has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Standard SSIM settings: Gaussian window, stabilizers for images in
/// [0, dynamic_range].
struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

namespace detail {
  inline std::vector<double> gaussian_kernel_1d(std::size_t size,
                                                double sigma) {
    std::vector<double> k(size);
    const double center = (static_cast<double>(size) - 1.0) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
      const double d = static_cast<double>(i) - center;
      k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
      total += k[i];
    }
    for (auto &v : k)
      v /= total;
    return k;
  }

  /// Valid-mode separable filter of an H x W plane.
  inline std::vector<double> filter_valid(const std::vector<double> &plane,
                                          std::size_t H, std::size_t W,
                                          const std::vector<double> &k) {
    const std::size_t n = k.size();
    const std::size_t OH = H - n + 1, OW = W - n + 1;
    std::vector<double> rows(H * OW);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < OW; ++w) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          acc += k[j] * plane[h * W + w + j];
        rows[h * OW + w] = acc;
      }
    std::vector<double> out(OH * OW);
    for (std::size_t h = 0; h < OH; ++h)
      for (std::size_t w = 0; w < OW; ++w) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          acc += k[i] * rows[(h + i) * OW + w];
        out[h * OW + w] = acc;
      }
    return out;
  }
} // namespace detail

/// Mean SSIM over all valid window positions. Images are [C,H,W]; each
/// channel is scored separately and the channel scores averaged.
inline double ssim(const Tensor &x, const Tensor &y,
                   const SsimParams &params = {}) {
  detail::require_same_shape(x, y, "ssim");
  if (x.rank() != 3)
    throw ShapeError("ssim: expected [C,H,W] images, got " +
                     shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H < params.window || W < params.window)
    throw ShapeError("ssim: image " + std::to_string(H) + "x" +
                     std::to_string(W) + " is smaller than the " +
                     std::to_string(params.window) + "x" +
                     std::to_string(params.window) + " window");

  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
  const auto kernel = detail::gaussian_kernel_1d(params.window, params.sigma);
  const std::size_t plane = H * W;

  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> px(plane), py(plane), pxx(plane), pyy(plane),
        pxy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = x[c * plane + i];
      const double b = y[c * plane + i];
      px[i] = a;
      py[i] = b;
      pxx[i] = a * a;
      pyy[i] = b * b;
      pxy[i] = a * b;
    }
    auto mu_x = detail::filter_valid(px, H, W, kernel);
    auto mu_y = detail::filter_valid(py, H, W, kernel);
    auto e_xx = detail::filter_valid(pxx, H, W, kernel);
    auto e_yy = detail::filter_valid(pyy, H, W, kernel);
    auto e_xy = detail::filter_valid(pxy, H, W, kernel);

    double channel = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
      const double mx = mu_x[i], my = mu_y[i];
      const double vx = e_xx[i] - mx * mx;
      const double vy = e_yy[i] - my * my;
      const double cxy = e_xy[i] - mx * my;
      channel += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    total += channel / static_cast<double>(mu_x.size());
  }
  return total / static_cast<double>(C);
}

inline PerceptualScores perceptual_scores(const Tensor &original,
                                          const Tensor &perturbed) {
  return {correlation(original, perturbed), ssim(original, perturbed)};
}

} // namespace trisec

#endif // TRISEC_METRICS_HPP
