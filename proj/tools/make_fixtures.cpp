//
// SPDX-License-Identifier: Apache-2.0
//

// Regenerates the seeded fixture networks and probe images under
// fixtures/. The outputs are checked in; rerunning with the same seed
// reproduces them byte for byte.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trisec/image_io.hpp"
#include "trisec/model_io.hpp"
#include "trisec/network.hpp"

namespace {

using namespace trisec;

/// Zero-mean uniform weights with variance `gain^2 / fan_in`.
Tensor init_weights(Shape shape, std::size_t fan_in, float gain,
                    std::mt19937 &gen) {
  const float bound =
      gain * std::sqrt(3.0f / static_cast<float>(fan_in));
  return random_uniform(std::move(shape), -bound, bound, gen);
}

Tensor init_biases(std::size_t n, float scale, std::mt19937 &gen) {
  return random_uniform(Shape{n}, -scale, scale, gen);
}

Layer dense(std::size_t in, std::size_t out, float gain, std::mt19937 &gen) {
  return Layer::make_dense(init_weights({out, in}, in, gain, gen),
                           init_biases(out, 0.05f, gen));
}

/// Removes each output unit's mean weight so the unit ignores a constant
/// offset of its input.
void zero_mean_rows(Tensor &w) {
  const std::size_t rows = w.dim(0), cols = w.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      m += w[r * cols + c];
    m /= static_cast<double>(cols);
    for (std::size_t c = 0; c < cols; ++c)
      w[r * cols + c] = static_cast<float>(w[r * cols + c] - m);
  }
}

Layer conv(std::size_t in_ch, std::size_t out_ch, std::size_t k,
           std::size_t stride, std::size_t padding, float gain,
           std::mt19937 &gen, bool zero_mean = false) {
  auto w = init_weights({out_ch, in_ch, k, k}, in_ch * k * k, gain, gen);
  if (zero_mean)
    zero_mean_rows(w);
  return Layer::make_conv2d(std::move(w), init_biases(out_ch, 0.05f, gen),
                            stride, padding);
}

NetworkSpec make_mlp_tiny(std::mt19937 &gen, float out_gain) {
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  auto first = dense(784, 64, std::sqrt(2.0f), gen);
  zero_mean_rows(first.weights);
  layers.push_back(std::move(first));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(dense(64, 10, out_gain, gen));
  layers.push_back(Layer::make(LayerKind::softmax));
  return NetworkSpec::build({1, 28, 28}, std::move(layers), 10);
}

NetworkSpec make_cnn_tiny(std::mt19937 &gen, float in_gain, float out_gain) {
  std::vector<Layer> layers;
  layers.push_back(conv(1, 8, 3, 1, 0, in_gain, gen, true));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(Layer::make_maxpool2d(2, 2, 2));
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(dense(8 * 13 * 13, 10, out_gain, gen));
  layers.push_back(Layer::make(LayerKind::softmax));
  return NetworkSpec::build({1, 28, 28}, std::move(layers), 10);
}

NetworkSpec make_mixed_tiny(std::mt19937 &gen, float in_gain, float out_gain) {
  std::vector<Layer> layers;
  layers.push_back(conv(1, 4, 5, 1, 2, in_gain, gen, true));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(Layer::make_maxpool2d(2, 2, 2));
  layers.push_back(conv(4, 6, 3, 2, 1, std::sqrt(2.0f), gen));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(dense(6 * 7 * 7, 32, std::sqrt(2.0f), gen));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(dense(32, 10, out_gain, gen));
  layers.push_back(Layer::make(LayerKind::softmax));
  return NetworkSpec::build({1, 28, 28}, std::move(layers), 10);
}

/// Distance from point p to segment ab.
double segment_distance(double px, double py, double ax, double ay, double bx,
                        double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

/// A 28x28 grey glyph: a few anti-aliased strokes over a smooth textured
/// background. Stands in for a small natural image; `texture` scales the
/// background's tilt and ripple (0 gives a flat background).
Tensor make_probe_image(std::mt19937 &gen, double pixel_noise, double softness,
                        double texture) {
  constexpr std::size_t N = 28;
  auto u = [&] { return static_cast<double>(unit_uniform(gen)); };

  const double base = 0.3 + 0.2 * u();
  const double gx = texture * 0.2 * (u() - 0.5), gy = texture * 0.2 * (u() - 0.5);
  const double fx = 0.2 + 0.4 * u(), fy = 0.2 + 0.4 * u(), ph = 6.28 * u();
  const double amp = texture * (0.05 + 0.05 * u());

  struct Stroke {
    double ax, ay, bx, by;
  };
  std::vector<Stroke> strokes(2 + static_cast<std::size_t>(3 * u()));
  for (auto &s : strokes)
    s = {4 + 20 * u(), 4 + 20 * u(), 4 + 20 * u(), 4 + 20 * u()};
  const double ink = 0.35 + 0.15 * u();
  const double width = 1.2 + 0.8 * u();

  Tensor img(Shape{1, N, N});
  for (std::size_t h = 0; h < N; ++h)
    for (std::size_t w = 0; w < N; ++w) {
      const double yy = static_cast<double>(h), xx = static_cast<double>(w);
      double v = base + gx * (xx - 13.5) / 13.5 + gy * (yy - 13.5) / 13.5 +
                 amp * std::sin(fx * xx + fy * yy + ph);
      double d = 1e9;
      for (const auto &s : strokes)
        d = std::min(d, segment_distance(xx, yy, s.ax, s.ay, s.bx, s.by));
      const double coverage = std::clamp((width + 0.5 * softness - d) / softness, 0.0, 1.0);
      v += ink * coverage;
      v += pixel_noise * (u() - 0.5);
      // Stored as 8-bit, so keep the float tensor on the 8-bit grid.
      img.at(0, h, w) =
          static_cast<float>(std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0) /
                             255.0);
    }
  return img;
}

/// Rescales the final dense layer so its logits have standard deviation
/// `logit_std` over `images` and centres them with the bias, so no class
/// dominates the calibration set.
NetworkSpec calibrate(const NetworkSpec &net, const std::vector<Tensor> &images,
                      double logit_std) {
  std::vector<Layer> layers = net.layers();
  const std::size_t last = layers.size() - 2;
  Layer &head = layers[last];

  std::vector<double> mean_feat(head.in, 0.0);
  std::vector<std::vector<float>> feats;
  for (const auto &img : images) {
    auto trace = forward(net, img);
    const auto &f = trace.activations[last].values();
    feats.push_back(f);
    for (std::size_t k = 0; k < head.in; ++k)
      mean_feat[k] += f[k] / static_cast<double>(images.size());
  }
  double var = 0.0;
  for (const auto &f : feats)
    for (std::size_t j = 0; j < head.out; ++j) {
      double z = 0.0;
      for (std::size_t k = 0; k < head.in; ++k)
        z += head.weights[j * head.in + k] * (f[k] - mean_feat[k]);
      var += z * z;
    }
  var /= static_cast<double>(feats.size() * head.out);
  const double scale = logit_std / std::sqrt(var);
  for (auto &w : head.weights.data())
    w = static_cast<float>(w * scale);
  for (std::size_t j = 0; j < head.out; ++j) {
    double b = 0.0;
    for (std::size_t k = 0; k < head.in; ++k)
      b -= head.weights[j * head.in + k] * mean_feat[k];
    head.biases[j] = static_cast<float>(b);
  }
  return NetworkSpec::build(net.input_shape(), std::move(layers),
                            net.num_classes());
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Generate seeded fixture networks and probe images"};
  std::string out_dir = "fixtures";
  std::uint32_t seed = 2024;
  std::size_t num_images = 20;
  float out_gain = 1.0f;
  float in_gain = 20.0f;
  double pixel_noise = 0.0, softness = 3.0, logit_std = 4.5;
  double texture = 0.8;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--images", num_images, "number of probe images");
  app.add_option("--out-gain", out_gain, "gain of the final dense layer");
  app.add_option("--in-gain", in_gain, "gain of the first conv layer");
  app.add_option("--pixel-noise", pixel_noise, "amplitude of per-pixel noise in probes");
  app.add_option("--softness", softness, "stroke edge width in pixels");
  app.add_option("--logit-std", logit_std, "target logit spread after calibration");
  app.add_option("--texture", texture, "strength of the probe background texture");
  CLI11_PARSE(app, argc, argv);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir / "images");

  std::mt19937 gen_mlp(seed + 1), gen_cnn(seed + 2), gen_mixed(seed + 3),
      gen_img(seed + 4);
  std::mt19937 gen_cal(seed + 5);
  std::vector<Tensor> cal;
  for (int i = 0; i < 128; ++i)
    cal.push_back(make_probe_image(gen_cal, pixel_noise, softness, texture));
  save_model(calibrate(make_mlp_tiny(gen_mlp, out_gain), cal, logit_std), dir,
             "mlp_tiny");
  save_model(calibrate(make_cnn_tiny(gen_cnn, in_gain, out_gain), cal,
                       logit_std),
             dir, "cnn_tiny");
  save_model(calibrate(make_mixed_tiny(gen_mixed, in_gain, out_gain), cal,
                       logit_std),
             dir, "mixed_tiny");

  for (std::size_t i = 0; i < num_images; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "probe_%02zu.pgm", i);
    save_image(make_probe_image(gen_img, pixel_noise, softness, texture), dir / "images" / name);
  }
  std::cout << "wrote fixtures to " << dir.string() << '\n';
  return 0;
}
