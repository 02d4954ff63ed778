//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_NETWORK_HPP
#define TRISEC_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trisec/errors.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten, softmax };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
  case LayerKind::dense:
    return "dense";
  case LayerKind::conv2d:
    return "conv2d";
  case LayerKind::relu:
    return "relu";
  case LayerKind::maxpool2d:
    return "maxpool2d";
  case LayerKind::flatten:
    return "flatten";
  case LayerKind::softmax:
    return "softmax";
  }
  return "unknown";
}

inline std::optional<LayerKind> layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu,
                 LayerKind::maxpool2d, LayerKind::flatten, LayerKind::softmax})
    if (to_string(k) == s)
      return k;
  return std::nullopt;
}

/// One stage of a feed-forward classifier.
///
/// Dense weights are [out, in]; conv2d weights are
/// [out_ch, in_ch, kh, kw]. Both carry a bias of length out / out_ch.
/// Parameter-free layers leave weights and biases empty.
struct Layer {
  LayerKind kind = LayerKind::relu;

  // dense
  std::size_t in = 0;
  std::size_t out = 0;

  // conv2d / maxpool2d
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor weights;
  Tensor biases;

  bool has_parameters() const noexcept {
    return kind == LayerKind::dense || kind == LayerKind::conv2d;
  }

  std::size_t weight_count() const noexcept {
    switch (kind) {
    case LayerKind::dense:
      return out * in;
    case LayerKind::conv2d:
      return out_ch * in_ch * kh * kw;
    default:
      return 0;
    }
  }

  std::size_t bias_count() const noexcept {
    switch (kind) {
    case LayerKind::dense:
      return out;
    case LayerKind::conv2d:
      return out_ch;
    default:
      return 0;
    }
  }

  static Layer make_dense(Tensor w, Tensor b) {
    Layer l;
    l.kind = LayerKind::dense;
    l.out = w.dim(0);
    l.in = w.dim(1);
    l.weights = std::move(w);
    l.biases = std::move(b);
    return l;
  }

  static Layer make_conv2d(Tensor w, Tensor b, std::size_t stride = 1,
                           std::size_t padding = 0) {
    Layer l;
    l.kind = LayerKind::conv2d;
    l.out_ch = w.dim(0);
    l.in_ch = w.dim(1);
    l.kh = w.dim(2);
    l.kw = w.dim(3);
    l.stride = stride;
    l.padding = padding;
    l.weights = std::move(w);
    l.biases = std::move(b);
    return l;
  }

  static Layer make_maxpool2d(std::size_t kh, std::size_t kw,
                              std::size_t stride) {
    Layer l;
    l.kind = LayerKind::maxpool2d;
    l.kh = kh;
    l.kw = kw;
    l.stride = stride;
    return l;
  }

  static Layer make(LayerKind kind) {
    Layer l;
    l.kind = kind;
    return l;
  }
};

/// A validated feed-forward network. Construct through `NetworkSpec::build`
/// (or `load_model`), which checks the shape chain and the softmax
/// placement; the resulting object is immutable.
class NetworkSpec {
public:
  static NetworkSpec build(Shape input_shape, std::vector<Layer> layers,
                           std::size_t num_classes);

  const Shape &input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer> &layers() const noexcept { return layers_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  /// Input shape of layer i; index layers().size() gives the network output.
  const Shape &shape_at(std::size_t i) const { return shapes_.at(i); }

private:
  NetworkSpec() = default;

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::size_t num_classes_ = 0;
  std::vector<Shape> shapes_;
};

namespace detail {
  inline std::size_t pooled_extent(std::size_t in, std::size_t pad,
                                   std::size_t k, std::size_t stride,
                                   std::size_t index, std::string_view what) {
    if (in + 2 * pad < k)
      throw ModelValidationError("layer " + std::to_string(index) + " (" +
                                 std::string(what) +
                                 "): kernel larger than input");
    return (in + 2 * pad - k) / stride + 1;
  }

  /// Output shape of `layer` given its input shape, validating the layer.
  inline Shape output_shape(const Layer &layer, const Shape &in,
                            std::size_t index) {
    auto fail = [&](const std::string &msg) {
      throw ModelValidationError("layer " + std::to_string(index) + " (" +
                                 std::string(to_string(layer.kind)) +
                                 "): " + msg);
    };
    if (layer.has_parameters()) {
      if (layer.weights.size() != layer.weight_count() ||
          layer.biases.size() != layer.bias_count())
        fail("parameter tensor sizes do not match layer dimensions");
    } else if (!layer.weights.empty() || !layer.biases.empty()) {
      fail("layer kind carries no parameters");
    }

    switch (layer.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != layer.in)
        fail("expects input [" + std::to_string(layer.in) + "], got " +
             shape_str(in));
      if (layer.out == 0)
        fail("zero output width");
      return {layer.out};
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[0] != layer.in_ch)
        fail("expects input with " + std::to_string(layer.in_ch) +
             " channels, got " + shape_str(in));
      if (layer.stride < 1)
        fail("stride must be >= 1");
      if (layer.out_ch == 0 || layer.kh == 0 || layer.kw == 0)
        fail("zero kernel dimension");
      auto h = pooled_extent(in[1], layer.padding, layer.kh, layer.stride,
                             index, "conv2d");
      auto w = pooled_extent(in[2], layer.padding, layer.kw, layer.stride,
                             index, "conv2d");
      return {layer.out_ch, h, w};
    }
    case LayerKind::maxpool2d: {
      if (in.size() != 3)
        fail("expects [C,H,W] input, got " + shape_str(in));
      if (layer.stride < 1)
        fail("stride must be >= 1");
      if (layer.kh == 0 || layer.kw == 0)
        fail("zero window dimension");
      auto h = pooled_extent(in[1], 0, layer.kh, layer.stride, index,
                             "maxpool2d");
      auto w = pooled_extent(in[2], 0, layer.kw, layer.stride, index,
                             "maxpool2d");
      return {in[0], h, w};
    }
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::relu:
      return in;
    case LayerKind::softmax:
      if (in.size() != 1)
        fail("expects a vector input, got " + shape_str(in));
      return in;
    }
    fail("unknown layer kind");
    return {};
  }
} // namespace detail

inline NetworkSpec NetworkSpec::build(Shape input_shape,
                                      std::vector<Layer> layers,
                                      std::size_t num_classes) {
  if (input_shape.size() != 3)
    throw ModelValidationError("input_shape must be [C,H,W], got " +
                               shape_str(input_shape));
  for (auto d : input_shape)
    if (d == 0)
      throw ModelValidationError("input_shape dimensions must be positive");
  if (layers.empty())
    throw ModelValidationError("network has no layers");
  if (num_classes == 0)
    throw ModelValidationError("num_classes must be positive");

  std::size_t softmax_count = 0;
  for (const auto &l : layers)
    softmax_count += l.kind == LayerKind::softmax;
  if (softmax_count != 1)
    throw ModelValidationError("network must contain exactly one softmax, "
                               "found " +
                               std::to_string(softmax_count));
  if (layers.back().kind != LayerKind::softmax)
    throw ModelValidationError("softmax must be the last layer");

  NetworkSpec net;
  net.shapes_.reserve(layers.size() + 1);
  net.shapes_.push_back(input_shape);
  for (std::size_t i = 0; i < layers.size(); ++i)
    net.shapes_.push_back(
        detail::output_shape(layers[i], net.shapes_.back(), i));

  const auto &out = net.shapes_.back();
  if (out.size() != 1 || out[0] != num_classes)
    throw ModelValidationError("network output " + shape_str(out) +
                               " does not match num_classes " +
                               std::to_string(num_classes));

  net.input_shape_ = std::move(input_shape);
  net.layers_ = std::move(layers);
  net.num_classes_ = num_classes;
  return net;
}

/// Every intermediate tensor of one forward pass.
///
/// `activations[0]` is the input image and `activations[i + 1]` is the
/// output of layer i. For dense and conv2d layers that output is the
/// pre-activation z; the following relu reads it to build its mask.
///
/// The pass itself runs in double precision; `activations` holds float
/// copies for callers, while `exact` keeps the double values the backward
/// pass differentiates, so relu masks, pooling winners and the softmax
/// Jacobian all describe the same function.
struct ForwardTrace {
  std::vector<Tensor> activations;
  std::vector<std::vector<double>> exact;

  const Tensor &input() const { return activations.front(); }
  /// Output distribution a^(L).
  const Tensor &output() const { return activations.back(); }
  /// Softmax input.
  const Tensor &logits() const { return activations[activations.size() - 2]; }
};

namespace detail {
  using Values = std::vector<double>;

  inline Values dense_forward(const Layer &l, const Values &x) {
    Values out(l.out);
    auto w = l.weights.data();
    for (std::size_t j = 0; j < l.out; ++j) {
      double acc = l.biases[j];
      const float *row = w.data() + j * l.in;
      for (std::size_t k = 0; k < l.in; ++k)
        acc += static_cast<double>(row[k]) * x[k];
      out[j] = acc;
    }
    return out;
  }

  inline Values conv2d_forward(const Layer &l, const Values &x,
                               const Shape &in_shape, const Shape &out_shape) {
    const std::size_t H = in_shape[1], W = in_shape[2];
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    const auto pad = static_cast<std::ptrdiff_t>(l.padding);
    Values out(shape_size(out_shape));
    for (std::size_t o = 0; o < l.out_ch; ++o)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          double acc = l.biases[o];
          for (std::size_t c = 0; c < l.in_ch; ++c)
            for (std::size_t i = 0; i < l.kh; ++i) {
              auto h = static_cast<std::ptrdiff_t>(oh * l.stride + i) - pad;
              if (h < 0 || h >= static_cast<std::ptrdiff_t>(H))
                continue;
              for (std::size_t j = 0; j < l.kw; ++j) {
                auto w = static_cast<std::ptrdiff_t>(ow * l.stride + j) - pad;
                if (w < 0 || w >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += static_cast<double>(
                           l.weights[((o * l.in_ch + c) * l.kh + i) * l.kw +
                                     j]) *
                       x[(c * H + static_cast<std::size_t>(h)) * W +
                         static_cast<std::size_t>(w)];
              }
            }
          out[(o * OH + oh) * OW + ow] = acc;
        }
    return out;
  }

  /// Flat input index of the maximum in each pooling window (first maximum
  /// on ties), in output order.
  inline std::vector<std::size_t> maxpool_argmax(const Layer &l,
                                                 const Values &x,
                                                 const Shape &in_shape,
                                                 const Shape &out_shape) {
    const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    std::vector<std::size_t> idx(C * OH * OW);
    std::size_t n = 0;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          std::size_t best = (c * H + oh * l.stride) * W + ow * l.stride;
          for (std::size_t i = 0; i < l.kh; ++i)
            for (std::size_t j = 0; j < l.kw; ++j) {
              std::size_t k = (c * H + oh * l.stride + i) * W +
                              ow * l.stride + j;
              if (x[k] > x[best])
                best = k;
            }
          idx[n++] = best;
        }
    return idx;
  }

  inline Values softmax_forward(const Values &z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    Values out(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      total += (out[i] = std::exp(z[i] - zmax));
    for (auto &v : out)
      v /= total;
    return out;
  }

  inline Values layer_forward(const Layer &l, const Values &x,
                              const Shape &in_shape, const Shape &out_shape) {
    switch (l.kind) {
    case LayerKind::dense:
      return dense_forward(l, x);
    case LayerKind::conv2d:
      return conv2d_forward(l, x, in_shape, out_shape);
    case LayerKind::relu: {
      Values out = x;
      for (auto &v : out)
        v = v > 0.0 ? v : 0.0;
      return out;
    }
    case LayerKind::maxpool2d: {
      auto idx = maxpool_argmax(l, x, in_shape, out_shape);
      Values out(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = x[idx[i]];
      return out;
    }
    case LayerKind::flatten:
      return x;
    case LayerKind::softmax:
      return softmax_forward(x);
    }
    throw ModelValidationError("unknown layer kind");
  }

  inline Tensor to_tensor(const Values &v, const Shape &shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < v.size(); ++i)
      t[i] = static_cast<float>(v[i]);
    return t;
  }
} // namespace detail

/// Runs the network on one image, keeping every intermediate tensor.
inline ForwardTrace forward(const NetworkSpec &net, const Tensor &x) {
  if (x.shape() != net.input_shape())
    throw ShapeError("forward: input shape " + shape_str(x.shape()) +
                     " does not match network input " +
                     shape_str(net.input_shape()));
  const auto &layers = net.layers();
  ForwardTrace trace;
  trace.activations.reserve(layers.size() + 1);
  trace.exact.reserve(layers.size() + 1);
  trace.activations.push_back(x);
  trace.exact.emplace_back(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    trace.exact.push_back(detail::layer_forward(
        layers[i], trace.exact.back(), net.shape_at(i), net.shape_at(i + 1)));
    trace.activations.push_back(
        detail::to_tensor(trace.exact.back(), net.shape_at(i + 1)));
  }
  return trace;
}

/// Predicted distribution only.
inline Tensor predict(const NetworkSpec &net, const Tensor &x) {
  return forward(net, x).output();
}

/// Analytic gradient of C = sum_j (a_j - y_j)^2 with respect to the input
/// image, back-propagated through every layer recorded in `trace`.
inline Tensor input_gradient(const NetworkSpec &net, const ForwardTrace &trace,
                             const Tensor &y) {
  const auto &layers = net.layers();
  if (trace.activations.size() != layers.size() + 1 ||
      trace.exact.size() != layers.size() + 1)
    throw ShapeError("input_gradient: trace has " +
                     std::to_string(trace.activations.size()) +
                     " activations, network expects " +
                     std::to_string(layers.size() + 1));
  for (std::size_t i = 0; i <= layers.size(); ++i)
    if (trace.activations[i].shape() != net.shape_at(i) ||
        trace.exact[i].size() != shape_size(net.shape_at(i)))
      throw ShapeError("input_gradient: trace activation " +
                       std::to_string(i) + " has shape " +
                       shape_str(trace.activations[i].shape()) +
                       ", network expects " + shape_str(net.shape_at(i)));
  if (y.shape() != trace.output().shape())
    throw ShapeError("input_gradient: target " + shape_str(y.shape()) +
                     " vs output " + shape_str(trace.output().shape()));

  // dC/da^(L) = 2 (a^(L) - y)
  const auto &a_out = trace.exact.back();
  std::vector<double> grad(a_out.size());
  for (std::size_t j = 0; j < grad.size(); ++j)
    grad[j] = 2.0 * (a_out[j] - y[j]);

  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer &l = layers[li];
    const auto &in = trace.exact[li];
    const auto &out = trace.exact[li + 1];
    std::vector<double> g_in(in.size(), 0.0);

    switch (l.kind) {
    case LayerKind::softmax: {
      // Full Jacobian: da_i/dz_k = a_i (delta_ik - a_k).
      double weighted = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i)
        weighted += grad[i] * out[i];
      for (std::size_t k = 0; k < out.size(); ++k)
        g_in[k] = out[k] * (grad[k] - weighted);
      break;
    }
    case LayerKind::dense: {
      for (std::size_t j = 0; j < l.out; ++j) {
        const double gj = grad[j];
        if (gj == 0.0)
          continue;
        const float *row = l.weights.data().data() + j * l.in;
        for (std::size_t k = 0; k < l.in; ++k)
          g_in[k] += row[k] * gj;
      }
      break;
    }
    case LayerKind::conv2d: {
      const std::size_t H = net.shape_at(li)[1], W = net.shape_at(li)[2];
      const std::size_t OH = net.shape_at(li + 1)[1],
                        OW = net.shape_at(li + 1)[2];
      const auto pad = static_cast<std::ptrdiff_t>(l.padding);
      for (std::size_t o = 0; o < l.out_ch; ++o)
        for (std::size_t oh = 0; oh < OH; ++oh)
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const double g = grad[(o * OH + oh) * OW + ow];
            if (g == 0.0)
              continue;
            for (std::size_t c = 0; c < l.in_ch; ++c)
              for (std::size_t i = 0; i < l.kh; ++i) {
                auto h = static_cast<std::ptrdiff_t>(oh * l.stride + i) - pad;
                if (h < 0 || h >= static_cast<std::ptrdiff_t>(H))
                  continue;
                for (std::size_t j = 0; j < l.kw; ++j) {
                  auto w =
                      static_cast<std::ptrdiff_t>(ow * l.stride + j) - pad;
                  if (w < 0 || w >= static_cast<std::ptrdiff_t>(W))
                    continue;
                  g_in[(c * H + static_cast<std::size_t>(h)) * W +
                       static_cast<std::size_t>(w)] +=
                      l.weights[((o * l.in_ch + c) * l.kh + i) * l.kw + j] *
                      g;
                }
              }
          }
      break;
    }
    case LayerKind::relu:
      for (std::size_t k = 0; k < in.size(); ++k)
        g_in[k] = in[k] > 0.0 ? grad[k] : 0.0;
      break;
    case LayerKind::maxpool2d: {
      auto idx = detail::maxpool_argmax(l, in, net.shape_at(li),
                                        net.shape_at(li + 1));
      for (std::size_t i = 0; i < idx.size(); ++i)
        g_in[idx[i]] += grad[i];
      break;
    }
    case LayerKind::flatten:
      g_in = grad;
      break;
    }
    grad = std::move(g_in);
  }

  Tensor result(net.input_shape());
  for (std::size_t k = 0; k < result.size(); ++k)
    result[k] = static_cast<float>(grad[k]);
  return result;
}

} // namespace trisec

#endif // TRISEC_NETWORK_HPP
