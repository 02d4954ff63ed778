//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_MODEL_IO_HPP
#define TRISEC_MODEL_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "trisec/errors.hpp"
#include "trisec/network.hpp"

// Model format: a JSON manifest next to a raw little-endian float32 blob.
//
//   {"format_version": 1, "input_shape": [C,H,W], "num_classes": n,
//    "weights_file": "net.bin", "weights_sha256": "<hex>",
//    "layers": [{"kind": "conv2d", "in_ch":1, "out_ch":8, "kh":3, "kw":3,
//                "stride":1, "padding":0}, {"kind": "relu"}, ...]}
//
// The blob holds, in layer order, each parameterized layer's weights
// (row-major) followed by its biases. No header, no padding.

namespace trisec {

inline constexpr int kModelFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "weight blob I/O assumes a little-endian host");

inline std::string sha256_hex(const void *data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * digest_len);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace detail {
  inline std::vector<char> read_file_bytes(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in),
            std::istreambuf_iterator<char>()};
  }

  inline std::size_t get_dim(const nlohmann::json &obj, const char *key,
                             std::size_t index) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer() || it->get<long long>() < 0)
      throw FormatError("layer " + std::to_string(index) + ": field '" + key +
                        "' missing or not a non-negative integer");
    return it->get<std::size_t>();
  }

  inline Layer parse_layer(const nlohmann::json &obj, std::size_t index) {
    if (!obj.is_object() || !obj.contains("kind") || !obj["kind"].is_string())
      throw FormatError("layer " + std::to_string(index) +
                        ": expected an object with a string 'kind'");
    auto kind = layer_kind_from_string(obj["kind"].get<std::string>());
    if (!kind)
      throw FormatError("layer " + std::to_string(index) +
                        ": unknown kind '" + obj["kind"].get<std::string>() +
                        "'");
    Layer l = Layer::make(*kind);
    switch (*kind) {
    case LayerKind::dense:
      l.in = get_dim(obj, "in", index);
      l.out = get_dim(obj, "out", index);
      break;
    case LayerKind::conv2d:
      l.in_ch = get_dim(obj, "in_ch", index);
      l.out_ch = get_dim(obj, "out_ch", index);
      l.kh = get_dim(obj, "kh", index);
      l.kw = get_dim(obj, "kw", index);
      l.stride = get_dim(obj, "stride", index);
      l.padding = get_dim(obj, "padding", index);
      break;
    case LayerKind::maxpool2d:
      l.kh = get_dim(obj, "kh", index);
      l.kw = get_dim(obj, "kw", index);
      l.stride = get_dim(obj, "stride", index);
      break;
    default:
      break;
    }
    return l;
  }

  inline nlohmann::json layer_to_json(const Layer &l) {
    nlohmann::json obj{{"kind", std::string(to_string(l.kind))}};
    switch (l.kind) {
    case LayerKind::dense:
      obj["in"] = l.in;
      obj["out"] = l.out;
      break;
    case LayerKind::conv2d:
      obj["in_ch"] = l.in_ch;
      obj["out_ch"] = l.out_ch;
      obj["kh"] = l.kh;
      obj["kw"] = l.kw;
      obj["stride"] = l.stride;
      obj["padding"] = l.padding;
      break;
    case LayerKind::maxpool2d:
      obj["kh"] = l.kh;
      obj["kw"] = l.kw;
      obj["stride"] = l.stride;
      break;
    default:
      break;
    }
    return obj;
  }
} // namespace detail

/// Loads and validates a manifest + weight blob pair.
inline NetworkSpec load_model(const std::filesystem::path &manifest_path) {
  nlohmann::json manifest;
  {
    std::ifstream in(manifest_path);
    if (!in)
      throw FormatError("cannot open manifest " + manifest_path.string());
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception &e) {
      throw FormatError("manifest " + manifest_path.string() +
                        " is not valid JSON: " + e.what());
    }
  }

  Shape input_shape;
  std::size_t num_classes = 0;
  std::string weights_file, weights_sha;
  std::vector<Layer> layers;
  try {
    if (manifest.at("format_version").get<int>() != kModelFormatVersion)
      throw FormatError("unsupported format_version " +
                        manifest.at("format_version").dump());
    input_shape = manifest.at("input_shape").get<Shape>();
    num_classes = manifest.at("num_classes").get<std::size_t>();
    weights_file = manifest.at("weights_file").get<std::string>();
    weights_sha = manifest.at("weights_sha256").get<std::string>();
    const auto &jl = manifest.at("layers");
    if (!jl.is_array())
      throw FormatError("'layers' must be an array");
    for (std::size_t i = 0; i < jl.size(); ++i)
      layers.push_back(detail::parse_layer(jl[i], i));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("manifest " + manifest_path.string() +
                      " is malformed: " + e.what());
  }

  auto blob_path = manifest_path.parent_path() / weights_file;
  auto blob = detail::read_file_bytes(blob_path);

  std::size_t expected_floats = 0;
  for (const auto &l : layers)
    expected_floats += l.weight_count() + l.bias_count();
  if (blob.size() != expected_floats * sizeof(float))
    throw FormatError("weight blob " + blob_path.string() + " has " +
                      std::to_string(blob.size()) + " bytes, manifest needs " +
                      std::to_string(expected_floats * sizeof(float)));
  if (sha256_hex(blob.data(), blob.size()) != weights_sha)
    throw FormatError("weight blob " + blob_path.string() +
                      " fails its sha256 checksum");

  std::size_t offset = 0;
  auto take = [&](std::size_t n) {
    std::vector<float> v(n);
    std::memcpy(v.data(), blob.data() + offset, n * sizeof(float));
    offset += n * sizeof(float);
    return v;
  };
  for (auto &l : layers) {
    if (!l.has_parameters())
      continue;
    Shape wshape = l.kind == LayerKind::dense
                       ? Shape{l.out, l.in}
                       : Shape{l.out_ch, l.in_ch, l.kh, l.kw};
    try {
      l.weights = Tensor(wshape, take(l.weight_count()));
      l.biases = Tensor(Shape{l.bias_count()}, take(l.bias_count()));
    } catch (const ShapeError &e) {
      throw ModelValidationError(e.what());
    }
  }
  return NetworkSpec::build(std::move(input_shape), std::move(layers),
                            num_classes);
}

/// Writes `net` as `<dir>/<stem>.json` + `<dir>/<stem>.bin`. Returns the
/// manifest path.
inline std::filesystem::path save_model(const NetworkSpec &net,
                                        const std::filesystem::path &dir,
                                        const std::string &stem) {
  std::vector<float> blob;
  nlohmann::json jl = nlohmann::json::array();
  for (const auto &l : net.layers()) {
    jl.push_back(detail::layer_to_json(l));
    blob.insert(blob.end(), l.weights.values().begin(),
                l.weights.values().end());
    blob.insert(blob.end(), l.biases.values().begin(),
                l.biases.values().end());
  }
  const std::size_t nbytes = blob.size() * sizeof(float);

  std::filesystem::create_directories(dir);
  auto blob_path = dir / (stem + ".bin");
  {
    std::ofstream out(blob_path, std::ios::binary);
    if (!out)
      throw IoError("cannot write " + blob_path.string());
    out.write(reinterpret_cast<const char *>(blob.data()),
              static_cast<std::streamsize>(nbytes));
  }

  nlohmann::json manifest{
      {"format_version", kModelFormatVersion},
      {"input_shape", net.input_shape()},
      {"num_classes", net.num_classes()},
      {"weights_file", blob_path.filename().string()},
      {"weights_sha256", sha256_hex(blob.data(), nbytes)},
      {"layers", jl},
  };
  auto manifest_path = dir / (stem + ".json");
  std::ofstream out(manifest_path);
  if (!out)
    throw IoError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

} // namespace trisec

#endif // TRISEC_MODEL_IO_HPP
