//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_IMAGE_IO_HPP
#define TRISEC_IMAGE_IO_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include <png.h>

#include "trisec/errors.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

/// Interleaved 8-bit image, 1 (grey) or 3 (RGB) channels.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

namespace detail {
  inline std::string lower_extension(const std::filesystem::path &path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
  }

  /// Next whitespace-delimited header token, skipping '#' comments.
  inline std::string pnm_token(std::istream &in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n')
          ;
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty())
          break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  }

  inline std::size_t pnm_number(std::istream &in,
                                const std::filesystem::path &path) {
    auto tok = pnm_token(in);
    if (tok.empty() ||
        !std::all_of(tok.begin(), tok.end(),
                     [](unsigned char c) { return std::isdigit(c); }))
      throw FormatError(path.string() + ": malformed PNM header");
    return std::stoul(tok);
  }

  inline ImageBuffer read_pnm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw IoError("cannot open " + path.string());
    const auto magic = pnm_token(in);
    ImageBuffer img;
    if (magic == "P5")
      img.channels = 1;
    else if (magic == "P6")
      img.channels = 3;
    else
      throw FormatError(path.string() + ": unsupported PNM type '" + magic +
                        "' (need binary P5 or P6)");
    img.width = pnm_number(in, path);
    img.height = pnm_number(in, path);
    const auto maxval = pnm_number(in, path);
    if (maxval != 255)
      throw FormatError(path.string() + ": unsupported maxval " +
                        std::to_string(maxval) + " (need 8-bit, 255)");
    if (img.width == 0 || img.height == 0)
      throw FormatError(path.string() + ": empty image");
    img.pixels.resize(img.width * img.height * img.channels);
    in.read(reinterpret_cast<char *>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
      throw FormatError(path.string() + ": truncated pixel data");
    return img;
  }

  inline void write_pnm(const ImageBuffer &img,
                        const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
      throw IoError("cannot write " + path.string());
    out << (img.channels == 1 ? "P5" : "P6") << '\n'
        << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char *>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out)
      throw IoError("write failed for " + path.string());
  }

  inline ImageBuffer read_png(const std::filesystem::path &path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
      throw FormatError(path.string() + ": " + image.message);
    if (image.format & PNG_FORMAT_FLAG_LINEAR) {
      png_image_free(&image);
      throw FormatError(path.string() + ": unsupported bit depth (16-bit)");
    }
    ImageBuffer img;
    img.width = image.width;
    img.height = image.height;
    img.channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    img.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0,
                               nullptr)) {
      std::string msg = image.message;
      png_image_free(&image);
      throw FormatError(path.string() + ": " + msg);
    }
    return img;
  }

  inline void write_png(const ImageBuffer &img,
                        const std::filesystem::path &path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0,
                                 img.pixels.data(), 0, nullptr))
      throw IoError(path.string() + ": " + image.message);
  }
} // namespace detail

/// Reads an 8-bit PNG, binary PGM (P5) or binary PPM (P6).
inline ImageBuffer read_image_buffer(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    throw IoError("no such image " + path.string());
  const auto ext = detail::lower_extension(path);
  if (ext == ".png")
    return detail::read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")
    return detail::read_pnm(path);
  throw FormatError(path.string() +
                    ": unsupported image format (use .png, .pgm or .ppm)");
}

/// Writes PNG for .png, otherwise binary PGM/PPM chosen by channel count.
inline void write_image_buffer(const ImageBuffer &img,
                               const std::filesystem::path &path) {
  if (img.channels != 1 && img.channels != 3)
    throw FormatError("images must have 1 or 3 channels");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw FormatError("image buffer size does not match its dimensions");
  const auto ext = detail::lower_extension(path);
  if (ext == ".png")
    detail::write_png(img, path);
  else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")
    detail::write_pnm(img, path);
  else
    throw FormatError(path.string() +
                      ": unsupported image format (use .png, .pgm or .ppm)");
}

/// Interleaved HWC bytes to a planar [C,H,W] tensor scaled by 1/255.
inline Tensor to_tensor(const ImageBuffer &img) {
  Tensor t(Shape{img.channels, img.height, img.width});
  for (std::size_t h = 0; h < img.height; ++h)
    for (std::size_t w = 0; w < img.width; ++w)
      for (std::size_t c = 0; c < img.channels; ++c)
        t.at(c, h, w) = static_cast<float>(
            img.pixels[(h * img.width + w) * img.channels + c] / 255.0);
  return t;
}

/// Planar tensor to 8-bit pixels: round(255 * clamp(v, 0, 1)), ties to even.
inline ImageBuffer to_image_buffer(const Tensor &t) {
  if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
    throw ShapeError("image tensor must be [C,H,W] with C in {1,3}, got " +
                     shape_str(t.shape()));
  ImageBuffer img;
  img.channels = t.dim(0);
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.resize(t.size());
  for (std::size_t h = 0; h < img.height; ++h)
    for (std::size_t w = 0; w < img.width; ++w)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::clamp(static_cast<double>(t.at(c, h, w)), 0.0,
                                    1.0);
        img.pixels[(h * img.width + w) * img.channels + c] =
            static_cast<std::uint8_t>(std::nearbyint(255.0 * v));
      }
  return img;
}

inline Tensor load_image(const std::filesystem::path &path) {
  return to_tensor(read_image_buffer(path));
}

inline void save_image(const Tensor &t, const std::filesystem::path &path) {
  write_image_buffer(to_image_buffer(t), path);
}

} // namespace trisec

#endif // TRISEC_IMAGE_IO_HPP
