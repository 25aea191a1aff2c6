#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdt/image.hpp"

namespace sdt {

// 8-bit interleaved pixel buffer as read from / written to a PNG stream.
// channels is 1 (gray) or 3 (RGB); rows are tightly packed.
struct PngBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Reads any PNG, normalising to 8-bit gray or RGB (palette expanded, 16-bit
// narrowed, alpha stripped). Throws IoError on missing/corrupt files.
PngBuffer read_png(const std::string& path);

// Writes an 8-bit gray or RGB PNG atomically (temp file + rename).
void write_png(const std::string& path, const PngBuffer& buf);

// PNG -> planar [0,1] image. Gray maps to Luma, color to Rgb.
template <typename Scalar>
Image<Scalar> load_png(const std::string& path) {
  const PngBuffer buf = read_png(path);
  const Colorspace cs =
      buf.channels == 1 ? Colorspace::Luma : Colorspace::Rgb;
  Image<Scalar> img = make_image<Scalar>(buf.width, buf.height, cs);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < buf.channels; ++c)
      img.data[c * n + i] = static_cast<Scalar>(
          buf.pixels[static_cast<size_t>(i) * buf.channels + c] / 255.0);
  return img;
}

// Quantises one [0,1] sample to 8 bits: round half away from zero, clamped.
template <typename Scalar>
std::uint8_t quantize8(Scalar v) {
  const double scaled = std::round(static_cast<double>(v) * 255.0);
  return static_cast<std::uint8_t>(scaled < 0.0 ? 0.0
                                   : (scaled > 255.0 ? 255.0 : scaled));
}

// Planar image -> 8-bit PNG. Luma and Rgb images only; convert YCbCr before
// saving.
template <typename Scalar>
void save_png(const std::string& path, const Image<Scalar>& img) {
  if (img.colorspace == Colorspace::YCbCr)
    throw std::invalid_argument(
        "save_png: YCbCr images must be converted to rgb or luma first");
  PngBuffer buf;
  buf.width = img.width;
  buf.height = img.height;
  buf.channels = img.channels();
  buf.pixels.resize(static_cast<size_t>(img.plane_size()) * buf.channels);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < buf.channels; ++c)
      buf.pixels[static_cast<size_t>(i) * buf.channels + c] =
          quantize8(img.data[c * n + i]);
  write_png(path, buf);
}

}  // namespace sdt
