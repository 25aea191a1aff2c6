#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdt/image.hpp"
#include "sdt/rng.hpp"

namespace sdt {

// Axis-aligned crop; the rectangle must lie fully inside the image.
template <typename Scalar>
Image<Scalar> crop(const Image<Scalar>& in, int x, int y, int w, int h) {
  if (w <= 0 || h <= 0 || x < 0 || y < 0 || x + w > in.width ||
      y + h > in.height)
    throw std::invalid_argument("crop: rectangle out of bounds");
  Image<Scalar> out = make_image<Scalar>(w, h, in.colorspace);
  for (int c = 0; c < in.channels(); ++c)
    for (int row = 0; row < h; ++row)
      out.plane(c).segment(static_cast<Eigen::Index>(row) * w, w) =
          in.plane(c).segment(
              (static_cast<Eigen::Index>(y) + row) * in.width + x, w);
  return out;
}

// One LR/HR training pair; (x, y) is the LR-domain origin of the crop, the
// HR crop sits at (scale*x, scale*y) with side scale*patch.
template <typename Scalar>
struct PatchPair {
  Image<Scalar> lr;
  Image<Scalar> hr;
  int x = 0;
  int y = 0;
};

// Samples `count` aligned patch pairs with origins uniform over all valid
// LR positions. The HR image must be an integer multiple of the LR image in
// both dimensions (the same multiple).
template <typename Scalar>
std::vector<PatchPair<Scalar>> sample_patch_pairs(const Image<Scalar>& lr,
                                                  const Image<Scalar>& hr,
                                                  int patch, int count,
                                                  std::uint64_t seed) {
  if (patch <= 0) throw std::invalid_argument("sample_patch_pairs: patch <= 0");
  if (count < 0) throw std::invalid_argument("sample_patch_pairs: count < 0");
  if (lr.width <= 0 || lr.height <= 0)
    throw std::invalid_argument("sample_patch_pairs: empty LR image");
  if (hr.width % lr.width != 0 || hr.height % lr.height != 0)
    throw std::invalid_argument(
        "sample_patch_pairs: HR dims are not an integer multiple of LR dims");
  const int sx = hr.width / lr.width;
  const int sy = hr.height / lr.height;
  if (sx != sy)
    throw std::invalid_argument(
        "sample_patch_pairs: HR/LR scale differs between axes");
  if (patch > lr.width || patch > lr.height)
    throw std::invalid_argument(
        "sample_patch_pairs: patch " + std::to_string(patch) +
        " exceeds LR dims " + std::to_string(lr.width) + "x" +
        std::to_string(lr.height));

  Rng rng(seed);
  std::vector<PatchPair<Scalar>> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PatchPair<Scalar> p;
    p.x = static_cast<int>(rng.bounded(
        static_cast<std::uint64_t>(lr.width - patch + 1)));
    p.y = static_cast<int>(rng.bounded(
        static_cast<std::uint64_t>(lr.height - patch + 1)));
    p.lr = crop(lr, p.x, p.y, patch, patch);
    p.hr = crop(hr, sx * p.x, sx * p.y, sx * patch, sx * patch);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sdt
