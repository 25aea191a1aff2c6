#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

#include "sdt/image.hpp"
#include "sdt/resample.hpp"

namespace sdt {

enum class BlurKind { Motion, Defocus, None };

// Normalised blur point-spread function on an odd square support. Taps are
// kept in double regardless of the image scalar type.
struct BlurKernel {
  int size = 1;  // odd
  Eigen::ArrayXXd taps;  // size x size, sums to 1

  double at(int i, int j) const { return taps(i, j); }
};

struct DegradeConfig {
  BlurKind kind = BlurKind::Motion;
  double length = 9.0;  // motion streak length, pixels
  double angle = 0.0;   // motion direction, degrees from the horizontal axis
  double radius = 2.0;  // defocus disk radius, pixels
  int scale = 2;        // downsampling factor: 1, 2 or 4
  std::uint64_t seed = 0;
};

namespace detail {

// Fraction of each unit pixel cell covered by `inside`, measured on a
// supersample x supersample grid of cell-centred sample points.
template <typename Inside>
Eigen::ArrayXXd coverage_raster(int half, int supersample, Inside inside) {
  const int n = 2 * half + 1;
  Eigen::ArrayXXd cov = Eigen::ArrayXXd::Zero(n, n);
  const double step = 1.0 / supersample;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double cy = i - half - 0.5;
      const double cx = j - half - 0.5;
      int hits = 0;
      for (int si = 0; si < supersample; ++si)
        for (int sj = 0; sj < supersample; ++sj)
          if (inside(cx + (sj + 0.5) * step, cy + (si + 0.5) * step)) ++hits;
      cov(i, j) =
          static_cast<double>(hits) / (static_cast<double>(supersample) * supersample);
    }
  return cov;
}

// Shrinks a coverage raster to the smallest odd square containing all
// non-zero taps, then normalises it to unit sum.
inline BlurKernel finalize_kernel(const Eigen::ArrayXXd& cov) {
  const int n = static_cast<int>(cov.rows());
  const int half = (n - 1) / 2;
  int extent = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (cov(i, j) > 0.0)
        extent = std::max({extent, std::abs(i - half), std::abs(j - half)});

  BlurKernel k;
  const double total = cov.sum();
  if (total <= 0.0) {  // degenerate footprint: identity
    k.size = 1;
    k.taps = Eigen::ArrayXXd::Constant(1, 1, 1.0);
    return k;
  }
  k.size = 2 * extent + 1;
  k.taps = cov.block(half - extent, half - extent, k.size, k.size) / total;
  return k;
}

inline BlurKernel delta_kernel() {
  BlurKernel k;
  k.size = 1;
  k.taps = Eigen::ArrayXXd::Constant(1, 1, 1.0);
  return k;
}

}  // namespace detail

// Synthesises the PSF for a degradation config.
//   Motion:  an L x 1 rectangle rotated by `angle`, so a horizontal streak of
//            odd length L produces L taps of exactly 1/L.
//   Defocus: a disk of the given radius.
// Both are rasterised by 64x64 supersampled coverage and normalised to unit
// sum. Degenerate footprints (length <= 1, radius == 0) give the 1x1 identity.
inline BlurKernel make_blur_kernel(const DegradeConfig& cfg) {
  constexpr int kSupersample = 64;
  switch (cfg.kind) {
    case BlurKind::Motion: {
      if (cfg.length < 0.0)
        throw std::invalid_argument("make_blur_kernel: negative length");
      if (cfg.length <= 1.0) return detail::delta_kernel();
      const double rad = cfg.angle * (3.14159265358979323846 / 180.0);
      const double ux = std::cos(rad);
      const double uy = std::sin(rad);
      const double h = cfg.length / 2.0;
      const int half = static_cast<int>(std::ceil(h + 1.0));
      return detail::finalize_kernel(detail::coverage_raster(
          half, kSupersample, [&](double x, double y) {
            const double along = x * ux + y * uy;
            const double across = -x * uy + y * ux;
            return std::abs(along) <= h && std::abs(across) < 0.5;
          }));
    }
    case BlurKind::Defocus: {
      if (cfg.radius < 0.0)
        throw std::invalid_argument("make_blur_kernel: negative radius");
      if (cfg.radius == 0.0) return detail::delta_kernel();
      const double r2 = cfg.radius * cfg.radius;
      const int half = static_cast<int>(std::ceil(cfg.radius + 1.0));
      return detail::finalize_kernel(detail::coverage_raster(
          half, kSupersample,
          [&](double x, double y) { return x * x + y * y <= r2; }));
    }
    case BlurKind::None:
      throw std::invalid_argument(
          "make_blur_kernel: kind 'none' has no kernel");
  }
  throw std::invalid_argument("make_blur_kernel: unknown kind");
}

// 2-D correlation of every plane with a (symmetric-support) blur kernel.
// Replicate borders; accumulation in double; output clamped to [0, 1].
template <typename Scalar>
Image<Scalar> convolve2d(const Image<Scalar>& in, const BlurKernel& kernel) {
  if (kernel.size % 2 == 0 || kernel.taps.rows() != kernel.size ||
      kernel.taps.cols() != kernel.size)
    throw std::invalid_argument("convolve2d: kernel must be odd and square");
  const int half = (kernel.size - 1) / 2;
  Image<Scalar> out = make_image<Scalar>(in.width, in.height, in.colorspace);
  for (int c = 0; c < in.channels(); ++c) {
    const Scalar* src = in.data.data() + c * in.plane_size();
    Scalar* dst = out.data.data() + c * out.plane_size();
    for (int y = 0; y < in.height; ++y)
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (int i = 0; i < kernel.size; ++i) {
          const int sy =
              std::clamp(y + i - half, 0, in.height - 1);
          for (int j = 0; j < kernel.size; ++j) {
            const int sx = std::clamp(x + j - half, 0, in.width - 1);
            acc += kernel.at(i, j) *
                   static_cast<double>(src[static_cast<Eigen::Index>(sy) * in.width + sx]);
          }
        }
        dst[static_cast<Eigen::Index>(y) * in.width + x] =
            static_cast<Scalar>(acc < 0.0 ? 0.0 : (acc > 1.0 ? 1.0 : acc));
      }
  }
  return out;
}

// Builds one training pair from a sharp luma image: HR is the sharp input,
// LR is blur (unless kind == None) followed by bicubic downsampling by
// cfg.scale. Dimensions must be divisible by the scale.
template <typename Scalar>
std::pair<Image<Scalar>, Image<Scalar>> degrade_pair(
    const Image<Scalar>& sharp, const DegradeConfig& cfg) {
  if (sharp.colorspace != Colorspace::Luma)
    throw std::invalid_argument("degrade_pair: expects a luma image");
  if (cfg.scale != 1 && cfg.scale != 2 && cfg.scale != 4)
    throw std::invalid_argument("degrade_pair: scale must be 1, 2 or 4");
  if (sharp.width % cfg.scale != 0 || sharp.height % cfg.scale != 0)
    throw std::invalid_argument(
        "degrade_pair: dimensions not divisible by scale");

  Image<Scalar> blurred = cfg.kind == BlurKind::None
                              ? sharp
                              : convolve2d(sharp, make_blur_kernel(cfg));
  Image<Scalar> lr = cfg.scale == 1
                         ? std::move(blurred)
                         : bicubic_resize(blurred, sharp.width / cfg.scale,
                                          sharp.height / cfg.scale);
  return {std::move(lr), sharp};
}

}  // namespace sdt
