#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>
#include <vector>

#include "sdt/image.hpp"

namespace sdt {

namespace detail {

// One output coordinate of a cubic resample: four clamped source taps and
// their Catmull-Rom (a = -0.5) weights. With align-centers mapping the
// source coordinate of output index i is (i + 0.5) * (src / dst) - 0.5.
struct CubicTap {
  int idx[4];
  double w[4];
};

inline std::vector<CubicTap> cubic_taps(int src, int dst) {
  std::vector<CubicTap> taps(static_cast<size_t>(dst));
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (int i = 0; i < dst; ++i) {
    const double sx = (i + 0.5) * ratio - 0.5;
    const double base = std::floor(sx);
    const double t = sx - base;
    const int b = static_cast<int>(base);
    CubicTap& tap = taps[static_cast<size_t>(i)];
    // Catmull-Rom basis; at t == 0 this is exactly (0, 1, 0, 0), which makes
    // same-size resampling an exact copy.
    tap.w[0] = 0.5 * (-t * t * t + 2.0 * t * t - t);
    tap.w[1] = 0.5 * (3.0 * t * t * t - 5.0 * t * t + 2.0);
    tap.w[2] = 0.5 * (-3.0 * t * t * t + 4.0 * t * t + t);
    tap.w[3] = 0.5 * (t * t * t - t * t);
    for (int k = 0; k < 4; ++k)
      tap.idx[k] = std::clamp(b - 1 + k, 0, src - 1);
  }
  return taps;
}

// Resamples the horizontal axis of a (rows x src) plane into (rows x dst).
inline void resample_rows(const Eigen::ArrayXXd& in, Eigen::ArrayXXd& out,
                          const std::vector<CubicTap>& taps) {
  out.resize(in.rows(), static_cast<Eigen::Index>(taps.size()));
  for (Eigen::Index x = 0; x < out.cols(); ++x) {
    const CubicTap& t = taps[static_cast<size_t>(x)];
    out.col(x) = t.w[0] * in.col(t.idx[0]) + t.w[1] * in.col(t.idx[1]) +
                 t.w[2] * in.col(t.idx[2]) + t.w[3] * in.col(t.idx[3]);
  }
}

}  // namespace detail

// Separable Catmull-Rom resampling of a single plane held as a row-major
// scalar buffer. Border taps replicate edge samples; output is clamped to
// [0, 1]. Internal accumulation is double for any Scalar.
template <typename Scalar>
void bicubic_resize_plane(const Scalar* src, int sw, int sh, Scalar* dst,
                          int dw, int dh) {
  if (sw <= 0 || sh <= 0 || dw <= 0 || dh <= 0)
    throw std::invalid_argument("bicubic_resize: dimensions must be positive");

  // Rows of the plane are Eigen columns here so both passes are column ops.
  Eigen::ArrayXXd cur(sh, sw);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x)
      cur(y, x) = static_cast<double>(src[static_cast<Eigen::Index>(y) * sw + x]);

  Eigen::ArrayXXd tmp;
  detail::resample_rows(cur, tmp, detail::cubic_taps(sw, dw));
  Eigen::ArrayXXd tmp_t = tmp.transpose();
  Eigen::ArrayXXd out_t;
  detail::resample_rows(tmp_t, out_t, detail::cubic_taps(sh, dh));

  for (int y = 0; y < dh; ++y)
    for (int x = 0; x < dw; ++x) {
      const double v = out_t(x, y);
      dst[static_cast<Eigen::Index>(y) * dw + x] =
          static_cast<Scalar>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
    }
}

// Resamples every plane of an image to (new_width x new_height).
template <typename Scalar>
Image<Scalar> bicubic_resize(const Image<Scalar>& in, int new_width,
                             int new_height) {
  if (new_width <= 0 || new_height <= 0)
    throw std::invalid_argument("bicubic_resize: dimensions must be positive");
  Image<Scalar> out = make_image<Scalar>(new_width, new_height, in.colorspace);
  for (int c = 0; c < in.channels(); ++c)
    bicubic_resize_plane(in.data.data() + c * in.plane_size(), in.width,
                         in.height, out.data.data() + c * out.plane_size(),
                         new_width, new_height);
  return out;
}

}  // namespace sdt
