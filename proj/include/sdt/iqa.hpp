#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sdt/image.hpp"

namespace sdt {

namespace iqa_detail {

// Any image -> double luma plane as a 2-D Eigen array (rows = image rows).
template <typename Scalar>
Eigen::ArrayXXd luma_plane(const Image<Scalar>& img) {
  const Image<Scalar>* src = &img;
  Image<Scalar> converted;
  if (img.colorspace != Colorspace::Luma) {
    converted = to_luma(img);
    src = &converted;
  }
  Eigen::ArrayXXd out(src->height, src->width);
  for (int y = 0; y < src->height; ++y)
    for (int x = 0; x < src->width; ++x)
      out(y, x) = static_cast<double>(src->at(0, y, x));
  return out;
}

inline Eigen::ArrayXd gaussian_kernel(double sigma, int radius) {
  Eigen::ArrayXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  return k / k.sum();
}

// Separable filtering with edge replication; output keeps the input size.
inline Eigen::ArrayXXd filter_replicate(const Eigen::ArrayXXd& in,
                                        const Eigen::ArrayXd& k) {
  const int radius = static_cast<int>(k.size() / 2);
  const Eigen::Index h = in.rows(), w = in.cols();
  Eigen::ArrayXXd tmp(h, w), out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index sx = std::clamp<Eigen::Index>(x + i, 0, w - 1);
        acc += k[i + radius] * in(y, sx);
      }
      tmp(y, x) = acc;
    }
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const Eigen::Index sy = std::clamp<Eigen::Index>(y + i, 0, h - 1);
        acc += k[i + radius] * tmp(sy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

// Separable filtering keeping only fully-covered (valid) pixels.
inline Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& in,
                                    const Eigen::ArrayXd& k) {
  const int radius = static_cast<int>(k.size() / 2);
  const Eigen::Index h = in.rows(), w = in.cols();
  const Eigen::Index vw = w - 2 * radius, vh = h - 2 * radius;
  if (vw < 1 || vh < 1)
    throw std::invalid_argument("filter_valid: image smaller than window");
  Eigen::ArrayXXd tmp(h, vw), out(vh, vw);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k.size(); ++i) acc += k[i] * in(y, x + i);
      tmp(y, x) = acc;
    }
  for (Eigen::Index y = 0; y < vh; ++y)
    for (Eigen::Index x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k.size(); ++i) acc += k[i] * tmp(y + i, x);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace iqa_detail

// Peak signal-to-noise ratio in dB over all samples; +infinity when the
// images are identical.
template <typename Scalar>
double psnr(const Image<Scalar>& ref, const Image<Scalar>& test,
            double max_value = 1.0) {
  if (ref.width != test.width || ref.height != test.height)
    throw std::invalid_argument("psnr: image geometry mismatch");
  const Eigen::ArrayXXd x = iqa_detail::luma_plane(ref);
  const Eigen::ArrayXXd y = iqa_detail::luma_plane(test);
  const double mse = (x - y).square().sum() / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1, averaged over fully-covered windows only.
template <typename Scalar>
double ssim(const Image<Scalar>& ref, const Image<Scalar>& test) {
  if (ref.width != test.width || ref.height != test.height)
    throw std::invalid_argument("ssim: image geometry mismatch");
  const Eigen::ArrayXXd x = iqa_detail::luma_plane(ref);
  const Eigen::ArrayXXd y = iqa_detail::luma_plane(test);

  const Eigen::ArrayXd win = iqa_detail::gaussian_kernel(1.5, 5);
  const Eigen::ArrayXXd mu_x = iqa_detail::filter_valid(x, win);
  const Eigen::ArrayXXd mu_y = iqa_detail::filter_valid(y, win);
  const Eigen::ArrayXXd xx = iqa_detail::filter_valid(x * x, win);
  const Eigen::ArrayXXd yy = iqa_detail::filter_valid(y * y, win);
  const Eigen::ArrayXXd xy = iqa_detail::filter_valid(x * y, win);

  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const Eigen::ArrayXXd var_x = xx - mu_x.square();
  const Eigen::ArrayXXd var_y = yy - mu_y.square();
  const Eigen::ArrayXXd cov = xy - mu_x * mu_y;
  const Eigen::ArrayXXd num =
      (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
  const Eigen::ArrayXXd den =
      (mu_x.square() + mu_y.square() + c1) * (var_x + var_y + c2);
  return (num / den).mean();
}

// Difference-of-Gaussian scale space used by the information-fidelity
// metrics: level l (1-based) smooths with sigma_l = (2^(5-l) + 1) / 5 over a
// window of 2*ceil(3*sigma)+1 taps, emits (current - smoothed) as the
// subband, then decimates the smoothed image by 2 for the next level.
template <typename Scalar>
std::vector<Eigen::ArrayXXd> scale_space(const Image<Scalar>& img,
                                         int levels) {
  if (levels < 1 || levels > 4)
    throw std::invalid_argument("scale_space: levels must be in [1, 4]");
  Eigen::ArrayXXd current = iqa_detail::luma_plane(img);
  std::vector<Eigen::ArrayXXd> subbands;
  subbands.reserve(static_cast<size_t>(levels));
  for (int level = 1; level <= levels; ++level) {
    const double sigma = (std::pow(2.0, 5 - level) + 1.0) / 5.0;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const Eigen::ArrayXXd smoothed = iqa_detail::filter_replicate(
        current, iqa_detail::gaussian_kernel(sigma, radius));
    subbands.push_back(current - smoothed);
    if (level < levels) {
      if (current.rows() < 2 || current.cols() < 2)
        throw std::invalid_argument(
            "scale_space: image exhausted before level " +
            std::to_string(level + 1));
      Eigen::ArrayXXd next((current.rows() + 1) / 2, (current.cols() + 1) / 2);
      for (Eigen::Index yy = 0; yy < next.rows(); ++yy)
        for (Eigen::Index xx = 0; xx < next.cols(); ++xx)
          next(yy, xx) = smoothed(2 * yy, 2 * xx);
      current = std::move(next);
    }
  }
  return subbands;
}

namespace iqa_detail {

inline constexpr double kNoiseVar = 2.0 / (255.0 * 255.0);
inline constexpr double kGainEps = 1e-15;
inline constexpr double kVarFloor = 1e-12;
inline constexpr double kSvFloor = 1e-15;

// Shared numerator/denominator of the information-fidelity metrics over a
// 4-level scale space: per-pixel GSM channel gains from local moments.
template <typename Scalar>
std::pair<double, double> information_sums(const Image<Scalar>& ref,
                                           const Image<Scalar>& test) {
  if (ref.width != test.width || ref.height != test.height)
    throw std::invalid_argument("information_sums: geometry mismatch");
  const std::vector<Eigen::ArrayXXd> sr = scale_space(ref, 4);
  const std::vector<Eigen::ArrayXXd> st = scale_space(test, 4);

  const Eigen::ArrayXd win = gaussian_kernel(0.6, 1);  // 3x3 local moments
  double num = 0.0, den = 0.0;
  for (size_t level = 0; level < sr.size(); ++level) {
    const Eigen::ArrayXXd& r = sr[level];
    const Eigen::ArrayXXd& t = st[level];
    const Eigen::ArrayXXd mu_r = filter_valid(r, win);
    const Eigen::ArrayXXd mu_t = filter_valid(t, win);
    const Eigen::ArrayXXd rr = filter_valid(r * r, win);
    const Eigen::ArrayXXd tt = filter_valid(t * t, win);
    const Eigen::ArrayXXd rt = filter_valid(r * t, win);

    for (Eigen::Index i = 0; i < mu_r.size(); ++i) {
      double var_r = std::max(0.0, rr(i) - mu_r(i) * mu_r(i));
      double var_t = std::max(0.0, tt(i) - mu_t(i) * mu_t(i));
      double cov = rt(i) - mu_r(i) * mu_t(i);

      double g = cov / (var_r + kGainEps);
      double sv = var_t - g * cov;
      if (var_r < kVarFloor) {
        g = 0.0;
        sv = var_t;
        var_r = 0.0;
      }
      if (var_t < kVarFloor) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = var_t;
        g = 0.0;
      }
      sv = std::max(sv, kSvFloor);
      num += std::log2(1.0 + g * g * var_r / (sv + kNoiseVar));
      den += std::log2(1.0 + var_r / kNoiseVar);
    }
  }
  return {num, den};
}

}  // namespace iqa_detail

// Visual information fidelity (pixel domain): mutual information through the
// distortion channel over reference self-information. 1.0 for identical
// images, < 1 under noise or blur.
template <typename Scalar>
double vif(const Image<Scalar>& ref, const Image<Scalar>& test) {
  const auto [num, den] = iqa_detail::information_sums(ref, test);
  if (den <= 0.0) return num <= 0.0 ? 1.0 : 0.0;  // featureless reference
  return num / den;
}

// Information fidelity criterion: the unnormalised numerator of VIF. For
// ref == test it equals the reference self-information (VIF's denominator).
template <typename Scalar>
double ifc(const Image<Scalar>& ref, const Image<Scalar>& test) {
  return iqa_detail::information_sums(ref, test).first;
}

struct IqaReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double ifc = 0.0;
  double vif = 0.0;
};

template <typename Scalar>
IqaReport evaluate_iqa(const Image<Scalar>& ref, const Image<Scalar>& test) {
  IqaReport r;
  r.psnr = psnr(ref, test);
  r.ssim = ssim(ref, test);
  r.ifc = ifc(ref, test);
  r.vif = vif(ref, test);
  return r;
}

}  // namespace sdt
