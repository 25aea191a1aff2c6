#pragma once

#include <Eigen/Core>
#include <stdexcept>

#include "sdt/image.hpp"

namespace sdt {

// Feature-map tensor: `channels` planes of height x width, channel-major,
// each plane row-major. Viewed as an Eigen matrix it is a column-major
// (height*width) x channels block, which is what the GEMM-based convolution
// consumes directly.
template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  int height = 0;
  int width = 0;
  int channels = 0;
  Array data;

  Eigen::Index plane_size() const {
    return static_cast<Eigen::Index>(height) * width;
  }
  Eigen::Index size() const { return plane_size() * channels; }

  Scalar& at(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  Scalar at(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }

  // (height*width) x channels view for GEMM.
  MatrixMap as_matrix() {
    return MatrixMap(data.data(), plane_size(), channels);
  }
  ConstMatrixMap as_matrix() const {
    return ConstMatrixMap(data.data(), plane_size(), channels);
  }
};

template <typename Scalar>
Tensor<Scalar> make_tensor(int height, int width, int channels,
                           Scalar fill = Scalar(0)) {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw std::invalid_argument("make_tensor: dimensions must be positive");
  Tensor<Scalar> t;
  t.height = height;
  t.width = width;
  t.channels = channels;
  t.data = Tensor<Scalar>::Array::Constant(
      static_cast<Eigen::Index>(height) * width * channels, fill);
  return t;
}

// Single-channel image -> 1-channel tensor (no copy semantics beyond the
// buffer copy; values keep their [0,1] range).
template <typename Scalar>
Tensor<Scalar> tensor_from_luma(const Image<Scalar>& img) {
  if (img.colorspace != Colorspace::Luma)
    throw std::invalid_argument("tensor_from_luma: expects a luma image");
  Tensor<Scalar> t;
  t.height = img.height;
  t.width = img.width;
  t.channels = 1;
  t.data = img.data;
  return t;
}

// 1-channel tensor -> luma image, clamped to the image range contract.
template <typename Scalar>
Image<Scalar> luma_from_tensor(const Tensor<Scalar>& t) {
  if (t.channels != 1)
    throw std::invalid_argument("luma_from_tensor: expects 1 channel");
  Image<Scalar> img = make_image<Scalar>(t.width, t.height, Colorspace::Luma);
  img.data = t.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return img;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.data.isFinite().all();
}

}  // namespace sdt
