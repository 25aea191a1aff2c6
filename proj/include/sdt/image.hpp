#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdt {

enum class Colorspace { Rgb, YCbCr, Luma };

inline const char* to_string(Colorspace cs) {
  switch (cs) {
    case Colorspace::Rgb: return "rgb";
    case Colorspace::YCbCr: return "ycbcr";
    case Colorspace::Luma: return "luma";
  }
  return "?";
}

inline int channel_count(Colorspace cs) {
  return cs == Colorspace::Luma ? 1 : 3;
}

// Planar image buffer. Samples live in [0, 1]; storage is channel-major
// (plane 0 first, then plane 1, ...), each plane row-major. The scalar type
// is a template parameter so the same code serves float pipelines and
// double-precision oracles.
template <typename Scalar>
struct Image {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Array>;
  using ConstPlaneMap = Eigen::Map<const Array>;

  int width = 0;
  int height = 0;
  Colorspace colorspace = Colorspace::Luma;
  Array data;  // size = width * height * channels()

  int channels() const { return channel_count(colorspace); }
  Eigen::Index plane_size() const {
    return static_cast<Eigen::Index>(width) * height;
  }

  Scalar& at(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  Scalar at(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }

  PlaneMap plane(int c) {
    return PlaneMap(data.data() + c * plane_size(), plane_size());
  }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data.data() + c * plane_size(), plane_size());
  }
};

template <typename Scalar>
Image<Scalar> make_image(int width, int height, Colorspace cs,
                         Scalar fill = Scalar(0)) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("make_image: dimensions must be positive");
  Image<Scalar> img;
  img.width = width;
  img.height = height;
  img.colorspace = cs;
  img.data = Image<Scalar>::Array::Constant(
      static_cast<Eigen::Index>(width) * height * channel_count(cs), fill);
  return img;
}

namespace color {
// Full-range BT.601. Kg is 1 - Kr - Kb by definition, which is why luma is
// computed as G + Kr*(R-G) + Kb*(B-G): neutral inputs (R=G=B) then map to
// exactly that value and chroma lands on exactly 0.5, with no rounding
// residue from summing three products.
inline constexpr double kKr = 0.299;
inline constexpr double kKb = 0.114;
inline constexpr double kCbScale = 1.772;  // 2 * (1 - Kb)
inline constexpr double kCrScale = 1.402;  // 2 * (1 - Kr)

inline double luma(double r, double g, double b) {
  return g + kKr * (r - g) + kKb * (b - g);
}
}  // namespace color

// Converts between the supported colorspace pairs:
//   Rgb -> YCbCr, YCbCr -> Rgb, YCbCr -> Luma.
// Every other pair (including identity) throws std::invalid_argument.
// Outputs are clamped to [0, 1]; the math runs in double regardless of
// Scalar.
template <typename Scalar>
Image<Scalar> color_convert(const Image<Scalar>& in, Colorspace target) {
  const Eigen::Index n = in.plane_size();
  const auto store = [](typename Image<Scalar>::PlaneMap dst,
                        const Eigen::ArrayXd& src) {
    dst = src.cwiseMax(0.0).cwiseMin(1.0).cast<Scalar>();
  };

  if (in.colorspace == Colorspace::Rgb && target == Colorspace::YCbCr) {
    Image<Scalar> out = make_image<Scalar>(in.width, in.height, target);
    const Eigen::ArrayXd r = in.plane(0).template cast<double>();
    const Eigen::ArrayXd g = in.plane(1).template cast<double>();
    const Eigen::ArrayXd b = in.plane(2).template cast<double>();
    const Eigen::ArrayXd y = g + color::kKr * (r - g) + color::kKb * (b - g);
    store(out.plane(0), y);
    store(out.plane(1), 0.5 + (b - y) / color::kCbScale);
    store(out.plane(2), 0.5 + (r - y) / color::kCrScale);
    return out;
  }

  if (in.colorspace == Colorspace::YCbCr && target == Colorspace::Rgb) {
    Image<Scalar> out = make_image<Scalar>(in.width, in.height, target);
    const Eigen::ArrayXd y = in.plane(0).template cast<double>();
    const Eigen::ArrayXd cb = in.plane(1).template cast<double>() - 0.5;
    const Eigen::ArrayXd cr = in.plane(2).template cast<double>() - 0.5;
    const Eigen::ArrayXd r = y + color::kCrScale * cr;
    const Eigen::ArrayXd b = y + color::kCbScale * cb;
    const Eigen::ArrayXd g =
        (y - color::kKr * r - color::kKb * b) / (1.0 - color::kKr - color::kKb);
    store(out.plane(0), r);
    store(out.plane(1), g);
    store(out.plane(2), b);
    return out;
  }

  if (in.colorspace == Colorspace::YCbCr && target == Colorspace::Luma) {
    Image<Scalar> out = make_image<Scalar>(in.width, in.height, target);
    out.data = in.data.head(n);
    return out;
  }

  throw std::invalid_argument(
      std::string("color_convert: unsupported conversion ") +
      to_string(in.colorspace) + " -> " + to_string(target));
}

// Convenience: any supported colorspace down to single-channel luma.
template <typename Scalar>
Image<Scalar> to_luma(const Image<Scalar>& in) {
  if (in.colorspace == Colorspace::Luma) return in;
  if (in.colorspace == Colorspace::Rgb)
    return color_convert(color_convert(in, Colorspace::YCbCr),
                         Colorspace::Luma);
  return color_convert(in, Colorspace::Luma);
}

}  // namespace sdt
