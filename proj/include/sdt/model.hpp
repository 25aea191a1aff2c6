#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdt/resample.hpp"
#include "sdt/rng.hpp"
#include "sdt/tensor.hpp"

namespace sdt {

enum class Activator { PReLU, ReLU, LeakyReLU, Sigmoid, Tanh, SELU };

inline const char* to_string(Activator a) {
  switch (a) {
    case Activator::PReLU: return "prelu";
    case Activator::ReLU: return "relu";
    case Activator::LeakyReLU: return "leaky_relu";
    case Activator::Sigmoid: return "sigmoid";
    case Activator::Tanh: return "tanh";
    case Activator::SELU: return "selu";
  }
  return "?";
}

inline Activator activator_from_string(const std::string& s) {
  if (s == "prelu") return Activator::PReLU;
  if (s == "relu") return Activator::ReLU;
  if (s == "leaky_relu") return Activator::LeakyReLU;
  if (s == "sigmoid") return Activator::Sigmoid;
  if (s == "tanh") return Activator::Tanh;
  if (s == "selu") return Activator::SELU;
  throw std::invalid_argument("unknown activator '" + s + "'");
}

// Per-layer filter counts: an exponential taper from `first` down to `last`
// over `layers` layers. Layer i (0-based) gets
//   floor((first - last) * (1 - (i/(layers-1))^(1/gamma))) + last.
inline std::vector<int> filter_schedule(int first, int last, int layers,
                                        double gamma) {
  if (layers < 2)
    throw std::invalid_argument("filter_schedule: need at least 2 layers");
  if (last < 1)
    throw std::invalid_argument("filter_schedule: last < 1");
  if (first < last)
    throw std::invalid_argument("filter_schedule: first < last");
  if (!(gamma > 0.0))
    throw std::invalid_argument("filter_schedule: gamma must be positive");
  std::vector<int> out(static_cast<size_t>(layers));
  for (int i = 0; i < layers; ++i) {
    const double x = static_cast<double>(i) / (layers - 1);
    out[static_cast<size_t>(i)] =
        static_cast<int>(std::floor((first - last) *
                                    (1.0 - std::pow(x, 1.0 / gamma)))) +
        last;
  }
  return out;
}

struct ModelConfig {
  int scale = 2;
  int feature_layers = 8;
  int first_filters = 196;
  int last_filters = 32;
  double filter_decay_gamma = 1.2;
  Activator activator = Activator::PReLU;
  int recon_a1 = 64;
  int recon_b1 = 32;
  int recon_b2 = 32;
  double dropout_keep = 0.8;
  // Explicit per-layer filter counts. Empty means "derive from the schedule
  // parameters above"; non-empty overrides them (its length wins over
  // feature_layers).
  std::vector<int> feature_filters;

  bool operator==(const ModelConfig&) const = default;

  std::vector<int> filters() const {
    if (!feature_filters.empty()) return feature_filters;
    return filter_schedule(first_filters, last_filters, feature_layers,
                           filter_decay_gamma);
  }

  int concat_channels() const {
    const auto f = filters();
    return std::accumulate(f.begin(), f.end(), 0);
  }

  void validate() const {
    if (scale != 2 && scale != 4)
      throw std::invalid_argument("ModelConfig: scale must be 2 or 4");
    if (feature_filters.empty()) {
      filter_schedule(first_filters, last_filters, feature_layers,
                      filter_decay_gamma);  // throws on bad parameters
    } else {
      if (feature_filters.size() < 2)
        throw std::invalid_argument("ModelConfig: need at least 2 layers");
      for (int f : feature_filters)
        if (f < 1)
          throw std::invalid_argument("ModelConfig: filter count < 1");
    }
    if (recon_a1 < 1 || recon_b1 < 1 || recon_b2 < 1)
      throw std::invalid_argument("ModelConfig: reconstruction widths < 1");
    if (!(dropout_keep > 0.0) || dropout_keep > 1.0)
      throw std::invalid_argument("ModelConfig: dropout_keep not in (0, 1]");
  }
};

// Parameters of one convolution. The kernel is flattened as
// [out_channel][in_channel][row][col], so each output channel's block is a
// contiguous column of the (kh*kw*cin) x cout kernel matrix. `prelu` holds
// per-channel negative-side slopes and is empty for layers without one.
template <typename Scalar>
struct ConvLayer {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  int kh = 0;
  int kw = 0;
  int in_channels = 0;
  int out_channels = 0;
  Array kernel;
  Array bias;
  Array prelu;

  Eigen::Index patch_size() const {
    return static_cast<Eigen::Index>(kh) * kw * in_channels;
  }
  Eigen::Index parameter_count() const {
    return kernel.size() + bias.size() + prelu.size();
  }
};

template <typename Scalar>
ConvLayer<Scalar> make_conv_layer(int kh, int kw, int cin, int cout,
                                  bool with_prelu) {
  ConvLayer<Scalar> l;
  l.kh = kh;
  l.kw = kw;
  l.in_channels = cin;
  l.out_channels = cout;
  l.kernel = ConvLayer<Scalar>::Array::Zero(l.patch_size() * cout);
  l.bias = ConvLayer<Scalar>::Array::Zero(cout);
  if (with_prelu) l.prelu = ConvLayer<Scalar>::Array::Zero(cout);
  return l;
}

// All learnable parameters of a model: the feature-extraction cascade and
// the four reconstruction convs. Gradients reuse this type (shape mirror).
template <typename Scalar>
struct ModelWeights {
  std::vector<ConvLayer<Scalar>> feature;
  ConvLayer<Scalar> recon_a1;
  ConvLayer<Scalar> recon_b1;
  ConvLayer<Scalar> recon_b2;
  ConvLayer<Scalar> recon_l;

  template <typename F>
  void for_each_layer(F&& f) {
    for (size_t i = 0; i < feature.size(); ++i)
      f("feature" + std::to_string(i + 1), feature[i]);
    f(std::string("recon_a1"), recon_a1);
    f(std::string("recon_b1"), recon_b1);
    f(std::string("recon_b2"), recon_b2);
    f(std::string("recon_l"), recon_l);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    for (size_t i = 0; i < feature.size(); ++i)
      f("feature" + std::to_string(i + 1), feature[i]);
    f(std::string("recon_a1"), recon_a1);
    f(std::string("recon_b1"), recon_b1);
    f(std::string("recon_b2"), recon_b2);
    f(std::string("recon_l"), recon_l);
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for_each_layer([&](const std::string&, const ConvLayer<Scalar>& l) {
      n += l.parameter_count();
    });
    return n;
  }
};

// Zero-filled weights with the shapes implied by the config.
template <typename Scalar>
ModelWeights<Scalar> zero_model(const ModelConfig& cfg) {
  cfg.validate();
  const bool pr = cfg.activator == Activator::PReLU;
  const std::vector<int> filters = cfg.filters();
  ModelWeights<Scalar> w;
  int cin = 1;
  for (int f : filters) {
    w.feature.push_back(make_conv_layer<Scalar>(3, 3, cin, f, pr));
    cin = f;
  }
  const int cat = cfg.concat_channels();
  w.recon_a1 = make_conv_layer<Scalar>(1, 1, cat, cfg.recon_a1, pr);
  w.recon_b1 = make_conv_layer<Scalar>(1, 1, cat, cfg.recon_b1, pr);
  w.recon_b2 = make_conv_layer<Scalar>(3, 3, cfg.recon_b1, cfg.recon_b2, pr);
  w.recon_l = make_conv_layer<Scalar>(
      1, 1, cfg.recon_a1 + cfg.recon_b2, cfg.scale * cfg.scale, false);
  return w;
}

// He-initialised weights: kernel entries ~ N(0, 2/fan_in) with
// fan_in = kh*kw*cin; biases and PReLU slopes start at zero.
template <typename Scalar>
ModelWeights<Scalar> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights<Scalar> w = zero_model<Scalar>(cfg);
  Rng rng(seed);
  w.for_each_layer([&](const std::string&, ConvLayer<Scalar>& l) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.patch_size()));
    for (Eigen::Index i = 0; i < l.kernel.size(); ++i)
      l.kernel[i] = static_cast<Scalar>(stddev * rng.gaussian());
  });
  return w;
}

namespace detail {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// (kh*kw*cin) x cout view of the kernel; zero-copy thanks to the flat layout.
template <typename Scalar>
Eigen::Map<const MatrixX<Scalar>> kernel_matrix(const ConvLayer<Scalar>& l) {
  return Eigen::Map<const MatrixX<Scalar>>(l.kernel.data(), l.patch_size(),
                                           l.out_channels);
}
template <typename Scalar>
Eigen::Map<MatrixX<Scalar>> kernel_matrix(ConvLayer<Scalar>& l) {
  return Eigen::Map<MatrixX<Scalar>>(l.kernel.data(), l.patch_size(),
                                     l.out_channels);
}

// Unrolls same-padded (zero-fill) receptive fields into a GEMM operand:
// row p = output pixel (y*w + x), column q = (ci*kh + i)*kw + j.
template <typename Scalar>
MatrixX<Scalar> im2col(const Tensor<Scalar>& x, int kh, int kw) {
  const int h = x.height, w = x.width;
  const int ph = kh / 2, pw = kw / 2;
  MatrixX<Scalar> cols(x.plane_size(),
                       static_cast<Eigen::Index>(kh) * kw * x.channels);
  Eigen::Index q = 0;
  for (int ci = 0; ci < x.channels; ++ci) {
    const Scalar* plane = x.data.data() + ci * x.plane_size();
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j, ++q) {
        const int dy = i - ph, dx = j - pw;
        Scalar* col = cols.col(q).data();
        for (int y = 0; y < h; ++y) {
          Scalar* row = col + static_cast<Eigen::Index>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<Eigen::Index>(sy) * w;
          const int lead = std::max(0, -dx);
          const int tail = std::max(0, dx);
          std::fill(row, row + lead, Scalar(0));
          std::copy(src + lead + dx, src + w - tail + dx, row + lead);
          std::fill(row + w - tail, row + w, Scalar(0));
        }
      }
  }
  return cols;
}

// Transpose of im2col as a scatter-add: accumulates column gradients back
// onto the input grid.
template <typename Scalar>
void col2im_add(const MatrixX<Scalar>& cols, int kh, int kw,
                Tensor<Scalar>& dx) {
  const int h = dx.height, w = dx.width;
  const int ph = kh / 2, pw = kw / 2;
  Eigen::Index q = 0;
  for (int ci = 0; ci < dx.channels; ++ci) {
    Scalar* plane = dx.data.data() + ci * dx.plane_size();
    for (int i = 0; i < kh; ++i)
      for (int j = 0; j < kw; ++j, ++q) {
        const int dy = i - ph, dxx = j - pw;
        const Scalar* col = cols.col(q).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const Scalar* row = col + static_cast<Eigen::Index>(y) * w;
          Scalar* dst = plane + static_cast<Eigen::Index>(sy) * w;
          const int lead = std::max(0, -dxx);
          const int tail = std::max(0, dxx);
          for (int xcol = lead; xcol < w - tail; ++xcol)
            dst[xcol + dxx] += row[xcol];
        }
      }
  }
}

}  // namespace detail

// Same-padded convolution (zero fill), stride 1: a GEMM between the unrolled
// input and the kernel matrix, plus a broadcast bias.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const ConvLayer<Scalar>& layer) {
  if (x.channels != layer.in_channels)
    throw std::invalid_argument(
        "conv2d: input has " + std::to_string(x.channels) +
        " channels, layer expects " + std::to_string(layer.in_channels));
  if (layer.kh % 2 == 0 || layer.kw % 2 == 0)
    throw std::invalid_argument("conv2d: kernel dims must be odd");
  Tensor<Scalar> out = make_tensor<Scalar>(x.height, x.width,
                                           layer.out_channels);
  if (layer.kh == 1 && layer.kw == 1) {
    out.as_matrix().noalias() =
        x.as_matrix() * detail::kernel_matrix(layer);
  } else {
    out.as_matrix().noalias() =
        detail::im2col(x, layer.kh, layer.kw) * detail::kernel_matrix(layer);
  }
  out.as_matrix().rowwise() += layer.bias.matrix().transpose();
  return out;
}

template <typename Scalar>
struct ConvGrads {
  typename ConvLayer<Scalar>::Array kernel;
  typename ConvLayer<Scalar>::Array bias;
  Tensor<Scalar> dx;
};

// Reverse-mode gradients of conv2d with respect to kernel, bias and input.
// `x` must be the tensor the forward pass consumed.
template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x,
                                  const ConvLayer<Scalar>& layer,
                                  const Tensor<Scalar>& dout) {
  if (dout.height != x.height || dout.width != x.width ||
      dout.channels != layer.out_channels || x.channels != layer.in_channels)
    throw std::invalid_argument("conv2d_backward: shape mismatch");

  ConvGrads<Scalar> g;
  g.kernel.resize(layer.kernel.size());
  Eigen::Map<detail::MatrixX<Scalar>> dkernel(g.kernel.data(),
                                              layer.patch_size(),
                                              layer.out_channels);
  g.bias = dout.as_matrix().colwise().sum().array().transpose();
  g.dx = make_tensor<Scalar>(x.height, x.width, x.channels);

  if (layer.kh == 1 && layer.kw == 1) {
    dkernel.noalias() = x.as_matrix().transpose() * dout.as_matrix();
    g.dx.as_matrix().noalias() =
        dout.as_matrix() * detail::kernel_matrix(layer).transpose();
  } else {
    const detail::MatrixX<Scalar> cols =
        detail::im2col(x, layer.kh, layer.kw);
    dkernel.noalias() = cols.transpose() * dout.as_matrix();
    detail::MatrixX<Scalar> dcols =
        dout.as_matrix() * detail::kernel_matrix(layer).transpose();
    detail::col2im_add(dcols, layer.kh, layer.kw, g.dx);
  }
  return g;
}

namespace detail {
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kLeakySlope = 0.01;
}  // namespace detail

// Elementwise activation. `prelu_slope` supplies per-channel negative-side
// slopes and is only read when kind == PReLU.
template <typename Scalar>
Tensor<Scalar> activate(const Tensor<Scalar>& z, Activator kind,
                        const typename ConvLayer<Scalar>::Array& prelu_slope) {
  Tensor<Scalar> a = make_tensor<Scalar>(z.height, z.width, z.channels);
  const Eigen::Index n = z.plane_size();
  for (int c = 0; c < z.channels; ++c) {
    auto zc = z.data.segment(c * n, n);
    auto ac = a.data.segment(c * n, n);
    switch (kind) {
      case Activator::PReLU: {
        if (prelu_slope.size() != z.channels)
          throw std::invalid_argument("activate: prelu slope size mismatch");
        const Scalar s = prelu_slope[c];
        ac = (zc > Scalar(0)).select(zc, s * zc);
        break;
      }
      case Activator::ReLU:
        ac = zc.max(Scalar(0));
        break;
      case Activator::LeakyReLU:
        ac = (zc > Scalar(0))
                 .select(zc, Scalar(detail::kLeakySlope) * zc);
        break;
      case Activator::Sigmoid:
        ac = Scalar(1) / (Scalar(1) + (-zc).exp());
        break;
      case Activator::Tanh:
        ac = zc.tanh();
        break;
      case Activator::SELU: {
        const Scalar l = Scalar(detail::kSeluLambda);
        const Scalar al = Scalar(detail::kSeluAlpha);
        ac = (zc > Scalar(0)).select(l * zc, l * al * (zc.exp() - Scalar(1)));
        break;
      }
    }
  }
  return a;
}

template <typename Scalar>
struct ActGrads {
  Tensor<Scalar> dz;
  typename ConvLayer<Scalar>::Array dslope;  // empty unless PReLU
};

// Reverse-mode activation gradients. `z` is the pre-activation, `a` the
// activation output from the forward pass.
template <typename Scalar>
ActGrads<Scalar> activate_backward(
    const Tensor<Scalar>& z, const Tensor<Scalar>& a, Activator kind,
    const typename ConvLayer<Scalar>::Array& prelu_slope,
    const Tensor<Scalar>& da) {
  ActGrads<Scalar> g;
  g.dz = make_tensor<Scalar>(z.height, z.width, z.channels);
  if (kind == Activator::PReLU)
    g.dslope = ConvLayer<Scalar>::Array::Zero(z.channels);
  const Eigen::Index n = z.plane_size();
  for (int c = 0; c < z.channels; ++c) {
    auto zc = z.data.segment(c * n, n);
    auto acseg = a.data.segment(c * n, n);
    auto dac = da.data.segment(c * n, n);
    auto dzc = g.dz.data.segment(c * n, n);
    switch (kind) {
      case Activator::PReLU: {
        const Scalar s = prelu_slope[c];
        dzc = (zc > Scalar(0)).select(dac, s * dac);
        g.dslope[c] = (zc > Scalar(0))
                          .select(Tensor<Scalar>::Array::Zero(n), zc * dac)
                          .sum();
        break;
      }
      case Activator::ReLU:
        dzc = (zc > Scalar(0)).select(dac, Scalar(0));
        break;
      case Activator::LeakyReLU:
        dzc = (zc > Scalar(0))
                  .select(dac, Scalar(detail::kLeakySlope) * dac);
        break;
      case Activator::Sigmoid:
        dzc = dac * acseg * (Scalar(1) - acseg);
        break;
      case Activator::Tanh:
        dzc = dac * (Scalar(1) - acseg.square());
        break;
      case Activator::SELU: {
        const Scalar l = Scalar(detail::kSeluLambda);
        const Scalar al = Scalar(detail::kSeluAlpha);
        dzc = (zc > Scalar(0)).select(l * dac, (acseg + l * al) * dac);
        break;
      }
    }
  }
  return g;
}

// Rearranges (h, w, g*s^2) -> (h*s, w*s, g): output pixel (y, x) of group g
// reads channel g*s^2 + (y%s)*s + (x%s) at (y/s, x/s).
template <typename Scalar>
Tensor<Scalar> depth_to_space(const Tensor<Scalar>& in, int s) {
  if (s < 1) throw std::invalid_argument("depth_to_space: factor < 1");
  if (in.channels % (s * s) != 0)
    throw std::invalid_argument(
        "depth_to_space: channels not divisible by factor^2");
  const int groups = in.channels / (s * s);
  Tensor<Scalar> out =
      make_tensor<Scalar>(in.height * s, in.width * s, groups);
  for (int g = 0; g < groups; ++g)
    for (int r = 0; r < s; ++r)
      for (int cs = 0; cs < s; ++cs) {
        const int q = g * s * s + r * s + cs;
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x)
            out.at(g, y * s + r, x * s + cs) = in.at(q, y, x);
      }
  return out;
}

// Exact inverse of depth_to_space: (H, W, g) -> (H/s, W/s, g*s^2).
template <typename Scalar>
Tensor<Scalar> space_to_depth(const Tensor<Scalar>& in, int s) {
  if (s < 1) throw std::invalid_argument("space_to_depth: factor < 1");
  if (in.height % s != 0 || in.width % s != 0)
    throw std::invalid_argument(
        "space_to_depth: dims not divisible by factor");
  Tensor<Scalar> out = make_tensor<Scalar>(in.height / s, in.width / s,
                                           in.channels * s * s);
  for (int g = 0; g < in.channels; ++g)
    for (int r = 0; r < s; ++r)
      for (int cs = 0; cs < s; ++cs) {
        const int q = g * s * s + r * s + cs;
        for (int y = 0; y < out.height; ++y)
          for (int x = 0; x < out.width; ++x)
            out.at(q, y, x) = in.at(g, y * s + r, x * s + cs);
      }
  return out;
}

// Inverted-dropout mask: entries are 1/keep with probability keep, else 0,
// so the expected value of (activation * mask) equals the activation.
template <typename Scalar>
typename Tensor<Scalar>::Array dropout_mask(Eigen::Index n, double keep,
                                            std::uint64_t seed) {
  if (!(keep > 0.0) || keep > 1.0)
    throw std::invalid_argument("dropout_mask: keep not in (0, 1]");
  typename Tensor<Scalar>::Array mask(n);
  Rng rng(seed);
  const Scalar inv = static_cast<Scalar>(1.0 / keep);
  for (Eigen::Index i = 0; i < n; ++i)
    mask[i] = rng.uniform() < keep ? inv : Scalar(0);
  return mask;
}

// Everything backward() needs from a training-mode forward pass.
template <typename Scalar>
struct ForwardCache {
  bool valid = false;
  ModelConfig config;
  Tensor<Scalar> input;
  std::vector<Tensor<Scalar>> feat_z, feat_a, feat_o;
  std::vector<typename Tensor<Scalar>::Array> feat_mask;
  Tensor<Scalar> concat;
  Tensor<Scalar> a1_z, a1_a;
  typename Tensor<Scalar>::Array a1_mask;
  Tensor<Scalar> b1_z, b1_a, b1_o;
  typename Tensor<Scalar>::Array b1_mask;
  Tensor<Scalar> b2_z, b2_a;
  typename Tensor<Scalar>::Array b2_mask;
  Tensor<Scalar> recon_in;  // concat of dropped A and B outputs
};

// Full forward pass: feature cascade with skip concatenation, network-in-
// network reconstruction, sub-pixel shuffle, plus the bicubic residual path.
// In training mode every activator output is followed by inverted dropout
// and `cache` (if given) captures the intermediates for backward().
template <typename Scalar>
Tensor<Scalar> forward(const ModelWeights<Scalar>& w, const ModelConfig& cfg,
                       const Tensor<Scalar>& input, bool training = false,
                       std::uint64_t dropout_seed = 0,
                       ForwardCache<Scalar>* cache = nullptr) {
  if (input.channels != 1)
    throw std::invalid_argument("forward: input must be single-channel luma");
  if (w.feature.empty() || w.feature.front().in_channels != 1)
    throw std::invalid_argument("forward: weights do not start a 1-channel cascade");

  const double keep = training ? cfg.dropout_keep : 1.0;
  const size_t layer_count = w.feature.size();
  if (cache) {
    *cache = ForwardCache<Scalar>{};
    cache->config = cfg;
    cache->input = input;
  }

  // Feature-extraction cascade.
  std::vector<Tensor<Scalar>> outputs;
  outputs.reserve(layer_count);
  const Tensor<Scalar>* prev = &input;
  for (size_t l = 0; l < layer_count; ++l) {
    Tensor<Scalar> z = conv2d(*prev, w.feature[l]);
    Tensor<Scalar> a = activate(z, cfg.activator, w.feature[l].prelu);
    Tensor<Scalar> o = a;
    typename Tensor<Scalar>::Array mask;
    if (training) {
      mask = dropout_mask<Scalar>(a.data.size(), keep,
                                  derive_seed(dropout_seed, l));
      o.data = a.data * mask;
    }
    if (cache) {
      cache->feat_z.push_back(z);
      cache->feat_a.push_back(a);
      cache->feat_mask.push_back(mask);
    }
    outputs.push_back(std::move(o));
    if (cache) cache->feat_o.push_back(outputs.back());
    prev = &outputs.back();
  }

  // Skip concatenation of every cascade output.
  int cat_channels = 0;
  for (const auto& o : outputs) cat_channels += o.channels;
  Tensor<Scalar> cat =
      make_tensor<Scalar>(input.height, input.width, cat_channels);
  {
    Eigen::Index off = 0;
    for (const auto& o : outputs) {
      cat.data.segment(off, o.data.size()) = o.data;
      off += o.data.size();
    }
  }
  if (cache) cache->concat = cat;

  // Reconstruction: parallel 1x1 A path and 1x1 -> 3x3 B path.
  const auto run_branch = [&](const ConvLayer<Scalar>& layer,
                              const Tensor<Scalar>& x, std::uint64_t tag,
                              Tensor<Scalar>* cz, Tensor<Scalar>* ca,
                              typename Tensor<Scalar>::Array* cmask) {
    Tensor<Scalar> z = conv2d(x, layer);
    Tensor<Scalar> a = activate(z, cfg.activator, layer.prelu);
    Tensor<Scalar> o = a;
    typename Tensor<Scalar>::Array mask;
    if (training) {
      mask = dropout_mask<Scalar>(a.data.size(), keep,
                                  derive_seed(dropout_seed, tag));
      o.data = a.data * mask;
    }
    if (cz) *cz = std::move(z);
    if (ca) *ca = std::move(a);
    if (cmask) *cmask = std::move(mask);
    return o;
  };

  Tensor<Scalar> a_out = run_branch(w.recon_a1, cat, 1000,
                                    cache ? &cache->a1_z : nullptr,
                                    cache ? &cache->a1_a : nullptr,
                                    cache ? &cache->a1_mask : nullptr);
  Tensor<Scalar> b1_out = run_branch(w.recon_b1, cat, 1001,
                                     cache ? &cache->b1_z : nullptr,
                                     cache ? &cache->b1_a : nullptr,
                                     cache ? &cache->b1_mask : nullptr);
  if (cache) cache->b1_o = b1_out;
  Tensor<Scalar> b_out = run_branch(w.recon_b2, b1_out, 1002,
                                    cache ? &cache->b2_z : nullptr,
                                    cache ? &cache->b2_a : nullptr,
                                    cache ? &cache->b2_mask : nullptr);

  Tensor<Scalar> recon_in = make_tensor<Scalar>(
      input.height, input.width, a_out.channels + b_out.channels);
  recon_in.data.head(a_out.data.size()) = a_out.data;
  recon_in.data.tail(b_out.data.size()) = b_out.data;
  if (cache) cache->recon_in = recon_in;

  // Final 1x1 conv (no activator), sub-pixel shuffle, bicubic residual.
  Tensor<Scalar> zl = conv2d(recon_in, w.recon_l);
  Tensor<Scalar> up = depth_to_space(zl, cfg.scale);

  Tensor<Scalar> result = make_tensor<Scalar>(input.height * cfg.scale,
                                              input.width * cfg.scale, 1);
  bicubic_resize_plane(input.data.data(), input.width, input.height,
                       result.data.data(), result.width, result.height);
  result.data += up.data;

  if (cache) {
    cache->valid = training;
  }
  return result;
}

}  // namespace sdt
