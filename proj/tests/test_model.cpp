#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sdt/model.hpp>
#include <sdt/resample.hpp>
#include <sdt/rng.hpp>
#include <sdt/tensor.hpp>
#include <vector>

#include "support/oracles.hpp"

namespace {

template <typename Scalar>
sdt::Tensor<Scalar> random_tensor(int h, int w, int c, std::uint64_t seed,
                                  Scalar lo = Scalar(-1), Scalar hi = Scalar(1)) {
  sdt::Tensor<Scalar> t = sdt::make_tensor<Scalar>(h, w, c);
  sdt::Rng rng(seed);
  for (Eigen::Index i = 0; i < t.data.size(); ++i)
    t.data[i] = static_cast<Scalar>(rng.uniform(double(lo), double(hi)));
  return t;
}

template <typename Scalar>
void randomize_layer(sdt::ConvLayer<Scalar>& l, sdt::Rng& rng) {
  for (Eigen::Index i = 0; i < l.kernel.size(); ++i)
    l.kernel[i] = static_cast<Scalar>(rng.uniform(-0.5, 0.5));
  for (Eigen::Index i = 0; i < l.bias.size(); ++i)
    l.bias[i] = static_cast<Scalar>(rng.uniform(-0.2, 0.2));
  for (Eigen::Index i = 0; i < l.prelu.size(); ++i)
    l.prelu[i] = static_cast<Scalar>(rng.uniform(0.0, 0.5));
}

double max_abs_diff(const sdt::Tensor<double>& a, const sdt::Tensor<double>& b) {
  REQUIRE(a.height == b.height);
  REQUIRE(a.width == b.width);
  REQUIRE(a.channels == b.channels);
  return (a.data - b.data).abs().maxCoeff();
}

}  // namespace

TEST_CASE("filter schedule reproduces the published layer widths") {
  using V = std::vector<int>;
  CHECK(sdt::filter_schedule(96, 32, 7, 1.5) ==
        V{96, 76, 65, 55, 47, 39, 32});
  CHECK(sdt::filter_schedule(196, 32, 8, 1.2) ==
        V{196, 163, 138, 115, 93, 72, 51, 32});
  CHECK(sdt::filter_schedule(19, 7, 8, 1.2) == V{19, 16, 14, 13, 11, 9, 8, 7});
  CHECK(sdt::filter_schedule(128, 3, 8, 1.2) ==
        V{128, 103, 83, 66, 49, 33, 18, 3});
}

TEST_CASE("filter schedule properties and validation") {
  auto s = sdt::filter_schedule(70, 5, 11, 0.8);
  CHECK(s.front() == 70);
  CHECK(s.back() == 5);
  for (size_t i = 1; i < s.size(); ++i) CHECK(s[i] <= s[i - 1]);
  // first == last degenerates to a constant schedule
  CHECK(sdt::filter_schedule(16, 16, 3, 1.2) == std::vector<int>{16, 16, 16});
  CHECK_THROWS_AS(sdt::filter_schedule(32, 64, 4, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(sdt::filter_schedule(32, 0, 4, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(sdt::filter_schedule(32, 8, 1, 1.2), std::invalid_argument);
  CHECK_THROWS_AS(sdt::filter_schedule(32, 8, 4, 0.0), std::invalid_argument);
}

TEST_CASE("default model geometry") {
  sdt::ModelConfig cfg;
  CHECK(cfg.filters() ==
        std::vector<int>{196, 163, 138, 115, 93, 72, 51, 32});
  CHECK(cfg.concat_channels() == 860);

  auto w = sdt::zero_model<float>(cfg);
  REQUIRE(w.feature.size() == 8);
  CHECK(w.feature[0].in_channels == 1);
  CHECK(w.feature[0].out_channels == 196);
  CHECK(w.feature[7].out_channels == 32);
  for (const auto& l : w.feature) {
    CHECK(l.kh == 3);
    CHECK(l.kw == 3);
  }
  CHECK(w.recon_a1.in_channels == 860);
  CHECK(w.recon_a1.out_channels == 64);
  CHECK(w.recon_a1.kh == 1);
  CHECK(w.recon_b1.out_channels == 32);
  CHECK(w.recon_b2.in_channels == 32);
  CHECK(w.recon_b2.out_channels == 32);
  CHECK(w.recon_b2.kh == 3);
  CHECK(w.recon_l.in_channels == 64 + 32);
  CHECK(w.recon_l.out_channels == 4);  // scale^2 sub-pixel channels
  CHECK(w.recon_l.prelu.size() == 0);  // last layer has no activator

  sdt::ModelConfig cfg4 = cfg;
  cfg4.scale = 4;
  CHECK(sdt::zero_model<float>(cfg4).recon_l.out_channels == 16);
}

TEST_CASE("explicit feature_filters override the generated schedule") {
  sdt::ModelConfig cfg;
  cfg.feature_filters = {64, 48, 38, 32};
  CHECK(cfg.filters() == std::vector<int>{64, 48, 38, 32});
  CHECK(cfg.concat_channels() == 182);
  auto w = sdt::zero_model<float>(cfg);
  CHECK(w.feature.size() == 4);
  CHECK(w.recon_a1.in_channels == 182);
}

TEST_CASE("model config validation") {
  sdt::ModelConfig cfg;
  cfg.scale = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dropout_keep = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dropout_keep = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.feature_layers = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.recon_b1 = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("activator names roundtrip") {
  for (auto a : {sdt::Activator::ReLU, sdt::Activator::LeakyReLU,
                 sdt::Activator::PReLU, sdt::Activator::Sigmoid,
                 sdt::Activator::Tanh, sdt::Activator::SELU}) {
    CHECK(sdt::activator_from_string(sdt::to_string(a)) == a);
  }
  CHECK_THROWS_AS(sdt::activator_from_string("swish"), std::invalid_argument);
}

TEST_CASE("he initialisation: zero biases, zero slopes, right variance") {
  sdt::ModelConfig cfg;
  cfg.feature_filters = {48, 48, 32};
  auto w = sdt::init_model<double>(cfg, 2024);
  auto w2 = sdt::init_model<double>(cfg, 2024);
  auto w3 = sdt::init_model<double>(cfg, 2025);

  bool deterministic = true;
  w.for_each_layer([&](const std::string& name, sdt::ConvLayer<double>& l) {
    CHECK((l.bias == 0.0).all());
    if (l.prelu.size()) CHECK((l.prelu == 0.0).all());
    // fan-in variance: kernels with many entries should be close to 2/fan_in
    if (l.kernel.size() >= 10000) {
      const double var = (l.kernel - l.kernel.mean()).square().mean();
      const double want = 2.0 / static_cast<double>(l.patch_size());
      CAPTURE(name);
      CHECK(std::abs(var - want) <= 0.1 * want);
    }
  });
  w.for_each_layer([&](const std::string& name, sdt::ConvLayer<double>& l) {
    sdt::ConvLayer<double>* other = nullptr;
    w2.for_each_layer([&](const std::string& n2, sdt::ConvLayer<double>& l2) {
      if (n2 == name) other = &l2;
    });
    REQUIRE(other != nullptr);
    deterministic = deterministic && (l.kernel == other->kernel).all();
  });
  CHECK(deterministic);
  CHECK_FALSE((w.feature[0].kernel == w3.feature[0].kernel).all());
}

TEST_CASE("1x1 identity convolution is bit-exact") {
  auto x = random_tensor<double>(9, 7, 1, 3);
  auto layer = sdt::make_conv_layer<double>(1, 1, 1, 1, false);
  layer.kernel[0] = 1.0;
  auto y = sdt::conv2d(x, layer);
  CHECK((y.data == x.data).all());
}

TEST_CASE("1x1 all-ones convolution sums channels") {
  auto x = random_tensor<double>(6, 8, 5, 4);
  auto layer = sdt::make_conv_layer<double>(1, 1, 5, 1, false);
  layer.kernel.setConstant(1.0);
  layer.bias[0] = 0.25;
  auto y = sdt::conv2d(x, layer);
  for (int yy = 0; yy < 6; ++yy)
    for (int xx = 0; xx < 8; ++xx) {
      double want = 0.25;
      for (int c = 0; c < 5; ++c) want += x.at(c, yy, xx);
      CHECK(std::abs(y.at(0, yy, xx) - want) <= 1e-12);
    }
}

TEST_CASE("conv2d matches the brute-force oracle on random shapes") {
  sdt::Rng meta(777);
  for (int trial = 0; trial < 25; ++trial) {
    const int h = 1 + static_cast<int>(meta.bounded(9));
    const int w = 1 + static_cast<int>(meta.bounded(9));
    const int cin = 1 + static_cast<int>(meta.bounded(5));
    const int cout = 1 + static_cast<int>(meta.bounded(5));
    const int k = meta.bounded(2) ? 3 : 1;
    auto x = random_tensor<double>(h, w, cin, 1000 + trial);
    auto layer = sdt::make_conv_layer<double>(k, k, cin, cout, false);
    sdt::Rng rng(2000 + trial);
    randomize_layer(layer, rng);
    auto got = sdt::conv2d(x, layer);
    auto want = oracle::conv2d_brute(x, layer);
    CAPTURE(trial);
    CAPTURE(h);
    CAPTURE(w);
    CAPTURE(cin);
    CAPTURE(cout);
    CAPTURE(k);
    CHECK(max_abs_diff(got, want) <= 1e-9);
  }
}

TEST_CASE("conv2d rejects mismatched channel counts") {
  auto x = random_tensor<float>(4, 4, 3, 5);
  auto layer = sdt::make_conv_layer<float>(3, 3, 2, 4, false);
  CHECK_THROWS_AS(sdt::conv2d(x, layer), std::invalid_argument);
}

TEST_CASE("activation functions match their definitions") {
  auto z = sdt::make_tensor<double>(1, 6, 1);
  z.data << -4.0, -1.0, -0.3, 0.0, 0.7, 2.5;
  Eigen::ArrayXd slope(1);
  slope << 0.25;
  Eigen::ArrayXd empty;

  auto prelu = sdt::activate(z, sdt::Activator::PReLU, slope);
  CHECK(prelu.data[0] == -1.0);  // 0.25 * -4
  CHECK(prelu.data[3] == 0.0);
  CHECK(prelu.data[5] == 2.5);

  Eigen::ArrayXd zero_slope(1);
  zero_slope << 0.0;
  auto relu_like = sdt::activate(z, sdt::Activator::PReLU, zero_slope);
  auto relu = sdt::activate(z, sdt::Activator::ReLU, empty);
  CHECK((relu_like.data == relu.data).all());
  CHECK(relu.data[0] == 0.0);
  CHECK(relu.data[5] == 2.5);

  auto leaky = sdt::activate(z, sdt::Activator::LeakyReLU, empty);
  CHECK(std::abs(leaky.data[1] - (-0.01)) <= 1e-15);
  CHECK(leaky.data[4] == 0.7);

  auto sig = sdt::activate(z, sdt::Activator::Sigmoid, empty);
  CHECK(sig.data[3] == 0.5);
  CHECK(std::abs(sig.data[2] - (1.0 - 0.574442516811659)) <= 1e-12);

  auto th = sdt::activate(z, sdt::Activator::Tanh, empty);
  CHECK(std::abs(th.data[4] - 0.6043677771171636) <= 1e-12);

  auto selu = sdt::activate(z, sdt::Activator::SELU, empty);
  CHECK(std::abs(selu.data[1] - (-1.1113307378125625)) <= 1e-12);
  CHECK(std::abs(selu.data[5] - 2.626752468388701) <= 1e-12);
}

TEST_CASE("prelu slopes are per channel") {
  auto z = sdt::make_tensor<double>(1, 2, 2);
  z.data << -1.0, 1.0, -1.0, 1.0;  // channel 0 then channel 1
  Eigen::ArrayXd slope(2);
  slope << 0.1, 0.5;
  auto a = sdt::activate(z, sdt::Activator::PReLU, slope);
  CHECK(std::abs(a.at(0, 0, 0) - (-0.1)) <= 1e-15);
  CHECK(std::abs(a.at(1, 0, 0) - (-0.5)) <= 1e-15);
  Eigen::ArrayXd bad(1);
  bad << 0.1;
  CHECK_THROWS_AS(sdt::activate(z, sdt::Activator::PReLU, bad),
                  std::invalid_argument);
}

TEST_CASE("depth_to_space follows the sub-pixel convention") {
  auto t = sdt::make_tensor<double>(1, 1, 4);
  t.data << 1.0, 2.0, 3.0, 4.0;
  auto out = sdt::depth_to_space(t, 2);
  REQUIRE(out.height == 2);
  REQUIRE(out.width == 2);
  REQUIRE(out.channels == 1);
  CHECK(out.at(0, 0, 0) == 1.0);  // channel (y%2)*2 + (x%2)
  CHECK(out.at(0, 0, 1) == 2.0);
  CHECK(out.at(0, 1, 0) == 3.0);
  CHECK(out.at(0, 1, 1) == 4.0);
}

TEST_CASE("depth_to_space matches oracle and inverts exactly") {
  auto t = random_tensor<double>(5, 3, 8, 91);
  auto got = sdt::depth_to_space(t, 2);
  auto want = oracle::depth_to_space_brute(t, 2);
  CHECK(max_abs_diff(got, want) == 0.0);
  auto back = sdt::space_to_depth(got, 2);
  CHECK((back.data == t.data).all());

  auto t4 = random_tensor<double>(2, 4, 16, 92);
  auto got4 = sdt::depth_to_space(t4, 4);
  CHECK(max_abs_diff(got4, oracle::depth_to_space_brute(t4, 4)) == 0.0);
  CHECK((sdt::space_to_depth(got4, 4).data == t4.data).all());
}

TEST_CASE("sub-pixel shuffles validate their inputs") {
  auto t = random_tensor<float>(3, 3, 6, 1);
  CHECK_THROWS_AS(sdt::depth_to_space(t, 2), std::invalid_argument);
  CHECK_THROWS_AS(sdt::depth_to_space(t, 0), std::invalid_argument);
  auto s = random_tensor<float>(3, 3, 1, 2);
  CHECK_THROWS_AS(sdt::space_to_depth(s, 2), std::invalid_argument);
}

TEST_CASE("zero model output equals the bicubic upsample exactly") {
  sdt::ModelConfig cfg;
  cfg.scale = 2;
  cfg.feature_filters = {4, 3};
  cfg.recon_a1 = 8;
  cfg.recon_b1 = 4;
  cfg.recon_b2 = 4;
  auto w = sdt::zero_model<double>(cfg);
  auto x = random_tensor<double>(6, 9, 1, 31, 0.0, 1.0);
  auto y = sdt::forward(w, cfg, x);

  sdt::Image<double> img = sdt::luma_from_tensor(x);
  auto up = sdt::bicubic_resize(img, 9 * cfg.scale, 6 * cfg.scale);
  CHECK((y.data == up.data).all());
}

TEST_CASE("forward output shape follows the scale factor") {
  for (int scale : {2, 4}) {
    sdt::ModelConfig cfg;
    cfg.scale = scale;
    cfg.feature_filters = {6, 4};
    cfg.recon_a1 = 8;
    cfg.recon_b1 = 4;
    cfg.recon_b2 = 4;
    auto w = sdt::init_model<float>(cfg, 7);
    auto x = random_tensor<float>(5, 7, 1, 8, 0.0f, 1.0f);
    auto y = sdt::forward(w, cfg, x);
    CHECK(y.height == 5 * scale);
    CHECK(y.width == 7 * scale);
    CHECK(y.channels == 1);
    CHECK(sdt::all_finite(y));
  }
}

TEST_CASE("forward matches the straight-line oracle") {
  sdt::ModelConfig cfg;
  cfg.scale = 2;
  cfg.feature_filters = {4, 3};
  cfg.recon_a1 = 8;
  cfg.recon_b1 = 4;
  cfg.recon_b2 = 4;
  auto w = sdt::init_model<double>(cfg, 555);
  // give slopes signal so the negative branch is exercised
  w.for_each_layer([](const std::string&, sdt::ConvLayer<double>& l) {
    if (l.prelu.size()) l.prelu.setConstant(0.2);
  });
  auto x = random_tensor<double>(6, 5, 1, 556, 0.0, 1.0);

  sdt::Image<double> img = sdt::luma_from_tensor(x);
  auto up_img = sdt::bicubic_resize(img, 5 * 2, 6 * 2);
  sdt::Tensor<double> up = sdt::tensor_from_luma(up_img);

  auto got = sdt::forward(w, cfg, x);
  auto want = oracle::forward_brute(w, cfg, x, up);
  CHECK(max_abs_diff(got, want) <= 1e-9);
}

TEST_CASE("inference is deterministic; training dropout is seeded") {
  sdt::ModelConfig cfg;
  cfg.feature_filters = {5, 4};
  cfg.recon_a1 = 6;
  cfg.recon_b1 = 4;
  cfg.recon_b2 = 4;
  cfg.dropout_keep = 0.5;
  auto w = sdt::init_model<float>(cfg, 10);
  auto x = random_tensor<float>(8, 8, 1, 11, 0.0f, 1.0f);

  auto a = sdt::forward(w, cfg, x);
  auto b = sdt::forward(w, cfg, x);
  CHECK((a.data == b.data).all());

  auto t1 = sdt::forward(w, cfg, x, true, 42);
  auto t2 = sdt::forward(w, cfg, x, true, 42);
  auto t3 = sdt::forward(w, cfg, x, true, 43);
  CHECK((t1.data == t2.data).all());
  CHECK_FALSE((t1.data == t3.data).all());
  CHECK_FALSE((t1.data == a.data).all());  // dropout actually does something
}

TEST_CASE("dropout mask is inverted, seeded and calibrated") {
  const double keep = 0.8;
  auto m1 = sdt::dropout_mask<double>(10000, keep, 7);
  auto m2 = sdt::dropout_mask<double>(10000, keep, 7);
  auto m3 = sdt::dropout_mask<double>(10000, keep, 8);
  CHECK((m1 == m2).all());
  CHECK_FALSE((m1 == m3).all());
  const double inv = 1.0 / keep;
  for (Eigen::Index i = 0; i < m1.size(); ++i)
    CHECK((m1[i] == 0.0 || m1[i] == inv));
  CHECK(std::abs(m1.mean() - 1.0) <= 0.03);  // E[mask] == 1 (inverted dropout)
  auto all_on = sdt::dropout_mask<double>(100, 1.0, 9);
  CHECK((all_on == 1.0).all());
}

TEST_CASE("forward cache is only valid in training mode") {
  sdt::ModelConfig cfg;
  cfg.feature_filters = {3, 2};
  cfg.recon_a1 = 4;
  cfg.recon_b1 = 2;
  cfg.recon_b2 = 2;
  auto w = sdt::init_model<float>(cfg, 1);
  auto x = random_tensor<float>(4, 4, 1, 2, 0.0f, 1.0f);
  sdt::ForwardCache<float> cache;
  sdt::forward(w, cfg, x, false, 0, &cache);
  CHECK_FALSE(cache.valid);
  sdt::forward(w, cfg, x, true, 0, &cache);
  CHECK(cache.valid);
  CHECK(cache.feat_z.size() == 2);
}
