#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sdt/degrade.hpp>
#include <sdt/iqa.hpp>
#include <sdt/rng.hpp>

#include "support/oracles.hpp"
#include "support/textgen.hpp"

namespace {

sdt::Image<double> structured_image(int w, int h, std::uint64_t seed) {
  // Text-like content rescaled into [0.3, 0.7] so additive noise up to
  // sigma = 0.1 rarely touches the clamp.
  auto page = textgen::make_page<double>(w, h, seed);
  page.data = 0.3 + 0.4 * page.data;
  return page;
}

sdt::Image<double> add_noise(const sdt::Image<double>& img, double sigma,
                             std::uint64_t seed) {
  sdt::Image<double> out = img;
  sdt::Rng rng(seed);
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    out.data[i] =
        std::min(1.0, std::max(0.0, out.data[i] + sigma * rng.gaussian()));
  }
  return out;
}

}  // namespace

TEST_CASE("psnr: identity is infinite, frozen offsets are exact") {
  auto ref = sdt::make_image<double>(16, 16, sdt::Colorspace::Luma, 0.4);
  CHECK(std::isinf(sdt::psnr(ref, ref)));

  auto test = sdt::make_image<double>(16, 16, sdt::Colorspace::Luma, 0.5);
  // |diff| = 0.1 everywhere: MSE = 0.01, PSNR = 20 dB.
  CHECK(std::abs(sdt::psnr(ref, test) - 20.0) <= 1e-9);
  // Doubling the peak value adds 20*log10(2) dB.
  CHECK(std::abs(sdt::psnr(ref, test, 2.0) - (20.0 + 6.020599913279624)) <=
        1e-9);

  auto black = sdt::make_image<double>(8, 8, sdt::Colorspace::Luma, 0.0);
  auto white = sdt::make_image<double>(8, 8, sdt::Colorspace::Luma, 1.0);
  CHECK(std::abs(sdt::psnr(black, white) - 0.0) <= 1e-12);

  auto wrong = sdt::make_image<double>(8, 9, sdt::Colorspace::Luma, 0.0);
  CHECK_THROWS_AS(sdt::psnr(black, wrong), std::invalid_argument);
}

TEST_CASE("psnr of color images is computed on luma") {
  auto ref = sdt::make_image<double>(12, 12, sdt::Colorspace::Rgb, 0.3);
  auto test = sdt::make_image<double>(12, 12, sdt::Colorspace::Rgb, 0.45);
  const double direct = sdt::psnr(ref, test);
  const double via_luma = sdt::psnr(sdt::to_luma(ref), sdt::to_luma(test));
  CHECK(direct == via_luma);
}

TEST_CASE("ssim: identity, frozen constant pair, symmetry") {
  auto img = structured_image(48, 48, 404);
  CHECK(std::abs(sdt::ssim(img, img) - 1.0) <= 1e-12);

  // Constant pair (0.5, 0.6): all variances vanish, every window evaluates to
  // (2*0.5*0.6 + 1e-4) / (0.5^2 + 0.6^2 + 1e-4) = 0.6001 / 0.6101.
  auto a = sdt::make_image<double>(16, 16, sdt::Colorspace::Luma, 0.5);
  auto b = sdt::make_image<double>(16, 16, sdt::Colorspace::Luma, 0.6);
  CHECK(std::abs(sdt::ssim(a, b) - 0.98360924438616615) <= 1e-9);

  auto noisy = add_noise(img, 0.05, 1);
  CHECK(sdt::ssim(img, noisy) == sdt::ssim(noisy, img));

  auto tiny = sdt::make_image<double>(8, 8, sdt::Colorspace::Luma, 0.5);
  CHECK_THROWS_AS(sdt::ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("ssim degrades monotonically with noise") {
  auto img = structured_image(64, 64, 405);
  const double s1 = sdt::ssim(img, add_noise(img, 0.02, 2));
  const double s2 = sdt::ssim(img, add_noise(img, 0.05, 2));
  const double s3 = sdt::ssim(img, add_noise(img, 0.10, 2));
  CAPTURE(s1);
  CAPTURE(s2);
  CAPTURE(s3);
  CHECK(s1 > s2);
  CHECK(s2 > s3);
  CHECK(s3 > 0.0);
  CHECK(s1 < 1.0);
}

TEST_CASE("scale space: constant images produce zero subbands") {
  auto img = sdt::make_image<double>(40, 40, sdt::Colorspace::Luma, 0.37);
  auto bands = sdt::scale_space(img, 4);
  REQUIRE(bands.size() == 4);
  for (const auto& band : bands) CHECK(band.abs().maxCoeff() <= 1e-12);
  // ceil-halving dimension chain: 40 -> 20 -> 10 -> 5
  CHECK(bands[0].rows() == 40);
  CHECK(bands[1].rows() == 20);
  CHECK(bands[2].rows() == 10);
  CHECK(bands[3].rows() == 5);
}

TEST_CASE("scale space matches the filter-and-subtract oracle") {
  auto img = sdt::make_image<double>(29, 33, sdt::Colorspace::Luma, 0.0);
  img.at(0, 13, 11) = 1.0;
  img.at(0, 20, 5) = 0.5;
  auto bands = sdt::scale_space(img, 4);

  Eigen::ArrayXXd current(33, 29);
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 29; ++x) current(y, x) = img.at(0, y, x);

  for (int level = 1; level <= 4; ++level) {
    const double sigma = (std::pow(2.0, 5 - level) + 1.0) / 5.0;
    auto step = oracle::scale_step_brute(current, sigma);
    CAPTURE(level);
    REQUIRE(bands[level - 1].rows() == step.subband.rows());
    REQUIRE(bands[level - 1].cols() == step.subband.cols());
    CHECK((bands[level - 1] - step.subband).abs().maxCoeff() <= 1e-12);
    current = step.next;
  }
}

TEST_CASE("scale space validates level count and image size") {
  auto img = sdt::make_image<double>(2, 2, sdt::Colorspace::Luma, 0.5);
  CHECK_NOTHROW(sdt::scale_space(img, 1));
  CHECK_THROWS_AS(sdt::scale_space(img, 4), std::invalid_argument);
  auto ok = sdt::make_image<double>(32, 32, sdt::Colorspace::Luma, 0.5);
  CHECK_THROWS_AS(sdt::scale_space(ok, 0), std::invalid_argument);
  CHECK_THROWS_AS(sdt::scale_space(ok, 5), std::invalid_argument);
  auto one = sdt::scale_space(ok, 1);
  CHECK(one.size() == 1);
  CHECK(one[0].rows() == 32);
}

TEST_CASE("vif: perfect reconstruction scores 1") {
  auto img = structured_image(64, 64, 406);
  CHECK(std::abs(sdt::vif(img, img) - 1.0) <= 1e-9);

  // Blank images carry no information; identical blanks are a perfect pair.
  auto blank = sdt::make_image<double>(32, 32, sdt::Colorspace::Luma, 0.5);
  CHECK(sdt::vif(blank, blank) == 1.0);
}

TEST_CASE("vif and ifc fall under blur and noise") {
  auto img = structured_image(64, 64, 407);
  sdt::DegradeConfig dc;
  dc.kind = sdt::BlurKind::Defocus;
  dc.radius = 2.0;
  auto blurred = sdt::convolve2d(img, sdt::make_blur_kernel(dc));

  const double vif_blur = sdt::vif(img, blurred);
  CHECK(vif_blur < 1.0);
  CHECK(vif_blur > 0.0);

  const double ifc_self = sdt::ifc(img, img);
  const double ifc_blur = sdt::ifc(img, blurred);
  CHECK(ifc_self > ifc_blur);
  CHECK(ifc_blur > 0.0);
}

TEST_CASE("all four metrics are monotonic in noise level") {
  auto img = structured_image(96, 96, 408);
  const double sigmas[] = {0.02, 0.05, 0.10};
  double prev_psnr = std::numeric_limits<double>::infinity();
  double prev_ssim = 2.0, prev_vif = 2.0, prev_ifc =
      std::numeric_limits<double>::infinity();
  for (double sigma : sigmas) {
    auto noisy = add_noise(img, sigma, 3);
    auto r = sdt::evaluate_iqa(img, noisy);
    CAPTURE(sigma);
    CHECK(r.psnr < prev_psnr);
    CHECK(r.ssim < prev_ssim);
    CHECK(r.vif < prev_vif);
    CHECK(r.ifc < prev_ifc);
    prev_psnr = r.psnr;
    prev_ssim = r.ssim;
    prev_vif = r.vif;
    prev_ifc = r.ifc;
  }
}

TEST_CASE("evaluate_iqa mirrors the individual metrics") {
  auto img = structured_image(48, 48, 409);
  auto noisy = add_noise(img, 0.05, 4);
  auto r = sdt::evaluate_iqa(img, noisy);
  CHECK(r.psnr == sdt::psnr(img, noisy));
  CHECK(r.ssim == sdt::ssim(img, noisy));
  CHECK(r.vif == sdt::vif(img, noisy));
  CHECK(r.ifc == sdt::ifc(img, noisy));
}
