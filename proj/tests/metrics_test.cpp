#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "llem/errors.hpp"
#include "llem/metrics.hpp"
#include "test_util.hpp"

using namespace llem;
using llem::test::random_image;

TEST(Psnr, IdenticalIsInfinite) {
  const Image x = random_image(16, 16, 3, 1);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_EQ(format_psnr(psnr(x, x)), "inf");
}

TEST(Psnr, ConstantImages) {
  EXPECT_NEAR(psnr(Image(8, 8, 3, 0.5f), Image(8, 8, 3, 0.25f)), 10.0 * std::log10(1.0 / 0.0625), 1e-9);
  EXPECT_NEAR(psnr(Image(8, 8, 3, 0.5f), Image(8, 8, 3, 0.25f)), 12.0412, 1e-4);
  EXPECT_NEAR(psnr(Image(8, 8, 3, 1.0f), Image(8, 8, 3, 0.0f)), 0.0, 1e-12);
}

TEST(Psnr, PeakScaling) {
  EXPECT_NEAR(psnr(Image(4, 4, 3, 1.0f), Image(4, 4, 3, 0.0f), 10.0), 20.0, 1e-9);
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_THROW(psnr(Image(4, 4, 3), Image(4, 5, 3)), DimensionError);
}

TEST(Psnr, DecreasesWithNoise) {
  const Image x = random_image(32, 32, 3, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Image noise(32, 32, 3);
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = n(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (float amp : {0.01f, 0.05f, 0.2f}) {
    Image y(x.shape());
    y.array() = x.array() + amp * noise.array();
    const double p = psnr(x, y);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdenticalIsOne) {
  const Image x = random_image(24, 20, 3, 4);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
}

TEST(Ssim, OppositeConstants) {
  const double c1 = 1e-4;
  EXPECT_NEAR(ssim(Image(16, 16, 3, 0.0f), Image(16, 16, 3, 1.0f)), c1 / (1.0 + c1), 1e-9);
}

TEST(Ssim, KnownConstantPair) {
  // Constant images: only the luminance term differs from one.
  const double c1 = 1e-4, a = 0.3, b = 0.6;
  const double expected = (2 * a * b + c1) / (a * a + b * b + c1);
  EXPECT_NEAR(ssim(Image(12, 12, 3, 0.3f), Image(12, 12, 3, 0.6f)), expected, 1e-6);
}

TEST(Ssim, TooSmall) {
  EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), DimensionError);
  EXPECT_NO_THROW(ssim(Image(11, 11, 3), Image(11, 11, 3)));
}

TEST(Metrics, SymmetricAndFlipInvariant) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Image x = random_image(20, 23, 3, 10 + s), y = random_image(20, 23, 3, 20 + s);
    EXPECT_EQ(psnr(x, y), psnr(y, x));
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
    EXPECT_NEAR(psnr(flip_horizontal(x), flip_horizontal(y)), psnr(x, y), 1e-9);
    EXPECT_NEAR(ssim(flip_horizontal(x), flip_horizontal(y)), ssim(x, y), 1e-9);
    EXPECT_NEAR(ssim(flip_vertical(x), flip_vertical(y)), ssim(x, y), 1e-9);
  }
}

TEST(Metrics, ReportFormats) {
  const Image x = random_image(16, 16, 3, 5);
  const MetricReport same = compare(x, x);
  EXPECT_EQ(same.to_json(), "{\"psnr\":\"inf\",\"ssim\":1.000000}");
  EXPECT_EQ(same.psnr_per_channel.size(), 3u);
  EXPECT_EQ(same.ssim_per_channel.size(), 3u);

  const MetricReport r = compare(Image(16, 16, 3, 0.5f), Image(16, 16, 3, 0.25f));
  EXPECT_NE(r.to_json().find("\"psnr\":12.04"), std::string::npos);
  EXPECT_NE(r.to_text().find("12.04"), std::string::npos);
}
