#include <gtest/gtest.h>

#include "llem/errors.hpp"
#include "llem/model_weights.hpp"
#include "llem/priors.hpp"
#include "test_util.hpp"

using namespace llem;
using llem::test::random_image;

namespace {

double total_variation(const Image& x) {
  double tv = 0.0;
  for (Index y = 0; y < x.height(); ++y)
    for (Index c = 0; c < x.width(); ++c)
      for (Index k = 0; k < x.channels(); ++k) {
        if (c + 1 < x.width()) tv += std::abs(double(x(y, c + 1, k)) - x(y, c, k));
        if (y + 1 < x.height()) tv += std::abs(double(x(y + 1, c, k)) - x(y, c, k));
      }
  return tv;
}

float max_diff(const Image& a, const Image& b) { return (a.values() - b.values()).cwiseAbs().maxCoeff(); }

UNetConfig small_unet() {
  UNetConfig c;
  c.base_channels = 4;
  c.state = 4;
  return c;
}

}  // namespace

TEST(Priors, ZeroPriorIsZero) {
  const Image x = random_image(7, 5, 3, 1);
  const Image out = eval_prior(PriorFn::zero(), x);
  EXPECT_EQ(out.shape(), x.shape());
  EXPECT_TRUE((out.array() == 0.0f).all());
}

TEST(Priors, BoxOnConstantIsZero) {
  for (Index r : {1, 2, 5}) {
    const Image out = eval_prior(PriorFn::box_residual(r), Image(6, 9, 3, 0.42f));
    EXPECT_LT(out.values().cwiseAbs().maxCoeff(), 1e-6f) << r;
  }
}

TEST(Priors, BoxBlurByHand) {
  Image x(3, 3, 1);
  for (Index i = 0; i < 9; ++i) x.data()[i] = static_cast<float>(i);
  const Image b = box_blur(x, 1);
  EXPECT_FLOAT_EQ(b(1, 1, 0), 4.0f);
  EXPECT_FLOAT_EQ(b(0, 0, 0), (0.0f + 1 + 3 + 4) / 4.0f);
  EXPECT_FLOAT_EQ(b(0, 1, 0), (0.0f + 1 + 2 + 3 + 4 + 5) / 6.0f);
}

TEST(Priors, TvWithZeroWeightIsZero) {
  const Image x = random_image(8, 8, 3, 2);
  EXPECT_TRUE((eval_prior(PriorFn::tv_residual(1, 0.0f), x).array() == 0.0f).all());
  EXPECT_TRUE((eval_prior(PriorFn::tv_residual(0, 0.1f), x).array() == 0.0f).all());
}

TEST(Priors, TvResidualShrinksToZeroWithWeight) {
  const Image x = random_image(16, 16, 3, 3);
  double prev_norm = -1.0;
  double prev_tv = std::numeric_limits<double>::infinity();
  for (float w : {0.0f, 0.05f, 0.1f}) {
    const Image res = eval_prior(PriorFn::tv_residual(5, w), x);
    const double norm = frobenius_norm(res);
    Image smoothed(x.shape());
    smoothed.values() = x.values() + res.values();
    const double tv = total_variation(smoothed);
    if (w == 0.0f) EXPECT_EQ(norm, 0.0);
    EXPECT_GE(norm, prev_norm) << w;
    EXPECT_LE(tv, prev_tv) << w;
    prev_norm = norm;
    prev_tv = tv;
  }
}

TEST(Priors, ClassicalPriorsCommuteWithFlips) {
  const Image x = random_image(9, 12, 3, 4);
  for (const PriorFn& p : {PriorFn::box_residual(1), PriorFn::box_residual(3), PriorFn::tv_residual(5, 0.1f)}) {
    EXPECT_LT(max_diff(p(flip_horizontal(x)), flip_horizontal(p(x))), 1e-6f);
    EXPECT_LT(max_diff(p(flip_vertical(x)), flip_vertical(p(x))), 1e-6f);
  }
}

TEST(Priors, ShapePreserved) {
  const auto weights = init_weights(5, small_unet());
  const PriorOptions opts;
  std::uint64_t seed = 10;
  for (auto [h, w] : {std::pair<Index, Index>{4, 6}, {8, 8}, {10, 2}}) {
    const Image x = random_image(h, w, 3, seed++), l = random_image(h, w, 3, seed++);
    for (auto kind : {PriorKind::Zero, PriorKind::BoxResidual, PriorKind::TvResidual, PriorKind::MambaBlock,
                      PriorKind::IfbmambaUnet}) {
      const PriorFn p = make_prior(kind, opts, &weights, kReflectancePrefix, small_unet());
      const Image out = p(x, &l);
      EXPECT_EQ(out.shape(), x.shape()) << to_string(kind);
      EXPECT_TRUE(all_finite(out));
    }
  }
}

TEST(Priors, MambaPriorReadsItsSlot) {
  const auto weights = init_weights(6, small_unet());
  const PriorOptions opts;
  const Image x = random_image(6, 6, 3, 7);
  const Image r = make_prior(PriorKind::MambaBlock, opts, &weights, kReflectancePrefix)(x);
  const Image l = make_prior(PriorKind::MambaBlock, opts, &weights, kIlluminationPrefix)(x);
  EXPECT_GT(max_diff(r, l), 0.0f);

  const auto cfg = mamba_prior_config();
  EXPECT_EQ(cfg.channels, 3);
  EXPECT_EQ(cfg.patch, 1);
  EXPECT_FALSE(cfg.illumination);
  const Image z = PriorFn::mamba_block(IfbmambaBlock::zeros(cfg))(x);
  EXPECT_TRUE((z.array() == 0.0f).all());
}

TEST(Priors, NetworkPriorsNeedWeights) {
  const PriorOptions opts;
  EXPECT_THROW(make_prior(PriorKind::MambaBlock, opts, nullptr, kIlluminationPrefix), MissingWeightsError);
  EXPECT_THROW(make_prior(PriorKind::IfbmambaUnet, opts, nullptr, kReflectancePrefix), MissingWeightsError);
  WeightArchive empty;
  try {
    make_prior(PriorKind::MambaBlock, opts, &empty, kIlluminationPrefix);
    FAIL();
  } catch (const MissingWeightsError& e) {
    EXPECT_NE(std::string(e.what()).find("prior_l/mamba"), std::string::npos);
  }
}

TEST(Priors, UnetPriorNeedsContext) {
  const auto cfg = small_unet();
  const auto weights = zero_weights(relight_weight_specs(cfg));
  const PriorFn p = make_prior(PriorKind::IfbmambaUnet, {}, &weights, kReflectancePrefix, cfg);
  EXPECT_TRUE(p.needs_context());
  EXPECT_THROW(p(Image(4, 4, 3)), std::invalid_argument);
}

TEST(Priors, ParseNames) {
  EXPECT_EQ(parse_prior_kind("zero"), PriorKind::Zero);
  EXPECT_EQ(parse_prior_kind("box_residual"), PriorKind::BoxResidual);
  EXPECT_EQ(parse_prior_kind("box"), PriorKind::BoxResidual);
  EXPECT_EQ(parse_prior_kind("tv_residual"), PriorKind::TvResidual);
  EXPECT_EQ(parse_prior_kind("mamba_block"), PriorKind::MambaBlock);
  EXPECT_EQ(parse_prior_kind("ifbmamba_unet"), PriorKind::IfbmambaUnet);
  EXPECT_THROW(parse_prior_kind("median"), std::invalid_argument);
  for (auto k : {PriorKind::Zero, PriorKind::BoxResidual, PriorKind::TvResidual, PriorKind::MambaBlock,
                 PriorKind::IfbmambaUnet})
    EXPECT_EQ(parse_prior_kind(to_string(k)), k);
}

TEST(Priors, InputNotMutated) {
  const Image x = random_image(8, 8, 3, 8);
  const Image copy = x;
  PriorFn::tv_residual(5, 0.1f)(x);
  PriorFn::box_residual(2)(x);
  EXPECT_TRUE(test::bit_equal(x, copy));
}
