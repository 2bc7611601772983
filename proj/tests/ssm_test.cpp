#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "llem/errors.hpp"
#include "llem/parallel.hpp"
#include "llem/ssm.hpp"
#include "test_util.hpp"

using namespace llem;

namespace {

using Inputs = ScanInputs<float>;

Inputs random_inputs(Index T, Index D, Index N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_real_distribution<float> pos(0.01f, 0.5f);
  Inputs in;
  in.u.resize(T, D);
  in.delta.resize(T, D);
  in.B.resize(T, N);
  in.C.resize(T, N);
  in.A.resize(D, N);
  in.D.resize(D);
  for (Index i = 0; i < in.u.size(); ++i) in.u.data()[i] = n(rng);
  for (Index i = 0; i < in.delta.size(); ++i) in.delta.data()[i] = pos(rng);
  for (Index i = 0; i < in.B.size(); ++i) in.B.data()[i] = n(rng);
  for (Index i = 0; i < in.C.size(); ++i) in.C.data()[i] = n(rng);
  for (Index i = 0; i < in.A.size(); ++i) in.A.data()[i] = -std::exp(0.5f * n(rng));
  for (Index i = 0; i < D; ++i) in.D(i) = n(rng);
  return in;
}

MambaParams random_params(Index dim, std::uint64_t seed, float stddev = 0.2f, Index state = 8) {
  MambaConfig cfg;
  cfg.dim = dim;
  cfg.state = state;
  const auto specs = mamba_weight_specs(cfg, "m");
  return MambaParams::load(random_weights(specs, seed, stddev), "m");
}

float max_abs(const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(SelectiveScan, SingleStepByHand) {
  Inputs in = random_inputs(1, 3, 4, 1);
  const auto y = selective_scan_seq(in);
  for (Index d = 0; d < 3; ++d) {
    double expected = double(in.D(d)) * in.u(0, d);
    for (Index j = 0; j < 4; ++j) expected += double(in.C(0, j)) * in.delta(0, d) * in.B(0, j) * in.u(0, d);
    EXPECT_NEAR(y(0, d), expected, 1e-5);
  }
}

TEST(SelectiveScan, TwoStepsByHand) {
  Inputs in = random_inputs(2, 2, 3, 2);
  const auto y = selective_scan_seq(in);
  for (Index d = 0; d < 2; ++d) {
    double expected = double(in.D(d)) * in.u(1, d);
    for (Index j = 0; j < 3; ++j) {
      const double h0 = double(in.delta(0, d)) * in.B(0, j) * in.u(0, d);
      const double h1 = std::exp(double(in.delta(1, d)) * in.A(d, j)) * h0 +
                        double(in.delta(1, d)) * in.B(1, j) * in.u(1, d);
      expected += in.C(1, j) * h1;
    }
    EXPECT_NEAR(y(1, d), expected, 1e-5);
  }
}

TEST(SelectiveScan, MemorylessLimit) {
  Inputs in = random_inputs(20, 4, 5, 3);
  in.A.setConstant(-std::exp(50.0f));
  const auto y = selective_scan_seq(in);
  for (Index t = 0; t < 20; ++t)
    for (Index d = 0; d < 4; ++d) {
      double expected = double(in.D(d)) * in.u(t, d);
      for (Index j = 0; j < 5; ++j) expected += double(in.C(t, j)) * in.delta(t, d) * in.B(t, j) * in.u(t, d);
      EXPECT_NEAR(y(t, d), expected, 1e-4);
    }
}

TEST(SelectiveScan, ZeroInputZeroOutput) {
  Inputs in = random_inputs(33, 4, 4, 4);
  in.u.setZero();
  EXPECT_EQ(selective_scan_seq(in).cwiseAbs().maxCoeff(), 0.0f);
  EXPECT_EQ(selective_scan_par(in, 8).cwiseAbs().maxCoeff(), 0.0f);
}

TEST(SelectiveScan, ParallelMatchesSequential) {
  std::uint64_t seed = 10;
  for (Index T : {1, 2, 17, 64, 257})
    for (Index N : {1, 4, 16})
      for (Index chunk : {Index{1}, Index{7}, kDefaultScanChunk}) {
        const Inputs in = random_inputs(T, 8, N, seed++);
        EXPECT_LT(max_abs(selective_scan_par(in, chunk), selective_scan_seq(in)), 1e-5f)
            << "T=" << T << " N=" << N << " chunk=" << chunk;
      }
}

TEST(SelectiveScan, WholeSequenceChunkIsBitIdentical) {
  const Inputs in = random_inputs(100, 6, 4, 20);
  EXPECT_EQ(selective_scan_par(in, 100), selective_scan_seq(in));
  EXPECT_EQ(selective_scan_par(in, 1000), selective_scan_seq(in));
}

TEST(SelectiveScan, ThreadCountDoesNotChangeBits) {
  const Inputs in = random_inputs(300, 8, 4, 21);
  Inputs::Matrix one, four;
  {
    ScopedThreadCount t(1);
    one = selective_scan_par(in, 32);
  }
  {
    ScopedThreadCount t(4);
    four = selective_scan_par(in, 32);
  }
  EXPECT_EQ(one, four);
}

TEST(SelectiveScan, LongSequenceStaysBounded) {
  const Index T = 10000;
  Inputs in = random_inputs(T, 4, 4, 22);
  in.u.setConstant(1.0f);
  in.delta.setConstant(0.1f);
  in.B.setConstant(1.0f);
  in.C.setConstant(1.0f);
  in.A.setConstant(-0.5f);
  const auto y = selective_scan_par(in);
  EXPECT_TRUE(y.allFinite());
  // Steady state per state channel is dB u / (1 - exp(dA)).
  const double bound = 0.1 / (1.0 - std::exp(-0.05));
  const double h_max = (y.rowwise() - in.D.transpose()).cwiseAbs().maxCoeff() / 4.0;
  EXPECT_LE(h_max, bound * (1.0 + 1e-4));
  EXPECT_LT(max_abs(y, selective_scan_seq(in)), 1e-3f * float(bound));
}

TEST(SelectiveScan, NonFiniteInputNamesStep) {
  Inputs in = random_inputs(10, 2, 2, 23);
  in.u(6, 1) = std::numeric_limits<float>::infinity();
  try {
    selective_scan_seq(in);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 6"), std::string::npos);
  }
  EXPECT_THROW(selective_scan_par(in), NumericalError);
}

TEST(SelectiveScan, ShapeMismatch) {
  Inputs in = random_inputs(10, 2, 2, 24);
  in.B.resize(9, 2);
  EXPECT_THROW(selective_scan_seq(in), DimensionError);
}

TEST(LinearScan, OnesGivePrefixCount) {
  const std::vector<float> a(1000, 1.0f), b(1000, 1.0f);
  const auto seq = linear_scan_seq(a, b);
  const auto par = linear_scan_par(a, b, 64);
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(seq[t], float(t + 1));
    EXPECT_EQ(par[t], float(t + 1));
  }
}

TEST(LinearScan, ComposeIsAssociative) {
  const AffineStep<double> x{0.5, 1.0}, y{-2.0, 0.25}, z{3.0, -1.0};
  const auto l = compose(compose(x, y), z), r = compose(x, compose(y, z));
  EXPECT_DOUBLE_EQ(l.a, r.a);
  EXPECT_DOUBLE_EQ(l.b, r.b);
}

TEST(MambaBlock, ZeroWeightsAreIdentity) {
  MambaConfig cfg;
  cfg.dim = 12;
  const auto params = MambaParams::zeros(cfg);
  const Tokens x = test::random_tokens(9, 12, 30);
  EXPECT_EQ(mamba_block(x, params), x);
  EXPECT_EQ(mamba_block(x, params, ScanDirection::Backward), x);
  EXPECT_EQ(bidirectional_mamba(x, params, params), x);
}

TEST(MambaBlock, BackwardIsReversedForward) {
  const auto params = random_params(10, 31);
  const Tokens x = test::random_tokens(23, 10, 32);
  EXPECT_EQ(mamba_block(x, params, ScanDirection::Backward),
            reverse_rows(mamba_block(reverse_rows(x), params, ScanDirection::Forward)));
}

TEST(MambaBlock, SingleTokenBothDirectionsAgree) {
  const auto params = random_params(10, 33);
  const Tokens x = test::random_tokens(1, 10, 34);
  EXPECT_EQ(mamba_block(x, params, ScanDirection::Forward), mamba_block(x, params, ScanDirection::Backward));
}

TEST(MambaBlock, IsCausal) {
  const auto params = random_params(8, 35);
  const Tokens x = test::random_tokens(40, 8, 36);
  const Tokens y = mamba_block(x, params);
  for (Index t : {0, 13, 39}) {
    Tokens xp = x;
    xp.row(t).array() += 1.0f;
    const Tokens yp = mamba_block(xp, params);
    EXPECT_EQ(yp.topRows(t), y.topRows(t)) << t;
    EXPECT_NE(yp.row(t), y.row(t));
  }
}

TEST(MambaBlock, ChunkAndThreadIndependent) {
  const auto params = random_params(8, 37);
  const Tokens x = test::random_tokens(150, 8, 38);
  Tokens ref;
  {
    ScopedThreadCount t(1);
    ref = mamba_block(x, params);
  }
  {
    ScopedThreadCount t(3);
    EXPECT_EQ(mamba_block(x, params), ref);
  }
  EXPECT_LT((mamba_block(x, params, ScanDirection::Forward, 1000) - ref).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(MambaBlock, DimMismatch) {
  const auto params = random_params(8, 39);
  EXPECT_THROW(mamba_block(Tokens::Zero(4, 9), params), DimensionError);
  EXPECT_THROW(bidirectional_mamba(Tokens::Zero(4, 8), params, random_params(10, 40)), DimensionError);
}

TEST(Bidirectional, SwapAndReverseSymmetry) {
  const auto f = random_params(10, 41), b = random_params(10, 42);
  const Tokens x = test::random_tokens(31, 10, 43);
  const Tokens y = bidirectional_mamba(x, f, b);
  const Tokens ys = bidirectional_mamba(reverse_rows(x), b, f);
  EXPECT_LT((reverse_rows(ys) - y).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(Bidirectional, SingleTokenIsTwiceBlockMinusInput) {
  const auto f = random_params(10, 44);
  const Tokens x = test::random_tokens(1, 10, 45);
  const Tokens y = bidirectional_mamba(x, f, f);
  const Tokens expected = 2.0f * mamba_block(x, f) - x;
  EXPECT_LT((y - expected).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(MambaParams, StoreLoadRoundTrip) {
  const auto p = random_params(16, 46);
  WeightArchive a;
  p.store(a, "blk");
  const auto q = MambaParams::load(a, "blk");
  EXPECT_EQ(q.config.dim, 16);
  EXPECT_EQ(q.config.state, 8);
  EXPECT_EQ(q.config.inner(), 32);
  EXPECT_EQ(q.config.delta_rank(), 1);
  EXPECT_EQ(q.in_proj, p.in_proj);
  EXPECT_EQ(q.A_log, p.A_log);
  const Tokens x = test::random_tokens(5, 16, 47);
  EXPECT_EQ(mamba_block(x, q), mamba_block(x, p));
}

TEST(MambaParams, DefaultsAndNames) {
  const MambaConfig cfg;
  EXPECT_EQ(cfg.dim, 48);
  EXPECT_EQ(cfg.state, 16);
  EXPECT_EQ(cfg.expand, 2);
  EXPECT_EQ(cfg.conv_width, 4);
  EXPECT_EQ(cfg.delta_rank(), 3);
  const auto specs = mamba_weight_specs(cfg, "p");
  ASSERT_EQ(specs.size(), 10u);
  EXPECT_EQ(specs[1].name, "p.in_proj.w");
  EXPECT_EQ(specs[1].dims, (std::vector<std::uint32_t>{192, 48}));
}

TEST(MambaParams, MissingTensorIsNamed) {
  WeightArchive a;
  random_params(8, 48).store(a, "blk");
  WeightArchive partial;
  for (const auto& n : a.names())
    if (n != "blk.x_proj.w") partial.add(n, a.at(n).dims, a.at(n).data);
  try {
    MambaParams::load(partial, "blk");
    FAIL();
  } catch (const MissingWeightsError& e) {
    EXPECT_NE(std::string(e.what()).find("blk.x_proj.w"), std::string::npos);
  }
}
