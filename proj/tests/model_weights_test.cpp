#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "llem/admm.hpp"
#include "llem/model_weights.hpp"
#include "llem/parallel.hpp"

using namespace llem;

TEST(Parallel, CoversRangeOnce) {
  for (std::size_t threads : {1, 3, 8}) {
    ScopedThreadCount scope(threads);
    EXPECT_EQ(thread_count(), threads);
    std::vector<std::atomic<int>> hits(1001);
    parallel_for(0, hits.size(), [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, PropagatesExceptions) {
  ScopedThreadCount scope(4);
  EXPECT_THROW(parallel_for(0, 100,
                            [](std::size_t i) {
                              if (i == 57) throw std::runtime_error("bad index");
                            }),
               std::runtime_error);
}

TEST(Parallel, ScopeRestores) {
  const std::size_t before = thread_count();
  {
    ScopedThreadCount scope(before + 2);
    EXPECT_EQ(thread_count(), before + 2);
  }
  EXPECT_EQ(thread_count(), before);
}

TEST(ModelWeights, CanonicalNames) {
  const auto specs = canonical_weight_specs();
  std::set<std::string> names;
  for (const auto& s : specs) EXPECT_TRUE(names.insert(s.name).second) << s.name;
  for (const char* n : {"init/conv0.w", "init/conv3.b", "relight/enc0/conv.w", "relight/enc0/ifbm.proj.w",
                        "relight/enc0/ifbm.illum_proj.w", "relight/down/conv.w", "relight/enc1/ifbm.fwd.A_log",
                        "relight/up/deconv.w", "relight/up/deconv.b", "relight/dec0/ifbm.bwd.out_proj.w",
                        "relight/out/conv.b", "prior_r/mamba.fwd.in_proj.w", "prior_l/mamba.bwd.D"})
    EXPECT_TRUE(names.count(n)) << n;

  for (const auto& s : specs)
    if (s.name == "relight/up/deconv.w") EXPECT_EQ(s.dims, (std::vector<std::uint32_t>{32, 16, 2, 2}));
}

TEST(ModelWeights, SeedDeterministic) {
  EXPECT_EQ(init_weights(3).serialize(), init_weights(3).serialize());
  EXPECT_NE(init_weights(3).serialize(), init_weights(4).serialize());
}

TEST(ModelWeights, ArchiveDrivesEveryComponent) {
  UNetConfig u;
  u.base_channels = 4;
  u.state = 4;
  const auto w = init_weights(5, u);
  EXPECT_EQ(infer_unet_config(w).base_channels, 4);
  SolverConfig c;
  c.unet = u;
  c.prior_r = PriorKind::IfbmambaUnet;
  c.prior_l = PriorKind::MambaBlock;
  c.init = InitMode::Learned;
  const auto res = run_unfolding(Image(8, 8, 3, 0.2f), c, &w);
  EXPECT_EQ(res.output.shape(), (Shape{8, 8, 3}));
  EXPECT_TRUE(all_finite(res.output));
}
