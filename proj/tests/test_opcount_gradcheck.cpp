#include <chrono>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "mastaf/gradcheck.hpp"
#include "mastaf/opcount.hpp"

using namespace mastaf;

namespace {

ModelConfig toy_model() {
  auto g = GradcheckConfig::small();
  return g.model;
}

}  // namespace

TEST(OpCount, ClosedFormMatchesInstrumentedRun) {
  std::size_t checked = 0;
  for (const CubeDims& d : {CubeDims{8, 2, 2, 2}, CubeDims{4, 3, 2, 2}, CubeDims{3, 1, 3, 2}}) {
    for (int v = 0; v < 4; ++v) {
      for (bool head : {false, true}) {
        for (bool pool : {true, false}) {
          auto cfg = testing_helpers::cube_model(d, 4, 7);
          cfg.variant = static_cast<Variant>(v);
          cfg.fusion.global_pool = pool;
          cfg.attention.meta_learner = (checked % 3) != 0;
          cfg.share_cross_directions = (checked % 2) == 0;
          for (const EpisodeSpec spec : {EpisodeSpec{2, 1, 1}, EpisodeSpec{5, 3, 2}}) {
            const auto closed = count_ops(cfg, spec, head);
            const auto measured = instrumented_ops(cfg, spec, head, 11);
            EXPECT_TRUE(closed.same_counts(measured))
                << variant_name(cfg.variant) << " " << d.shape().to_string() << " head=" << head;
            EXPECT_EQ(closed.total(), measured.total());
            ++checked;
          }
        }
      }
    }
  }
  EXPECT_EQ(checked, 96u);
}

TEST(OpCount, ToyEmbedderCountsMatch) {
  const auto cfg = toy_model();
  const EpisodeSpec spec{3, 2, 1};
  const auto closed = count_ops(cfg, spec, true);
  EXPECT_TRUE(closed.same_counts(instrumented_ops(cfg, spec, true, 3)));
  EXPECT_EQ(closed.embed, 7 * cfg.embedder.macs_per_sample() + 3 * 2 * cfg.cube().numel());
}

TEST(OpCount, LinearInWaysAndShots) {
  const auto cfg = testing_helpers::cube_model(CubeDims{8, 2, 2, 2});
  for (bool head : {false, true}) {
    std::vector<std::uint64_t> by_ways, by_shots;
    for (std::size_t c = 2; c <= 8; ++c) by_ways.push_back(count_ops(cfg, {c, 1, 1}, head).total());
    for (std::size_t k = 1; k <= 7; ++k) by_shots.push_back(count_ops(cfg, {5, k, 1}, head).total());
    for (const auto& series : {by_ways, by_shots}) {
      const auto step = series[1] - series[0];
      EXPECT_GT(step, 0u);
      for (std::size_t i = 1; i < series.size(); ++i) EXPECT_EQ(series[i] - series[i - 1], step);
    }
  }
}

TEST(OpCount, GrowthInFramesFollowsTheAttentionPolynomial) {
  // Attention is quadratic in L = T' H' W'; nothing grows with pairs of frames
  // beyond that.
  const EpisodeSpec spec{5, 1, 1};
  std::uint64_t prev = 0;
  for (std::size_t t = 2; t <= 4; ++t) {
    const CubeDims d{8, t, 2, 2};
    const auto cfg = testing_helpers::cube_model(d);
    const auto r = count_ops(cfg, spec, false);
    const std::uint64_t L = d.positions(), C = 8, l = 6, N = d.numel();
    const std::uint64_t attn = C * L * L + 2 * L * L + 2 * L * l + C * L;
    EXPECT_EQ(r.attention_per_cube, attn);
    EXPECT_EQ(r.total(), 5 * N + 6 * attn + 10 * attn + 2 * 5 * 3 * N + 5);
    EXPECT_GT(r.total(), prev);
    prev = r.total();
  }
}

TEST(OpCount, InvalidSpecIsRejected) {
  const auto cfg = testing_helpers::cube_model(CubeDims{8, 2, 2, 2});
  EXPECT_THROW(count_ops(cfg, EpisodeSpec{0, 1, 1}, false), ConfigError);
  EXPECT_THROW(count_ops(cfg, EpisodeSpec{5, 0, 1}, false), ConfigError);
}

TEST(Gradcheck, DefaultConfigPassesForEveryParameterGroup) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = gradcheck(GradcheckConfig::small(), 42);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_TRUE(r.passed) << r.worst_param << " " << r.worst_rel_error;
  EXPECT_LT(r.worst_rel_error, 1e-4);
  EXPECT_LT(secs, 30.0);
  for (const char* prefix : {"embedder.", "self.", "cross.", "global."}) {
    bool found = false;
    for (const auto& p : r.params) {
      if (p.name.rfind(prefix, 0) == 0) {
        found = true;
        EXPECT_GT(p.max_abs_analytic, 0.0) << p.name;
      }
    }
    EXPECT_TRUE(found) << prefix;
  }
}

TEST(Gradcheck, PassesAcrossSeedsAndToggles) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto g = GradcheckConfig::small();
    g.model.share_cross_directions = seed % 2 == 0;
    g.model.fusion.global_pool = seed % 3 != 0;
    g.model.attention.tau = seed % 2 ? 0.025 : 1.0;
    const auto r = gradcheck(g, seed);
    EXPECT_TRUE(r.passed) << "seed " << seed << " " << r.worst_param << " " << r.worst_rel_error;
  }
}

TEST(Gradcheck, DetectsCorruptedBackwardRules) {
  for (const char* op : {"softmax", "row_mean", "broadcast_mul", "matmul_tn", "conv3d",
                         "avg_pool3d", "cosine_distance", "cross_entropy", "relu"}) {
    auto g = GradcheckConfig::small();
    g.corrupt_op = op;
    g.corrupt_factor = 1.5;
    EXPECT_FALSE(gradcheck(g, 42).passed) << op;
  }
}

TEST(Gradcheck, RelativeErrorUsesFloor) {
  EXPECT_NEAR(relative_error(1.0, 1.1, 1e-7), 0.1 / 1.1, 1e-15);
  EXPECT_NEAR(relative_error(0.0, 1e-9, 1e-7), 1e-2, 1e-15);
}
