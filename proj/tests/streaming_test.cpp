#include <gtest/gtest.h>

#include <random>
#include <map>
#include <set>

#include "support.hpp"
#include "unirnnt/streaming/context.hpp"

using namespace unirnnt;
using namespace unirnnt::testing;

namespace {

std::set<std::size_t> row(const ops::AttentionMask& m, std::size_t i) {
  std::set<std::size_t> r;
  for (std::size_t j = 0; j < m.cols; ++j)
    if (m(i, j)) r.insert(j);
  return r;
}

std::vector<double> conv(const std::vector<double>& x, const std::vector<double>& k, const ops::ConvVisibility& vis) {
  Tape<double> tape;
  const Var xv = tape.constant(Tensor<double>({x.size(), 1}, x));
  const Var kv = tape.constant(Tensor<double>({k.size(), 1}, k));
  const auto& y = tape.value(ops::depthwise_conv1d(tape, xv, kv, vis));
  return {y.values().begin(), y.values().end()};
}

}  // namespace

TEST(AttentionMask, ChunkWindowsFollowTheChunkStart) {
  const auto m = build_attention_mask(6, ContextSpec{2, 2, 1});
  EXPECT_EQ(row(m, 3), (std::set<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(row(m, 0), (std::set<std::size_t>{0, 1, 2}));
  EXPECT_EQ(row(m, 1), row(m, 0));
  EXPECT_EQ(row(m, 5), (std::set<std::size_t>{2, 3, 4, 5}));
}

TEST(AttentionMask, LargeContextIsFull) {
  const auto m = build_attention_mask(9, ContextSpec{9, 9, 9});
  EXPECT_EQ(m.allowed, ops::AttentionMask::full(9).allowed);
}

TEST(AttentionMask, ZeroContextUnitChunkIsIdentity) {
  const auto m = build_attention_mask(7, ContextSpec{0, 1, 0});
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(m(i, j), i == j);
}

TEST(AttentionMask, MonotoneInEveryDimensionAndNeverEmpty) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 20;
    const ContextSpec s{rng() % 6, 1 + rng() % 6, rng() % 6};
    const auto base = build_attention_mask(T, s);
    for (std::size_t i = 0; i < T; ++i) {
      EXPECT_TRUE(base(i, i));
    }
    for (int dim = 0; dim < 3; ++dim) {
      ContextSpec bigger = s;
      (dim == 0 ? bigger.left : dim == 1 ? bigger.chunk : bigger.right) += 1 + rng() % 3;
      const auto m = build_attention_mask(T, bigger);
      // Growing the chunk moves chunk boundaries, so compare with the
      // coarser grid only when it nests the finer one.
      if (dim == 1 && bigger.chunk % s.chunk != 0) continue;
      for (std::size_t k = 0; k < T * T; ++k)
        if (base.allowed[k]) EXPECT_TRUE(m.allowed[k]) << "T=" << T << " dim=" << dim;
    }
  }
}

TEST(ContextSampling, SingletonSets) {
  std::mt19937_64 rng(2);
  const ContextSets sets{{70}, {13}, {13}};
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_context(sets, rng), (ContextSpec{70, 13, 13}));
}

TEST(ContextSampling, DeterministicUnderSeed) {
  std::mt19937_64 a(3), b(3);
  const ContextSets sets;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_context(sets, a), sample_context(sets, b));
}

TEST(ContextSampling, DefaultChunkSetIsUniform) {
  std::mt19937_64 rng(4);
  const ContextSets sets;
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 10000; ++i) ++counts[sample_context(sets, rng).chunk];
  ASSERT_EQ(counts.size(), 4u);
  for (std::size_t c : {1u, 2u, 7u, 13u}) EXPECT_NEAR(counts[c], 2500, 200) << c;
}

TEST(ContextSampling, EmptySetIsAnError) {
  std::mt19937_64 rng(5);
  try {
    sample_context(ContextSets{{70}, {}, {0}}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EmptyContextSet");
  }
}

TEST(ConvPlan, WindowsAndKeeps) {
  const auto plan = plan_conv_chunks(6, ContextSpec{70, 2, 0}, 3, ConvRightMode::real);
  ASSERT_EQ(plan.windows.size(), 3u);
  const std::ptrdiff_t ws[3][2] = {{-1, 3}, {1, 5}, {3, 7}};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(plan.windows[i].window_start, ws[i][0]);
    EXPECT_EQ(plan.windows[i].window_end, ws[i][1]);
    EXPECT_EQ(plan.windows[i].keep_start, 2 * i);
    EXPECT_EQ(plan.windows[i].keep_end, 2 * i + 2);
  }
}

TEST(ConvPlan, SingleChunkRealModeEqualsOfflineExactly) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor({11, 4}, rng);
  const auto k = random_tensor({5, 4}, rng);
  Tape<double> tape;
  const Var xv = tape.constant(x), kv = tape.constant(k);
  const auto& off = tape.value(ops::depthwise_conv1d(tape, xv, kv));
  const auto plan = plan_conv_chunks(11, ContextSpec{0, 11, 0}, 5, ConvRightMode::real);
  const auto& str = tape.value(ops::depthwise_conv1d(tape, xv, kv, plan.visibility()));
  EXPECT_EQ(max_abs_diff(off.values(), str.values()), 0.0);
}

TEST(ConvPlan, ZeroRightModeOnlyChangesChunkFinalFrames) {
  const std::vector<double> x{1, 2, 3, 4}, k{1, 1, 1};
  const auto offline = conv(x, k, ops::ConvVisibility::full(4));
  const auto zero = conv(x, k, plan_conv_chunks(4, ContextSpec{70, 2, 0}, 3, ConvRightMode::zero).visibility());
  EXPECT_EQ(offline, (std::vector<double>{3, 6, 9, 7}));
  // Frame 1 loses frame 2 from its halo; frame 3 is also chunk-final but
  // its right neighbour is already padding.
  EXPECT_EQ(zero, (std::vector<double>{3, 3, 9, 7}));
}

TEST(ConvPlan, KeepsTileTheSequence) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + rng() % 40, k = 1 + 2 * (rng() % 5);
    const auto plan = plan_conv_chunks(T, ContextSpec{rng() % 5, 1 + rng() % 9, rng() % 5}, k,
                                       rng() % 2 ? ConvRightMode::real : ConvRightMode::zero);
    std::size_t next = 0;
    for (const auto& w : plan.windows) {
      EXPECT_EQ(w.keep_start, next);
      EXPECT_GT(w.keep_end, w.keep_start);
      EXPECT_EQ(std::ptrdiff_t(w.keep_start) - w.window_start, std::ptrdiff_t(k / 2));
      EXPECT_EQ(w.window_end - std::ptrdiff_t(w.keep_end), std::ptrdiff_t(k / 2));
      next = w.keep_end;
    }
    EXPECT_EQ(next, T);
  }
}

TEST(ConvPlan, HaloNeverReadsPastTheRightContext) {
  const auto vis = plan_conv_chunks(10, ContextSpec{70, 2, 1}, 9, ConvRightMode::real).visibility();
  for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(vis.hi[t], std::min<std::size_t>(10, (t / 2 + 1) * 2 + 1));
}

TEST(ConvPlan, EvenKernelIsAnError) {
  try {
    plan_conv_chunks(6, ContextSpec{}, 4, ConvRightMode::real);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EvenKernel");
  }
}

TEST(Latency, ChunkPlusRightTimesFrame) {
  EXPECT_NEAR(latency_of(ContextSpec{70, 1, 4}, 80), 0.40, 1e-12);
  EXPECT_NEAR(latency_of(ContextSpec{70, 13, 13}, 80), 2.08, 1e-12);
  EXPECT_NEAR(latency_of(ContextSpec{70, 1, 0}, 80), 0.08, 1e-12);
}
