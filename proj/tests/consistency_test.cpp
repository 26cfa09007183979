#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "unirnnt/consistency/alloc_counter.hpp"
#include "unirnnt/consistency/mcr.hpp"
#include "unirnnt/consistency/mcr_naive.hpp"
#include "unirnnt/consistency/memory_probe.hpp"

UNIRNNT_INSTALL_ALLOCATION_COUNTER();

using namespace unirnnt;
using namespace unirnnt::testing;

namespace {

using Lattice = JointLogits<double>;

struct Pair {
  Lattice off, str;
  std::vector<std::vector<int>> y;
};

Pair random_pair(std::mt19937_64& rng, std::size_t b, std::size_t t_max, std::size_t u_max, std::size_t v) {
  Pair p{Lattice(b, t_max, u_max, v), Lattice(b, t_max, u_max, v), {}};
  std::normal_distribution<double> n(0, 2);
  for (auto& x : p.off.z) x = n(rng);
  for (auto& x : p.str.z) x = n(rng);
  for (std::size_t i = 0; i < b; ++i) {
    p.off.t_len[i] = p.str.t_len[i] = 1 + rng() % t_max;
    p.off.u_len[i] = p.str.u_len[i] = rng() % (u_max + 1);
    std::vector<int> y;
    for (std::size_t u = 0; u < p.off.u_len[i]; ++u) y.push_back(1 + int(rng() % (v - 1)));
    p.y.push_back(y);
  }
  return p;
}

Lattice cell_of(std::vector<double> probs) {
  Lattice z(1, 1, 0, probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) z.z[v] = std::log(probs[v]);
  return z;
}

MCRConfig cfg_of(TeacherDirection d, McrVariant var = McrVariant::full_joint, std::size_t tile = 64,
                 bool full_grad = false) {
  MCRConfig c;
  c.direction = d;
  c.variant = var;
  c.tile = tile;
  c.full_grad = full_grad;
  return c;
}

MCRResult<double> run(const Pair& p, const MCRConfig& c) {
  return c.variant == McrVariant::full_joint ? mcr_loss(p.off, p.str, c) : mcr_three_class(p.off, p.str, p.y, c);
}

std::vector<double> softmax(const double* z, std::size_t V) {
  double m = z[0];
  for (std::size_t v = 0; v < V; ++v) m = std::max(m, z[v]);
  std::vector<double> p(V);
  double s = 0;
  for (std::size_t v = 0; v < V; ++v) s += (p[v] = std::exp(z[v] - m));
  for (auto& x : p) x /= s;
  return p;
}

// Loss as a function of one mode's logits, the other held fixed.
LossFn loss_wrt(const Pair& p, const MCRConfig& c, bool offline_side) {
  return [p, c, offline_side](const Tensors& xs, Tensors* grads) {
    Pair q = p;
    auto& z = offline_side ? q.off.z : q.str.z;
    z.assign(xs[0].values().begin(), xs[0].values().end());
    const auto r = run(q, c);
    if (grads) {
      const auto& g = offline_side ? r.grad_offline : r.grad_streaming;
      std::copy(g.begin(), g.end(), (*grads)[0].data());
    }
    return r.loss;
  };
}

Tensors as_input(const Lattice& z) { return {Tensor<double>({z.z.size()}, z.z)}; }

const TeacherDirection kDirections[] = {TeacherDirection::offline_teacher, TeacherDirection::streaming_teacher,
                                        TeacherDirection::symmetric};

}  // namespace

TEST(Mcr, IdenticalModesGiveZero) {
  std::mt19937_64 rng(1);
  auto p = random_pair(rng, 3, 5, 3, 7);
  p.str.z = p.off.z;
  for (auto d : kDirections)
    for (auto var : {McrVariant::full_joint, McrVariant::three_class}) {
      const auto r = run(p, cfg_of(d, var));
      EXPECT_EQ(r.loss, 0.0);
      for (double g : r.grad_offline) EXPECT_EQ(g, 0.0);
      for (double g : r.grad_streaming) EXPECT_EQ(g, 0.0);
    }
}

TEST(Mcr, SymmetricSingleCellValue) {
  const auto r = mcr_loss(cell_of({0.8, 0.2}), cell_of({0.2, 0.8}), cfg_of(TeacherDirection::symmetric));
  EXPECT_NEAR(r.loss, 0.831777, 1e-6);
}

TEST(Mcr, OfflineTeacherGradientOnUniformStudent) {
  Lattice student(1, 1, 0, 2);
  const auto r = mcr_loss(cell_of({0.8, 0.2}), student, cfg_of(TeacherDirection::offline_teacher));
  EXPECT_NEAR(r.grad_streaming[0], -0.3, 1e-12);
  EXPECT_NEAR(r.grad_streaming[1], 0.3, 1e-12);
  EXPECT_EQ(r.grad_offline[0], 0.0);
  EXPECT_EQ(r.grad_offline[1], 0.0);
}

TEST(Mcr, ClosedFormGradients) {
  std::mt19937_64 rng(2);
  const auto p = random_pair(rng, 2, 4, 3, 6);
  const auto one = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::offline_teacher));
  const auto sym = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::symmetric));
  for (std::size_t b = 0; b < 2; ++b) {
    const double norm = 2.0 * double(p.off.t_len[b] * (p.off.u_len[b] + 1));
    for (std::size_t t = 0; t < p.off.t_len[b]; ++t)
      for (std::size_t u = 0; u <= p.off.u_len[b]; ++u) {
        const auto pt = softmax(p.off.cell(b, t, u), 6);
        const auto qs = softmax(p.str.cell(b, t, u), 6);
        for (std::size_t v = 0; v < 6; ++v) {
          const std::size_t k = p.off.offset(b, t, u) + v;
          EXPECT_NEAR(one.grad_streaming[k], (qs[v] - pt[v]) / norm, 1e-15);
          EXPECT_NEAR(sym.grad_streaming[k], (qs[v] - pt[v]) / (2 * norm), 1e-15);
          EXPECT_NEAR(sym.grad_offline[k], (pt[v] - qs[v]) / (2 * norm), 1e-15);
        }
      }
  }
}

TEST(Mcr, OneDirectionalGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_pair(rng, 2, 3, 2, 5);
    EXPECT_LE(grad_rel_error(as_input(p.str), loss_wrt(p, cfg_of(TeacherDirection::offline_teacher), false)), 1e-5);
    EXPECT_LE(grad_rel_error(as_input(p.off), loss_wrt(p, cfg_of(TeacherDirection::streaming_teacher), true)), 1e-5);
  }
}

TEST(Mcr, SymmetricDetachedGradientsMatchPerDirectionFiniteDifferences) {
  // With detached teachers, the streaming gradient is half the offline-teacher
  // term's derivative, and the offline gradient half the streaming-teacher one.
  std::mt19937_64 rng(4);
  const auto p = random_pair(rng, 2, 3, 2, 5);
  const auto sym = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::symmetric));
  for (bool offline_side : {false, true}) {
    const MCRConfig dir = cfg_of(offline_side ? TeacherDirection::streaming_teacher : TeacherDirection::offline_teacher);
    const LossFn half = [&](const Tensors& xs, Tensors* grads) {
      const double l = loss_wrt(p, dir, offline_side)(xs, nullptr);
      if (grads) {
        const auto& g = offline_side ? sym.grad_offline : sym.grad_streaming;
        std::copy(g.begin(), g.end(), (*grads)[0].data());
      }
      return 0.5 * l;
    };
    EXPECT_LE(grad_rel_error(as_input(offline_side ? p.off : p.str), half), 1e-5);
  }
}

TEST(Mcr, FullGradientFlagDifferentiatesBothSides) {
  std::mt19937_64 rng(5);
  for (auto var : {McrVariant::full_joint, McrVariant::three_class})
    for (auto d : kDirections) {
      const auto p = random_pair(rng, 2, 3, 2, 5);
      const MCRConfig c = cfg_of(d, var, 64, true);
      EXPECT_LE(grad_rel_error(as_input(p.off), loss_wrt(p, c, true)), 1e-5) << to_string(d) << to_string(var);
      EXPECT_LE(grad_rel_error(as_input(p.str), loss_wrt(p, c, false)), 1e-5) << to_string(d) << to_string(var);
    }
}

TEST(Mcr, SymmetricIsMeanOfTheTwoDirections) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_pair(rng, 1, 1, 0, 1 + rng() % 9 + 1);
    const double a = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::offline_teacher)).loss;
    const double b = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::streaming_teacher)).loss;
    const double s = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::symmetric)).loss;
    const auto pp = softmax(p.off.z.data(), p.off.vocab), qq = softmax(p.str.z.data(), p.off.vocab);
    double direct = 0;
    for (std::size_t v = 0; v < pp.size(); ++v) direct += 0.5 * (pp[v] - qq[v]) * (std::log(pp[v]) - std::log(qq[v]));
    EXPECT_NEAR(0.5 * (a + b), direct, 1e-12);
    EXPECT_NEAR(s, direct, 1e-12);
  }
}

TEST(Mcr, ValidCellMean) {
  Lattice off(1, 2, 1, 3), str(1, 2, 1, 3);
  for (std::size_t c = 0; c < 4; ++c) {
    off.z[c * 3 + 0] = 1.0;
    off.z[c * 3 + 2] = -0.5;
    str.z[c * 3 + 1] = 0.7;
  }
  const auto cell = mcr_loss(cell_of({std::exp(1.0), 1.0, std::exp(-0.5)}), cell_of({1.0, std::exp(0.7), 1.0}),
                             cfg_of(TeacherDirection::symmetric));
  const auto all = mcr_loss(off, str, cfg_of(TeacherDirection::symmetric));
  EXPECT_EQ(all.cells, 4u);
  EXPECT_NEAR(all.loss, cell.loss, 1e-15);
}

TEST(Mcr, MatchesNaiveOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = random_pair(rng, 2, 8, 6, 2 + rng() % 31);
    for (auto d : kDirections)
      for (bool fg : {false, true}) {
        const MCRConfig c = cfg_of(d, McrVariant::full_joint, 1 + rng() % 8, fg);
        const auto a = mcr_loss(p.off, p.str, c);
        const auto b = mcr_naive_oracle(p.off, p.str, c);
        EXPECT_NEAR(a.loss, b.loss, 1e-9);
        EXPECT_LE(max_abs_diff(a.grad_offline, b.grad_offline), 1e-9);
        EXPECT_LE(max_abs_diff(a.grad_streaming, b.grad_streaming), 1e-9);
      }
  }
}

TEST(Mcr, TileIndependence) {
  std::mt19937_64 rng(8);
  const auto p = random_pair(rng, 2, 5, 4, 29);
  for (auto d : kDirections) {
    const auto ref = mcr_loss(p.off, p.str, cfg_of(d, McrVariant::full_joint, 1));
    for (std::size_t tile : {2u, 8u, 29u, 64u}) {
      const auto r = mcr_loss(p.off, p.str, cfg_of(d, McrVariant::full_joint, tile));
      EXPECT_NEAR(r.loss, ref.loss, 1e-12);
      EXPECT_LE(max_abs_diff(r.grad_offline, ref.grad_offline), 1e-12);
      EXPECT_LE(max_abs_diff(r.grad_streaming, ref.grad_streaming), 1e-12);
    }
  }
}

TEST(Mcr, SwappingModesUnderSymmetricSwapsGradients) {
  std::mt19937_64 rng(9);
  const auto p = random_pair(rng, 2, 4, 3, 6);
  for (auto var : {McrVariant::full_joint, McrVariant::three_class}) {
    Pair s{p.str, p.off, p.y};
    const auto a = run(p, cfg_of(TeacherDirection::symmetric, var));
    const auto b = run(s, cfg_of(TeacherDirection::symmetric, var));
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.grad_offline, b.grad_streaming);
    EXPECT_EQ(a.grad_streaming, b.grad_offline);
  }
}

TEST(Mcr, NonNegativeAndPaddingInert) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_pair(rng, 2, 4, 3, 5);
    for (auto d : kDirections)
      for (auto var : {McrVariant::full_joint, McrVariant::three_class}) {
        const auto a = run(p, cfg_of(d, var));
        EXPECT_GE(a.loss, 0.0);
        Pair g = p;
        for (std::size_t b = 0; b < 2; ++b)
          for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t u = 0; u <= 3; ++u)
              if (t >= g.off.t_len[b] || u > g.off.u_len[b])
                for (std::size_t v = 0; v < 5; ++v) {
                  g.off.at(b, t, u, v) = 1e3 * double(v);
                  g.str.at(b, t, u, v) = -7.0;
                }
        const auto r = run(g, cfg_of(d, var));
        EXPECT_EQ(r.loss, a.loss);
        EXPECT_EQ(r.grad_offline, a.grad_offline);
        EXPECT_EQ(r.grad_streaming, a.grad_streaming);
      }
  }
}

TEST(Mcr, PerCellShiftInvariance) {
  std::mt19937_64 rng(11);
  auto p = random_pair(rng, 1, 4, 3, 6);
  const double before = mcr_loss(p.off, p.str, cfg_of(TeacherDirection::symmetric)).loss;
  for (std::size_t v = 0; v < 6; ++v) p.str.at(0, 0, 0, v) += 12.5;
  for (std::size_t v = 0; v < 6; ++v) p.off.at(0, 0, 0, v) -= 4.0;
  EXPECT_NEAR(mcr_loss(p.off, p.str, cfg_of(TeacherDirection::symmetric)).loss, before, 1e-9);
}

TEST(Mcr, Errors) {
  Lattice a(1, 2, 1, 3), b(1, 3, 1, 3);
  try {
    mcr_loss(a, b, MCRConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "ModeShapeMismatch");
  }
  Lattice c = a;
  c.z[1] = std::nan("");
  try {
    mcr_loss(a, c, MCRConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NonFiniteInput");
  }
  try {
    mcr_three_class(a, a, {{0}}, cfg_of(TeacherDirection::symmetric, McrVariant::three_class));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "BlankInTarget");
  }
}

// ------------------------------------------------------------ three-class

TEST(McrThreeClass, HandEvaluatedCollapsedValue) {
  // Teacher (blank .5, target .3, rest .2) vs uniform student collapsed to
  // (.25, .25, .5); the second cell (u = U) is identical in both modes.
  const double p[3] = {0.5, 0.3, 0.2}, q[3] = {0.25, 0.25, 0.5};
  double expected = 0;
  for (int k = 0; k < 3; ++k) expected += 0.5 * (p[k] - q[k]) * (std::log(p[k]) - std::log(q[k]));
  EXPECT_NEAR(expected, 0.228645, 1e-6);

  Lattice off(1, 1, 1, 4), str(1, 1, 1, 4);
  const double teacher[4] = {0.5, 0.3, 0.1, 0.1};
  for (std::size_t v = 0; v < 4; ++v) off.at(0, 0, 0, v) = std::log(teacher[v]);
  const auto r = mcr_three_class(off, str, {{1}}, cfg_of(TeacherDirection::symmetric, McrVariant::three_class));
  EXPECT_NEAR(r.loss * 2.0, expected, 1e-12);  // two valid cells
}

TEST(McrThreeClass, LastRowCollapsesToBlankAndRest) {
  Lattice off(1, 1, 0, 4), str(1, 1, 0, 4);
  const double a[4] = {0.4, 0.3, 0.2, 0.1}, b[4] = {0.1, 0.1, 0.1, 0.7};
  for (std::size_t v = 0; v < 4; ++v) {
    off.z[v] = std::log(a[v]);
    str.z[v] = std::log(b[v]);
  }
  const double p[2] = {0.4, 0.6}, q[2] = {0.1, 0.9};
  double expected = 0;
  for (int k = 0; k < 2; ++k) expected += p[k] * (std::log(p[k]) - std::log(q[k]));
  const auto r = mcr_three_class(off, str, {{}}, cfg_of(TeacherDirection::offline_teacher, McrVariant::three_class));
  EXPECT_NEAR(r.loss, expected, 1e-12);
}

TEST(McrThreeClass, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_pair(rng, 2, 3, 2, 5);
    const auto tc = [](TeacherDirection d) { return cfg_of(d, McrVariant::three_class); };
    EXPECT_LE(grad_rel_error(as_input(p.str), loss_wrt(p, tc(TeacherDirection::offline_teacher), false)), 1e-5);
    EXPECT_LE(grad_rel_error(as_input(p.off), loss_wrt(p, tc(TeacherDirection::streaming_teacher), true)), 1e-5);
    const auto one = run(p, tc(TeacherDirection::offline_teacher));
    for (double g : one.grad_offline) EXPECT_EQ(g, 0.0);
  }
}

// ---------------------------------------------------------------- memory

TEST(McrMemory, FusedPathStaysUnderFivePercentOfNaive) {
  const auto r = mcr_memory_probe<double>(ProbeShape{}, MCRConfig{}, 1);
  EXPECT_GT(r.aux_bytes_naive, 0);
  EXPECT_LE(r.ratio(), 0.05);
  EXPECT_NEAR(r.loss_fused, r.loss_naive, 1e-9);
  EXPECT_LE(r.max_grad_diff, 1e-9);
}

TEST(McrMemory, SingleSymbolVocabularyIsDegenerate) {
  const auto r = mcr_memory_probe<double>(ProbeShape{2, 8, 4, 1}, MCRConfig{}, 1);
  EXPECT_EQ(r.loss_fused, 0.0);
  EXPECT_EQ(r.loss_naive, 0.0);
  EXPECT_LE(r.aux_bytes_fused, 1024);
}

TEST(McrMemory, TileSizeChangesBytesNotResults) {
  const ProbeShape shape{2, 16, 8, 1024};
  std::vector<MemoryProbeReport> rs;
  for (std::size_t tile : {8u, 64u, 1024u}) {
    MCRConfig c;
    c.tile = tile;
    rs.push_back(mcr_memory_probe<double>(shape, c, 3));
  }
  EXPECT_NEAR(rs[0].loss_fused, rs[1].loss_fused, 1e-12);
  EXPECT_NEAR(rs[0].loss_fused, rs[2].loss_fused, 1e-12);
  EXPECT_LT(rs[0].aux_bytes_fused, rs[1].aux_bytes_fused);
  EXPECT_LT(rs[1].aux_bytes_fused, rs[2].aux_bytes_fused);
}
