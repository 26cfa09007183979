#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "support.hpp"
#include "unirnnt/model/checkpoint.hpp"
#include "unirnnt/model/transducer.hpp"
#include "unirnnt/training/loss_nodes.hpp"

using namespace unirnnt;
using namespace unirnnt::testing;

namespace {

ModelConfig tiny(std::size_t blocks = 2) {
  ModelConfig c;
  c.feat_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.blocks = blocks;
  c.conv_kernel = 3;
  c.subsample_factor = 2;
  c.vocab_size = 5;
  c.predictor_dim = 6;
  c.joint_dim = 7;
  c.seed = 3;
  return c;
}

template <typename T>
Tensor<T> features(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Tensor<T> f(Shape{frames, dim});
  for (auto& x : f.values()) x = T(n(rng));
  return f;
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) { return max_abs_diff(a.values(), b.values()); }

Tensors param_values(const Transducer<double>& m) {
  Tensors xs;
  for (const auto& p : m.params()) xs.push_back(p.value);
  return xs;
}

// Loss as a function of all parameters of a copy of `base`.
template <typename Build>
LossFn over_params(const Transducer<double>& base, Build build) {
  return [base, build](const Tensors& xs, Tensors* grads) {
    Transducer<double> m = base;
    for (std::size_t i = 0; i < xs.size(); ++i) m.params()[i].value = xs[i];
    Tape<double> tape;
    GradientSet<double> g = zeros_like(m.params());
    const auto p = m.bind(tape, grads ? &g : nullptr);
    const Var loss = build(m, tape, p);
    const double value = tape.value(loss)[0];
    if (grads) {
      tape.backward(loss);
      for (std::size_t i = 0; i < g.size(); ++i) (*grads)[i] = g[i];
    }
    return value;
  };
}

}  // namespace

TEST(Encoder, FullContextStreamingEqualsOfflineDouble) {
  const Transducer<double> m(tiny());
  const auto f = features<double>(22, 4, 1);
  const auto off = m.encode(f, Mode::offline());
  const auto str = m.encode(f, Mode::streaming_with(ContextSpec{11, 11, 11}));
  EXPECT_LE(max_diff(off, str), 1e-10);
}

TEST(Encoder, FullContextStreamingEqualsOfflineFloat) {
  const Transducer<float> m(tiny());
  const auto f = features<float>(22, 4, 1);
  const auto off = m.encode(f, Mode::offline());
  const auto str = m.encode(f, Mode::streaming_with(ContextSpec{11, 11, 11}));
  double d = 0;
  for (std::size_t i = 0; i < off.size(); ++i) d = std::max(d, double(std::abs(off[i] - str[i])));
  EXPECT_LE(d, 1e-5);
}

TEST(Encoder, ShapeContract) {
  const Transducer<double> m(tiny());
  for (std::size_t t_in : {2u, 3u, 9u, 10u}) {
    const auto out = m.encode(features<double>(t_in, 4, t_in), Mode::offline());
    EXPECT_EQ(out.rows(), t_in / 2);
    EXPECT_EQ(out.cols(), 8u);
  }
}

TEST(Encoder, DeterministicAcrossConstructions) {
  const auto f = features<double>(12, 4, 2);
  const auto a = Transducer<double>(tiny()).encode(f, Mode::streaming_with(ContextSpec{2, 2, 1}));
  const auto b = Transducer<double>(tiny()).encode(f, Mode::streaming_with(ContextSpec{2, 2, 1}));
  EXPECT_EQ(a.values().size(), b.values().size());
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Encoder, InputTooShort) {
  const Transducer<double> m(tiny());
  try {
    m.encode(features<double>(1, 4, 0), Mode::offline());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "InputTooShort");
  }
}

TEST(Encoder, BothModesReadTheSameParameterStorage) {
  const Transducer<double> m(tiny());
  Tape<double> tape;
  const auto p = m.bind(tape, nullptr);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(tape.storage(p[i]), &m.params()[i].value);
  const auto f = features<double>(8, 4, 3);
  const std::size_t before = tape.size();
  m.encode(tape, p, f, Mode::offline());
  m.encode(tape, p, f, Mode::streaming_with(ContextSpec{1, 1, 0}));
  EXPECT_GT(tape.size(), before);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(tape.storage(p[i]), &m.params()[i].value);
}

// Last encoder frame (exclusive) that can reach frame t through `blocks`
// layers. Attention reaches chunk_end + R. The conv reads up to t + k/2,
// clipped at the chunk end (zero mode) or chunk_end + R (real mode); frames
// it reads already attended into their own chunk's right context, so the
// bound compounds per block.
std::size_t reach(std::size_t t, const ContextSpec& s, std::size_t kernel, ConvRightMode mode, std::size_t blocks) {
  auto chunk_end = [&](std::size_t j) { return (j / s.chunk + 1) * s.chunk; };
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t halo = mode == ConvRightMode::real ? s.right : 0;
    const std::size_t last_conv_input = std::min(t + kernel / 2, chunk_end(t) + halo - 1);
    t = chunk_end(last_conv_input) + s.right - 1;
  }
  return t + 1;
}

void expect_causal(const ModelConfig& cfg, ContextSpec spec, ConvRightMode mode) {
  const Transducer<double> m(cfg);
  const std::size_t T = 12, sub = cfg.subsample_factor;
  const auto f = features<double>(T * sub, cfg.feat_dim, 4);
  const auto base = m.encode(f, Mode::streaming_with(spec, mode));
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t bound = reach(t, spec, cfg.conv_kernel, mode, cfg.blocks);
    if (cfg.blocks == 1 && mode == ConvRightMode::zero) {
      EXPECT_EQ(bound, (t / spec.chunk + 1) * spec.chunk + spec.right);
    }
    if (bound >= T) continue;
    auto g = f;
    for (std::size_t i = bound * sub; i < T * sub; ++i)
      for (std::size_t d = 0; d < cfg.feat_dim; ++d) g(i, d) += 3.0;
    const auto out = m.encode(g, Mode::streaming_with(spec, mode));
    for (std::size_t d = 0; d < cfg.model_dim; ++d) EXPECT_EQ(out(t, d), base(t, d)) << "frame " << t;
    EXPECT_NE(out(T - 1, 0), base(T - 1, 0));
  }
}

// The bound is tight: perturbing the last frame inside it changes frame t.
TEST(Encoder, CausalityBoundIsTight) {
  for (auto mode : {ConvRightMode::real, ConvRightMode::zero})
    for (std::size_t blocks : {1u, 2u}) {
      const auto cfg = tiny(blocks);
      const Transducer<double> m(cfg);
      const ContextSpec spec{4, 2, 1};
      const std::size_t T = 16;
      const auto f = features<double>(T * 2, cfg.feat_dim, 9);
      const auto base = m.encode(f, Mode::streaming_with(spec, mode));
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t bound = reach(t, spec, cfg.conv_kernel, mode, blocks);
        if (bound > T) continue;
        auto g = f;
        for (std::size_t d = 0; d < cfg.feat_dim; ++d) g((bound - 1) * 2, d) += 3.0;
        EXPECT_NE(m.encode(g, Mode::streaming_with(spec, mode))(t, 0), base(t, 0))
            << to_string(mode) << " blocks " << blocks << " frame " << t;
      }
    }
}

TEST(Encoder, ContextCausalityProbe) {
  expect_causal(tiny(1), ContextSpec{3, 2, 1}, ConvRightMode::real);
  expect_causal(tiny(1), ContextSpec{3, 3, 2}, ConvRightMode::zero);
  expect_causal(tiny(2), ContextSpec{4, 2, 0}, ConvRightMode::real);
  expect_causal(tiny(2), ContextSpec{4, 2, 1}, ConvRightMode::real);
  expect_causal(tiny(2), ContextSpec{4, 1, 2}, ConvRightMode::zero);
}

TEST(Predictor, PureFunctionOfTokenAndState) {
  const Transducer<double> m(tiny());
  const auto s0 = m.initial_state();
  const auto a = m.predict(3, s0), b = m.predict(3, s0);
  EXPECT_EQ(max_diff(a.hidden, b.hidden), 0.0);
  EXPECT_GT(max_diff(a.hidden, m.predict(2, s0).hidden), 0.0);
}

TEST(Predictor, StatesEqualFoldOfSingleSteps) {
  const Transducer<double> m(tiny());
  Tape<double> tape;
  const auto p = m.bind(tape, nullptr);
  const std::vector<int> y{2, 4};
  const auto& rows = tape.value(m.predictor_states(tape, p, y));
  const auto s1 = m.predict(2, m.initial_state());
  const auto s2 = m.predict(4, s1);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(rows(0, k), m.initial_state().hidden[k]);
    EXPECT_EQ(rows(1, k), s1.hidden[k]);
    EXPECT_EQ(rows(2, k), s2.hidden[k]);
  }
}

TEST(Predictor, GradientThroughThreeStepsMatchesFiniteDifferences) {
  const Transducer<double> m(tiny());
  const std::vector<int> y{1, 3, 2};
  const auto f = over_params(m, [&](const Transducer<double>& mm, Tape<double>& tape, const std::vector<Var>& p) {
    const Var rows = mm.predictor_states(tape, p, y);
    std::mt19937_64 rng(5);
    const Var w = tape.constant(random_tensor({4, 6}, rng));
    return ops::sum(tape, ops::mul(tape, rows, w));
  });
  EXPECT_LE(grad_rel_error(param_values(m), f), 1e-5);
}

TEST(Predictor, BadToken) {
  const Transducer<double> m(tiny());
  for (int bad : {-1, 5}) {
    try {
      m.predict(bad, m.initial_state());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "BadToken");
    }
  }
}

TEST(Joint, ShapeIsFramesByLabelsByVocab) {
  const Transducer<double> m(tiny());
  const auto enc = m.encode(features<double>(10, 4, 6), Mode::offline());
  Tape<double> tape;
  const auto p = m.bind(tape, nullptr);
  const auto& pred = tape.value(m.predictor_states(tape, p, std::vector<int>{1, 2}));
  const auto z = m.joint(enc, pred);
  EXPECT_EQ(z.max_frames, 5u);
  EXPECT_EQ(z.max_labels, 2u);
  EXPECT_EQ(z.vocab, 5u);
  EXPECT_EQ(z.z.size(), 5u * 3u * 5u);
}

TEST(Joint, ZeroWeightsGiveZeroLogits) {
  Transducer<double> m(tiny());
  for (auto& p : m.params())
    if (p.name.rfind("joint.", 0) == 0)
      for (auto& x : p.value.values()) x = 0;
  const auto enc = m.encode(features<double>(6, 4, 7), Mode::offline());
  const auto z = m.joint(enc, m.initial_state().hidden);
  for (double x : z.z) EXPECT_EQ(x, 0.0);
}

TEST(Joint, EndToEndGradientMatchesFiniteDifferences) {
  const Transducer<double> m(tiny(1));
  const auto f = features<double>(6, 4, 8);  // T = 3
  const std::vector<int> y{2, 1};           // U = 2
  const auto loss = over_params(m, [&](const Transducer<double>& mm, Tape<double>& tape, const std::vector<Var>& p) {
    const Var enc = mm.encode(tape, p, f, Mode::streaming_with(ContextSpec{1, 1, 1}));
    const Var z = mm.joint(tape, p, enc, mm.predictor_states(tape, p, y));
    return rnnt_loss_node(tape, z, 3, y);
  });
  EXPECT_LE(grad_rel_error(param_values(m), loss, 1e-6), 1e-4);
}

// ------------------------------------------------------------ checkpoint

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "unirnnt_model_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(CheckpointTest, BitExactRoundTripWithOptimizerState) {
  ModelConfig cfg = tiny();
  cfg.seed = 11;
  const Transducer<float> m(cfg);
  TrainingState st{42, 40, zeros_like(m.params()), zeros_like(m.params())};
  std::mt19937_64 rng(1);
  for (auto& t : st.adam_m)
    for (auto& x : t.values()) x = float(rng() % 1000) / 7.0f;
  for (auto& t : st.adam_v)
    for (auto& x : t.values()) x = float(rng() % 1000) / 3.0f;
  save_checkpoint(dir / "a.bin", m, &st);
  TrainingState back;
  const auto loaded = load_checkpoint(dir / "a.bin", &cfg, &back);
  EXPECT_EQ(loaded.config(), cfg);
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(loaded.params()[i].name, m.params()[i].name);
    EXPECT_EQ(std::memcmp(loaded.params()[i].value.data(), m.params()[i].value.data(),
                          m.params()[i].value.size() * sizeof(float)),
              0);
    EXPECT_EQ(back.adam_m[i].values(), st.adam_m[i].values());
    EXPECT_EQ(back.adam_v[i].values(), st.adam_v[i].values());
  }
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.optimizer_steps, 40u);

  save_checkpoint(dir / "b.bin", loaded, &back);
  std::ifstream a(dir / "a.bin", std::ios::binary), b(dir / "b.bin", std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b), {}));
}

TEST_F(CheckpointTest, TruncationIsCorrupt) {
  const Transducer<float> m(tiny());
  save_checkpoint(dir / "c.bin", m);
  std::filesystem::resize_file(dir / "c.bin", std::filesystem::file_size(dir / "c.bin") - 5);
  try {
    load_checkpoint(dir / "c.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "CorruptCheckpoint");
  }
}

TEST_F(CheckpointTest, ConfigMismatchIsReported) {
  const Transducer<float> m(tiny());
  save_checkpoint(dir / "d.bin", m);
  ModelConfig other = tiny();
  other.vocab_size = 7;
  try {
    load_checkpoint(dir / "d.bin", &other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "VersionMismatch");
  }
}

TEST_F(CheckpointTest, MissingFileIsAnIoError) {
  try {
    load_checkpoint(dir / "nope.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "IoError");
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig c = tiny();
  c.conv_kernel = 4;
  EXPECT_THROW(c.validate(), Error);
  c = tiny();
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = tiny();
  c.blocks = 0;
  EXPECT_THROW(c.validate(), Error);
}
