#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unirnnt/lattice/joint_logits.hpp"
#include "unirnnt/model/config.hpp"
#include "unirnnt/numerics/ops.hpp"
#include "unirnnt/numerics/tape.hpp"
#include "unirnnt/streaming/context.hpp"

namespace unirnnt {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// Ordered parameter list; the order is the checkpoint blob order.
template <typename T>
using ParameterSet = std::vector<NamedTensor<T>>;

template <typename T>
using GradientSet = std::vector<Tensor<T>>;

template <typename T>
GradientSet<T> zeros_like(const ParameterSet<T>& params) {
  GradientSet<T> g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.value.shape());
  return g;
}

/// Predictor recurrent state; also the predictor output vector.
template <typename T>
struct PredictorState {
  Tensor<T> hidden;  // [1, predictor_dim]
};

/// Toy unified transducer: frame-stacking subsampler, mask-aware encoder
/// blocks (attention + depthwise conv + feedforward), a gated recurrent
/// predictor and an additive joint network.
template <typename T>
class Transducer {
 public:
  explicit Transducer(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    declare();
    initialize();
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Parameter leaves on `tape`; gradients flow into `grads` when given.
  std::vector<Var> bind(Tape<T>& tape, GradientSet<T>* grads) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      vars.push_back(tape.param(params_[i].value, grads ? &(*grads)[i] : nullptr));
    return vars;
  }

  std::size_t encoder_frames(std::size_t input_frames) const { return input_frames / cfg_.subsample_factor; }

  /// Encoder forward: [T_in, feat_dim] -> [T_in / subsample, model_dim].
  Var encode(Tape<T>& tape, const std::vector<Var>& p, const Tensor<T>& features, const Mode& mode) const {
    if (features.cols() != cfg_.feat_dim) fail("ShapeMismatch", "feature dim");
    const std::size_t frames = encoder_frames(features.rows());
    if (frames == 0) fail("InputTooShort", std::to_string(features.rows()) + " input frames");
    const std::size_t stacked = cfg_.feat_dim * cfg_.subsample_factor;
    Tensor<T> x(Shape{frames, stacked},
                std::vector<T>(features.data(), features.data() + frames * stacked));
    Var h = ops::linear(tape, tape.constant(std::move(x)), p[ix_.sub_w], p[ix_.sub_b]);

    const ops::AttentionMask mask =
        mode.streaming ? build_attention_mask(frames, mode.spec, mode.origin) : ops::AttentionMask::full(frames);
    const ops::ConvVisibility vis =
        mode.streaming
            ? plan_conv_chunks(frames, mode.spec, cfg_.conv_kernel, mode.conv_right_mode, mode.origin).visibility()
            : ops::ConvVisibility::full(frames);

    for (const BlockIndex& b : ix_.blocks) {
      Var a = ops::layer_norm(tape, h, p[b.ln1_g], p[b.ln1_b]);
      Var q = ops::linear(tape, a, p[b.wq], p[b.bq]);
      Var k = ops::linear(tape, a, p[b.wk], p[b.bk]);
      Var v = ops::linear(tape, a, p[b.wv], p[b.bv]);
      Var att = ops::masked_attention(tape, q, k, v, mask, cfg_.heads);
      h = ops::add(tape, h, ops::linear(tape, att, p[b.wo], p[b.bo]));
      Var c = ops::layer_norm(tape, h, p[b.ln2_g], p[b.ln2_b]);
      c = ops::silu(tape, ops::depthwise_conv1d(tape, c, p[b.conv], vis));
      Var f = ops::relu(tape, ops::linear(tape, c, p[b.ff_w1], p[b.ff_b1]));
      h = ops::add(tape, h, ops::linear(tape, f, p[b.ff_w2], p[b.ff_b2]));
    }
    return h;
  }

  /// One gated recurrent step of the predictor on `token`.
  Var predictor_step(Tape<T>& tape, const std::vector<Var>& p, Var hidden, int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= cfg_.vocab_size)
      fail("BadToken", std::to_string(token));
    const auto& q = ix_.pred;
    Var x = ops::gather_rows(tape, p[q.embed], {static_cast<std::size_t>(token)});
    Var z = ops::sigmoid(tape, ops::add(tape, ops::linear(tape, x, p[q.wz_x], p[q.bz]), ops::matmul(tape, hidden, p[q.wz_h])));
    Var r = ops::sigmoid(tape, ops::add(tape, ops::linear(tape, x, p[q.wr_x], p[q.br]), ops::matmul(tape, hidden, p[q.wr_h])));
    Var hn = ops::linear(tape, hidden, p[q.wn_h], p[q.bn_h]);
    Var n = ops::tanh(tape, ops::add(tape, ops::linear(tape, x, p[q.wn_x], p[q.bn_x]), ops::mul(tape, r, hn)));
    return ops::add(tape, ops::mul(tape, ops::one_minus(tape, z), n), ops::mul(tape, z, hidden));
  }

  /// Predictor outputs for label positions 0..U: row 0 is the learned start
  /// state, row u is the state after feeding tokens[0..u).
  Var predictor_states(Tape<T>& tape, const std::vector<Var>& p, std::span<const int> tokens) const {
    std::vector<Var> rows{p[ix_.pred.start]};
    Var h = p[ix_.pred.start];
    for (int y : tokens) {
      h = predictor_step(tape, p, h, y);
      rows.push_back(h);
    }
    return ops::concat_rows(tape, rows);
  }

  /// z[t * (U+1) + u, :] = W_out tanh(W_e enc[t] + W_p pred[u] + b).
  Var joint(Tape<T>& tape, const std::vector<Var>& p, Var enc, Var pred) const {
    const auto& j = ix_.joint;
    Var e = ops::matmul(tape, enc, p[j.we]);
    Var q = ops::linear(tape, pred, p[j.wp], p[j.b]);
    return ops::matmul(tape, ops::tanh(tape, ops::grid_add(tape, e, q)), p[j.wout]);
  }

  // Tape-free conveniences (a non-recording tape underneath).

  Tensor<T> encode(const Tensor<T>& features, const Mode& mode) const {
    Tape<T> tape;
    tape.set_recording(false);
    const auto p = bind(tape, nullptr);
    return tape.value(encode(tape, p, features, mode));
  }

  PredictorState<T> initial_state() const { return {params_[ix_.pred.start].value}; }

  /// Advances the predictor by one token; returns the new state (which is
  /// also the new predictor output vector).
  PredictorState<T> predict(int token, const PredictorState<T>& state) const {
    Tape<T> tape;
    tape.set_recording(false);
    const auto p = bind(tape, nullptr);
    Var h = tape.constant(state.hidden);
    return {tape.value(predictor_step(tape, p, h, token))};
  }

  /// Joint logits [1, T, U+1, V] for an encoder output and predictor rows.
  JointLogits<T> joint(const Tensor<T>& enc, const Tensor<T>& pred) const {
    Tape<T> tape;
    tape.set_recording(false);
    const auto p = bind(tape, nullptr);
    const Tensor<T>& z = tape.value(joint(tape, p, tape.constant(enc), tape.constant(pred)));
    JointLogits<T> out(1, enc.rows(), pred.rows() - 1, cfg_.vocab_size);
    out.z = z.values();
    return out;
  }

  /// enc [T, D] -> W_e enc [T, J], reused across predictor states at decode.
  Tensor<T> project_encoder(const Tensor<T>& enc) const {
    Tensor<T> out = Tensor<T>::matrix(enc.rows(), cfg_.joint_dim);
    ops::detail::gemm_nn(enc.data(), params_[ix_.joint.we].value.data(), out.data(), enc.rows(),
                         cfg_.model_dim, cfg_.joint_dim);
    return out;
  }

  /// W_p pred + b for one predictor state.
  std::vector<T> project_predictor(const PredictorState<T>& state) const {
    std::vector<T> out(params_[ix_.joint.b].value.values());
    ops::detail::gemm_nn(state.hidden.data(), params_[ix_.joint.wp].value.data(), out.data(), 1,
                         cfg_.predictor_dim, cfg_.joint_dim);
    return out;
  }

  /// Logits [V] from one projected encoder row and projected predictor state.
  std::vector<T> joint_from_projections(std::span<const T> enc_proj, std::span<const T> pred_proj) const {
    std::vector<T> hidden(cfg_.joint_dim);
    for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::tanh(enc_proj[i] + pred_proj[i]);
    std::vector<T> out(cfg_.vocab_size, T(0));
    ops::detail::gemm_nn(hidden.data(), params_[ix_.joint.wout].value.data(), out.data(), 1, cfg_.joint_dim,
                         cfg_.vocab_size);
    return out;
  }

  /// Index of a parameter by name, or npos.
  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return Var::npos;
  }

 private:
  struct BlockIndex {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, conv, ff_w1, ff_b1, ff_w2, ff_b2;
  };
  struct PredictorIndex {
    std::size_t embed, start, wz_x, wz_h, bz, wr_x, wr_h, br, wn_x, wn_h, bn_x, bn_h;
  };
  struct JointIndex {
    std::size_t we, wp, b, wout;
  };
  struct Index {
    std::size_t sub_w = 0, sub_b = 0;
    std::vector<BlockIndex> blocks;
    PredictorIndex pred{};
    JointIndex joint{};
  };

  enum class Init { xavier, zeros, ones, embedding };

  std::size_t add(std::string name, Shape shape, Init init) {
    params_.push_back({std::move(name), Tensor<T>(std::move(shape))});
    inits_.push_back(init);
    return params_.size() - 1;
  }

  void declare() {
    const std::size_t d = cfg_.model_dim, pd = cfg_.predictor_dim, jd = cfg_.joint_dim;
    ix_.sub_w = add("subsample.w", {cfg_.feat_dim * cfg_.subsample_factor, d}, Init::xavier);
    ix_.sub_b = add("subsample.b", {d}, Init::zeros);
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
      const std::string pre = "block" + std::to_string(i) + ".";
      BlockIndex b{};
      b.ln1_g = add(pre + "ln1.gain", {d}, Init::ones);
      b.ln1_b = add(pre + "ln1.bias", {d}, Init::zeros);
      b.wq = add(pre + "attn.wq", {d, d}, Init::xavier);
      b.bq = add(pre + "attn.bq", {d}, Init::zeros);
      b.wk = add(pre + "attn.wk", {d, d}, Init::xavier);
      b.bk = add(pre + "attn.bk", {d}, Init::zeros);
      b.wv = add(pre + "attn.wv", {d, d}, Init::xavier);
      b.bv = add(pre + "attn.bv", {d}, Init::zeros);
      b.wo = add(pre + "attn.wo", {d, d}, Init::xavier);
      b.bo = add(pre + "attn.bo", {d}, Init::zeros);
      b.ln2_g = add(pre + "ln2.gain", {d}, Init::ones);
      b.ln2_b = add(pre + "ln2.bias", {d}, Init::zeros);
      b.conv = add(pre + "conv.kernel", {cfg_.conv_kernel, d}, Init::xavier);
      b.ff_w1 = add(pre + "ff.w1", {d, d}, Init::xavier);
      b.ff_b1 = add(pre + "ff.b1", {d}, Init::zeros);
      b.ff_w2 = add(pre + "ff.w2", {d, d}, Init::xavier);
      b.ff_b2 = add(pre + "ff.b2", {d}, Init::zeros);
      ix_.blocks.push_back(b);
    }
    auto& q = ix_.pred;
    q.embed = add("pred.embed", {cfg_.vocab_size, pd}, Init::embedding);
    q.start = add("pred.start", {1, pd}, Init::zeros);
    q.wz_x = add("pred.wz_x", {pd, pd}, Init::xavier);
    q.wz_h = add("pred.wz_h", {pd, pd}, Init::xavier);
    q.bz = add("pred.bz", {pd}, Init::zeros);
    q.wr_x = add("pred.wr_x", {pd, pd}, Init::xavier);
    q.wr_h = add("pred.wr_h", {pd, pd}, Init::xavier);
    q.br = add("pred.br", {pd}, Init::zeros);
    q.wn_x = add("pred.wn_x", {pd, pd}, Init::xavier);
    q.wn_h = add("pred.wn_h", {pd, pd}, Init::xavier);
    q.bn_x = add("pred.bn_x", {pd}, Init::zeros);
    q.bn_h = add("pred.bn_h", {pd}, Init::zeros);
    auto& j = ix_.joint;
    j.we = add("joint.we", {d, jd}, Init::xavier);
    j.wp = add("joint.wp", {pd, jd}, Init::xavier);
    j.b = add("joint.b", {jd}, Init::zeros);
    j.wout = add("joint.wout", {jd, cfg_.vocab_size}, Init::xavier);
  }

  void initialize() {
    std::mt19937_64 rng(cfg_.seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& t = params_[i].value;
      switch (inits_[i]) {
        case Init::zeros: t.fill(T(0)); break;
        case Init::ones: t.fill(T(1)); break;
        case Init::xavier: {
          const double fan_in = double(t.dim(0)), fan_out = double(t.dim(1));
          const double a = std::sqrt(6.0 / (fan_in + fan_out));
          std::uniform_real_distribution<double> u(-a, a);
          for (auto& v : t.values()) v = static_cast<T>(u(rng));
          break;
        }
        case Init::embedding: {
          std::normal_distribution<double> n(0.0, 0.5);
          for (auto& v : t.values()) v = static_cast<T>(n(rng));
          break;
        }
      }
    }
  }

  ModelConfig cfg_;
  ParameterSet<T> params_;
  std::vector<Init> inits_;
  Index ix_;
};

}  // namespace unirnnt
