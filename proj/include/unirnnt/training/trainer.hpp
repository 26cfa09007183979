#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "unirnnt/corpus/corpus.hpp"
#include "unirnnt/model/checkpoint.hpp"
#include "unirnnt/model/transducer.hpp"
#include "unirnnt/numerics/parallel.hpp"
#include "unirnnt/streaming/context.hpp"
#include "unirnnt/training/loss_nodes.hpp"
#include "unirnnt/training/optimizer.hpp"
#include "unirnnt/training/schedule.hpp"

namespace unirnnt {

/// offline / streaming are the single-mode baselines with p_off fixed to
/// 1 / 0; single_mode samples a mode per step; dual_mode runs both.
enum class Strategy { offline, streaming, single_mode, dual_mode };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::offline: return "offline";
    case Strategy::streaming: return "streaming";
    case Strategy::single_mode: return "single_mode";
    case Strategy::dual_mode: return "dual_mode";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "offline") return Strategy::offline;
  if (s == "streaming") return Strategy::streaming;
  if (s == "single_mode" || s == "sm") return Strategy::single_mode;
  if (s == "dual_mode" || s == "dm" || s == "dm_mcr") return Strategy::dual_mode;
  fail("ConfigError", "unknown strategy '" + s + "'");
}

struct ModeWeights {
  double alpha = 0.5;  // offline weight in the dual-mode objective
  double p_off = 0.5;  // offline probability in single-mode training

  void validate() const {
    if (!(alpha >= 0 && alpha <= 1)) fail("ConfigError", "alpha must be in [0,1]");
    if (!(p_off >= 0 && p_off <= 1)) fail("ConfigError", "p_off must be in [0,1]");
  }
};

struct TrainConfig {
  Strategy strategy = Strategy::dual_mode;
  ModeWeights mode_weights{};
  MCRConfig mcr{};
  ContextSets context_sets{};
  ConvRightMode conv_right_mode = ConvRightMode::real;
  LrSchedule schedule{};
  AdamWConfig optimizer{};
  std::size_t batch_size = 8;
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    mode_weights.validate();
    mcr.validate();
    context_sets.validate();
    if (schedule.warmup_steps > schedule.steps) fail("ConfigError", "warmup_steps > steps");
    if (!(schedule.max_lr > 0)) fail("ConfigError", "max_lr must be > 0");
    if (batch_size == 0) fail("ConfigError", "batch_size must be >= 1");
  }
};

struct StepReport {
  std::size_t step = 0;
  double lr = 0;
  std::string mode;  // "offline", "streaming" or "dual"
  ContextSpec spec{};
  double loss = 0;  // total objective (batch mean)
  double loss_off = 0;
  double loss_str = 0;
  double loss_mcr = 0;
  double grad_norm = 0;
  double wall_ms = 0;
};

/// What a step will do, fixed by (seed, step) alone.
struct StepPlan {
  bool offline = true;  // single-mode draw
  ContextSpec spec{};   // streaming spec (single-mode streaming or dual)
  std::vector<std::size_t> batch;  // corpus indices
};

template <typename T>
class Trainer {
 public:
  Trainer(Transducer<T>& model, TrainConfig cfg)
      : model_(model), cfg_(std::move(cfg)), opt_(model.params(), cfg_.optimizer) {
    cfg_.validate();
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  std::size_t step_count() const noexcept { return step_; }
  AdamW<T>& optimizer() noexcept { return opt_; }
  void set_step_count(std::size_t s) noexcept { step_ = s; }

  double effective_p_off() const {
    switch (cfg_.strategy) {
      case Strategy::offline: return 1.0;
      case Strategy::streaming: return 0.0;
      default: return cfg_.mode_weights.p_off;
    }
  }

  /// Deterministic plan for 1-based `step`: mode draw, context draw and
  /// batch indices from an rng seeded by (seed, step).
  StepPlan plan(std::size_t step, std::size_t corpus_size) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    std::mt19937_64 rng(seq);
    StepPlan p;
    std::bernoulli_distribution off(effective_p_off());
    p.offline = off(rng);
    p.spec = sample_context(cfg_.context_sets, rng);
    if (corpus_size > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, corpus_size - 1);
      for (std::size_t i = 0; i < cfg_.batch_size; ++i) p.batch.push_back(pick(rng));
    }
    return p;
  }

  /// One optimizer step on a batch drawn from `corpus`.
  StepReport step(const std::vector<Utterance>& corpus) {
    const StepPlan p = plan(step_ + 1, corpus.size());
    std::vector<const Utterance*> batch;
    for (auto i : p.batch) batch.push_back(&corpus[i]);
    try {
      if (cfg_.strategy == Strategy::dual_mode) return train_step_dm(batch, p.spec);
      return train_step_sm(batch, p.offline, p.spec);
    } catch (const Error& e) {
      // Non-finite activations surface inside the loss kernels; report them
      // against the step that produced them.
      if (e.code() == "NonFiniteInput") fail("NonFiniteLoss", "step " + std::to_string(step_ + 1) + ": " + e.what());
      throw;
    }
  }

  /// Single-mode step: one forward/backward of the transducer loss in the
  /// given mode, then one update.
  StepReport train_step_sm(std::span<const Utterance* const> batch, bool offline, const ContextSpec& spec) {
    if (batch.empty()) fail("EmptyBatch");
    const auto t0 = std::chrono::steady_clock::now();
    const Mode mode = offline ? Mode::offline() : Mode::streaming_with(spec, cfg_.conv_right_mode);
    const T inv_b = T(1) / T(batch.size());
    std::vector<UttOut> outs(batch.size());
    parallel_for(batch.size(), cfg_.threads, [&](std::size_t i) {
      UttOut& o = outs[i];
      o.grads = zeros_like(model_.params());
      Tape<T> tape;
      const auto p = model_.bind(tape, &o.grads);
      const Utterance& u = *batch[i];
      const Tensor<T> feats = u.features.template cast<T>();
      Var enc = model_.encode(tape, p, feats, mode);
      Var pred = model_.predictor_states(tape, p, u.tokens);
      Var z = model_.joint(tape, p, enc, pred);
      Var loss = rnnt_loss_node(tape, z, tape.value(enc).rows(), u.tokens);
      o.loss = tape.value(loss)[0];
      tape.backward(loss, inv_b);
    });
    StepReport r = finish(outs, t0);
    r.mode = offline ? "offline" : "streaming";
    r.spec = spec;
    for (const auto& o : outs) (offline ? r.loss_off : r.loss_str) += double(o.loss) / double(batch.size());
    r.loss = offline ? r.loss_off : r.loss_str;
    return r;
  }

  /// Dual-mode step: offline and streaming forwards of the same batch,
  /// total = α·L_off + (1-α)·L_str + λ·L_MCR, one backward and one update.
  StepReport train_step_dm(std::span<const Utterance* const> batch, const ContextSpec& spec) {
    if (batch.empty()) fail("EmptyBatch");
    const auto t0 = std::chrono::steady_clock::now();
    const T inv_b = T(1) / T(batch.size());
    const T alpha = T(cfg_.mode_weights.alpha);
    const T lambda = T(cfg_.mcr.lambda);
    std::vector<UttOut> outs(batch.size());
    parallel_for(batch.size(), cfg_.threads, [&](std::size_t i) {
      UttOut& o = outs[i];
      o.grads = zeros_like(model_.params());
      Tape<T> tape;
      const auto p = model_.bind(tape, &o.grads);
      const Utterance& u = *batch[i];
      const Tensor<T> feats = u.features.template cast<T>();
      Var pred = model_.predictor_states(tape, p, u.tokens);
      Var enc_off = model_.encode(tape, p, feats, Mode::offline());
      Var enc_str = model_.encode(tape, p, feats, Mode::streaming_with(spec, cfg_.conv_right_mode));
      const std::size_t frames = tape.value(enc_off).rows();
      Var z_off = model_.joint(tape, p, enc_off, pred);
      Var z_str = model_.joint(tape, p, enc_str, pred);
      Var l_off = rnnt_loss_node(tape, z_off, frames, u.tokens);
      Var l_str = rnnt_loss_node(tape, z_str, frames, u.tokens);
      std::vector<Var> terms{l_off, l_str};
      std::vector<T> weights{alpha, T(1) - alpha};
      if (lambda > T(0)) {
        Var l_mcr = mcr_node(tape, z_off, z_str, frames, u.tokens, cfg_.mcr);
        o.loss_mcr = tape.value(l_mcr)[0];
        terms.push_back(l_mcr);
        weights.push_back(lambda);
      }
      Var total = ops::weighted_sum(tape, terms, weights);
      o.loss_off = tape.value(l_off)[0];
      o.loss_str = tape.value(l_str)[0];
      o.loss = tape.value(total)[0];
      tape.backward(total, inv_b);
    });
    StepReport r = finish(outs, t0);
    r.mode = "dual";
    r.spec = spec;
    for (const auto& o : outs) {
      r.loss_off += double(o.loss_off) / double(batch.size());
      r.loss_str += double(o.loss_str) / double(batch.size());
      r.loss_mcr += double(o.loss_mcr) / double(batch.size());
    }
    return r;
  }

 private:
  struct UttOut {
    GradientSet<T> grads;
    T loss = 0, loss_off = 0, loss_str = 0, loss_mcr = 0;
  };

  // Reduces per-utterance gradients in batch order, clips, updates.
  StepReport finish(std::vector<UttOut>& outs, std::chrono::steady_clock::time_point t0) {
    GradientSet<T> total = std::move(outs.front().grads);
    for (std::size_t i = 1; i < outs.size(); ++i)
      for (std::size_t k = 0; k < total.size(); ++k) {
        T* dst = total[k].data();
        const T* src = outs[i].grads[k].data();
        for (std::size_t j = 0; j < total[k].size(); ++j) dst[j] += src[j];
      }
    StepReport r;
    double mean = 0;
    for (const auto& o : outs) mean += double(o.loss) / double(outs.size());
    r.loss = mean;
    if (!std::isfinite(mean)) fail("NonFiniteLoss", "step " + std::to_string(step_ + 1));
    ++step_;
    r.step = step_;
    r.grad_norm = clip_global_norm(total, cfg_.grad_clip);
    r.lr = cosine_lr(step_, cfg_.schedule);
    opt_.step(model_.params(), total, r.lr);
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  Transducer<T>& model_;
  TrainConfig cfg_;
  AdamW<T> opt_;
  std::size_t step_ = 0;
};

}  // namespace unirnnt
