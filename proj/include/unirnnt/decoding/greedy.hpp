#pragma once

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include "unirnnt/model/transducer.hpp"
#include "unirnnt/streaming/context.hpp"

namespace unirnnt {

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<std::size_t> emit_frame;  // encoder frame index per token
  double worst_case_latency_s = 0.0;    // 0 for offline decoding
  std::size_t steps = 0;                // chunk iterations (1 for offline)
  // Encoder-frame windows [begin, end) re-encoded at each streaming step.
  std::vector<std::pair<std::size_t, std::size_t>> windows;

  friend bool operator==(const DecodeResult&, const DecodeResult&) = default;
};

struct GreedyOptions {
  std::size_t max_symbols_per_frame = 10;
  int blank_id = kBlankId;
};

struct StreamingOptions {
  GreedyOptions greedy{};
  ConvRightMode conv_right_mode = ConvRightMode::real;
  // Extra encoder frames re-encoded to the left of the L window; kept
  // frames are unaffected except through their left context.
  std::size_t extra_left_margin = 0;
};

/// Greedy transducer search over frames [begin, end) of whatever `scorer`
/// has encoded. Scorer concept:
///   std::vector<T> logits(std::size_t frame, const State&)
///   State advance(const State&, int token)
/// Up to max_symbols_per_frame tokens are emitted per frame before the
/// frame is forcibly advanced; argmax ties go to the lowest id.
template <typename Scorer, typename State>
void greedy_search(Scorer& scorer, std::size_t begin, std::size_t end, std::size_t frame_offset, State& state,
                   DecodeResult& out, const GreedyOptions& opts = {}) {
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t emitted = 0; emitted < opts.max_symbols_per_frame; ++emitted) {
      const auto logits = scorer.logits(t, state);
      const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == opts.blank_id) break;
      out.tokens.push_back(best);
      out.emit_frame.push_back(t + frame_offset);
      state = scorer.advance(state, best);
    }
  }
}

/// Scorer over a model's encoder output and predictor.
template <typename T>
class ModelScorer {
 public:
  struct State {
    PredictorState<T> predictor;
    std::vector<T> projected;
  };

  explicit ModelScorer(const Transducer<T>& model) : model_(model) {}

  void set_encoder_output(const Tensor<T>& enc) { enc_proj_ = model_.project_encoder(enc); }

  State initial() const {
    State s{model_.initial_state(), {}};
    s.projected = model_.project_predictor(s.predictor);
    return s;
  }

  std::vector<T> logits(std::size_t frame, const State& s) const {
    return model_.joint_from_projections(enc_proj_.row(frame), s.projected);
  }

  State advance(const State& s, int token) const {
    State n{model_.predict(token, s.predictor), {}};
    n.projected = model_.project_predictor(n.predictor);
    return n;
  }

 private:
  const Transducer<T>& model_;
  Tensor<T> enc_proj_;
};

template <typename T>
DecodeResult greedy_decode_offline(const Transducer<T>& model, const Tensor<T>& features,
                                   const GreedyOptions& opts = {}) {
  DecodeResult out;
  ModelScorer<T> scorer(model);
  const Tensor<T> enc = model.encode(features, Mode::offline());
  scorer.set_encoder_output(enc);
  auto state = scorer.initial();
  greedy_search(scorer, 0, enc.rows(), 0, state, out, opts);
  out.steps = 1;
  out.windows.emplace_back(0, enc.rows());
  return out;
}

/// Stateful chunked decoding with step size C. Each step re-encodes the
/// window [s - L, s + C + R) from a truncated copy of the input (nothing
/// beyond the window is visible), keeps frames [s, s + C) and continues the
/// greedy search with the carried predictor state.
template <typename T>
DecodeResult greedy_decode_streaming(const Transducer<T>& model, const Tensor<T>& features, const ContextSpec& spec,
                                     double frame_ms, const StreamingOptions& opts = {}) {
  spec.validate();
  const std::size_t sub = model.config().subsample_factor;
  const std::size_t feat = model.config().feat_dim;
  const std::size_t frames = model.encoder_frames(features.rows());
  if (frames == 0) fail("InputTooShort", std::to_string(features.rows()) + " input frames");
  DecodeResult out;
  out.worst_case_latency_s = latency_of(spec, frame_ms);
  ModelScorer<T> scorer(model);
  auto state = scorer.initial();
  for (std::size_t s = 0; s < frames; s += spec.chunk) {
    const std::size_t reach = spec.left + opts.extra_left_margin;
    const std::size_t ws = s > reach ? s - reach : 0;
    const std::size_t we = std::min(frames, s + spec.chunk + spec.right);
    Tensor<T> window(Shape{(we - ws) * sub, feat},
                     std::vector<T>(features.data() + ws * sub * feat, features.data() + we * sub * feat));
    const Tensor<T> enc = model.encode(window, Mode::streaming_with(spec, opts.conv_right_mode, ws));
    scorer.set_encoder_output(enc);
    const std::size_t keep_end = std::min(frames, s + spec.chunk);
    greedy_search(scorer, s - ws, keep_end - ws, ws, state, out, opts.greedy);
    out.windows.emplace_back(ws, we);
    ++out.steps;
  }
  return out;
}

}  // namespace unirnnt
