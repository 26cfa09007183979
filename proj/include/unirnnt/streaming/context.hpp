#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "unirnnt/error.hpp"
#include "unirnnt/numerics/ops.hpp"

namespace unirnnt {

/// Left context, chunk and right context in encoder frames.
struct ContextSpec {
  std::size_t left = 70;
  std::size_t chunk = 1;
  std::size_t right = 0;

  void validate() const {
    if (chunk < 1) fail("ConfigError", "chunk size must be >= 1");
  }
  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

/// Candidate values for training-time context sampling.
struct ContextSets {
  std::vector<std::size_t> left{70};
  std::vector<std::size_t> chunk{1, 2, 7, 13};
  std::vector<std::size_t> right{0, 1, 2, 3, 5, 7, 13, 26};

  void validate() const {
    if (left.empty() || chunk.empty() || right.empty()) fail("EmptyContextSet");
    for (auto c : chunk)
      if (c < 1) fail("ConfigError", "chunk candidates must be >= 1");
  }
};

enum class ConvRightMode { real, zero };

inline std::string to_string(ConvRightMode m) { return m == ConvRightMode::real ? "real" : "zero"; }
inline ConvRightMode parse_conv_right_mode(const std::string& s) {
  if (s == "real") return ConvRightMode::real;
  if (s == "zero") return ConvRightMode::zero;
  fail("ConfigError", "unknown conv right mode '" + s + "'");
}

namespace context_detail {
// Global chunk boundaries for local frame t when local frame 0 sits at
// global frame `origin`.
inline void chunk_bounds(std::size_t t, std::size_t origin, std::size_t chunk, std::size_t& start,
                         std::size_t& end) {
  const std::size_t g = t + origin;
  start = (g / chunk) * chunk;
  end = start + chunk;
}
}  // namespace context_detail

/// Chunk-limited attention mask over `frames` frames. Every frame of a chunk
/// [s, e) reads [s - L, e + R) clipped to the sequence. `origin` offsets the
/// chunk grid when the frames are a window cut from a longer sequence.
inline ops::AttentionMask build_attention_mask(std::size_t frames, const ContextSpec& spec,
                                               std::size_t origin = 0) {
  spec.validate();
  ops::AttentionMask m{frames, frames, std::vector<std::uint8_t>(frames * frames, 0)};
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t s = 0, e = 0;
    context_detail::chunk_bounds(t, origin, spec.chunk, s, e);
    const std::size_t lo_g = s >= spec.left ? s - spec.left : 0;
    const std::size_t hi_g = e + spec.right;
    const std::size_t lo = lo_g > origin ? lo_g - origin : 0;
    const std::size_t hi = std::min(frames, hi_g > origin ? hi_g - origin : 0);
    for (std::size_t j = lo; j < hi; ++j) m.allowed[t * frames + j] = 1;
  }
  return m;
}

/// Independent uniform draw from each candidate set.
template <typename Rng>
ContextSpec sample_context(const ContextSets& sets, Rng& rng) {
  sets.validate();
  auto pick = [&rng](const std::vector<std::size_t>& v) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
  };
  ContextSpec s;
  s.left = pick(sets.left);
  s.chunk = pick(sets.chunk);
  s.right = pick(sets.right);
  return s;
}

struct ConvChunkWindow {
  std::ptrdiff_t window_start = 0;  // may be negative: zero padding before frame 0
  std::ptrdiff_t window_end = 0;    // may exceed T
  std::size_t keep_start = 0;
  std::size_t keep_end = 0;
  // Frames the chunk may read at all, [s - L, e + R) clipped to [0, T).
  // Halo reads outside this range see zeros, as they would in a decode
  // window cut to the same bounds.
  std::size_t visible_start = 0;
  std::size_t visible_end = 0;
  ConvRightMode right_mode = ConvRightMode::real;
};

/// Dynamic chunk convolution layout: chunks of C frames tile [0, T); each
/// window adds a (k-1)/2 halo on both sides. With right_mode == zero the
/// right halo reads zeros instead of frames beyond the chunk; with real it
/// reads real frames up to the chunk's right-context bound.
struct ConvChunkPlan {
  std::size_t frames = 0;
  std::size_t kernel = 0;
  std::vector<ConvChunkWindow> windows;

  /// Input visibility per output frame for ops::depthwise_conv1d.
  ops::ConvVisibility visibility() const {
    ops::ConvVisibility vis;
    vis.lo.resize(frames);
    vis.hi.resize(frames);
    for (const auto& w : windows) {
      std::size_t lo = w.window_start < 0 ? 0 : static_cast<std::size_t>(w.window_start);
      std::size_t hi = std::min<std::size_t>(frames, static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, w.window_end)));
      lo = std::max(lo, w.visible_start);
      hi = std::min(hi, w.right_mode == ConvRightMode::zero ? w.keep_end : w.visible_end);
      for (std::size_t t = w.keep_start; t < w.keep_end; ++t) {
        vis.lo[t] = lo;
        vis.hi[t] = hi;
      }
    }
    return vis;
  }
};

inline ConvChunkPlan plan_conv_chunks(std::size_t frames, const ContextSpec& spec, std::size_t kernel,
                                      ConvRightMode right_mode, std::size_t origin = 0) {
  if (kernel % 2 == 0) fail("EvenKernel", "kernel size " + std::to_string(kernel));
  spec.validate();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  ConvChunkPlan plan{frames, kernel, {}};
  std::size_t t = 0;
  while (t < frames) {
    std::size_t s = 0, e = 0;
    context_detail::chunk_bounds(t, origin, spec.chunk, s, e);
    const std::size_t keep_end = std::min(frames, e - origin);
    ConvChunkWindow w;
    w.keep_start = t;
    w.keep_end = keep_end;
    w.window_start = static_cast<std::ptrdiff_t>(t) - half;
    w.window_end = static_cast<std::ptrdiff_t>(keep_end) + half;
    const std::size_t lo_g = s >= spec.left ? s - spec.left : 0;
    w.visible_start = lo_g > origin ? lo_g - origin : 0;
    w.visible_end = std::min(frames, e + spec.right > origin ? e + spec.right - origin : 0);
    w.right_mode = right_mode;
    plan.windows.push_back(w);
    t = keep_end;
  }
  return plan;
}

/// Worst-case algorithmic latency (C + R) * frame duration, in seconds.
inline double latency_of(const ContextSpec& spec, double frame_ms) {
  if (!(frame_ms > 0)) fail("ConfigError", "frame duration must be positive");
  return double(spec.chunk + spec.right) * frame_ms / 1000.0;
}

}  // namespace unirnnt
