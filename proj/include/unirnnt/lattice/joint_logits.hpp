#pragma once

#include <cstddef>
#include <vector>

#include "unirnnt/error.hpp"

namespace unirnnt {

inline constexpr int kBlankId = 0;

/// Batched joint-network logits z[B, T_max, U_max+1, V] with per-utterance
/// valid lengths. Cells outside (t_len[b], u_len[b]+1) are padding.
template <typename T>
struct JointLogits {
  std::size_t batch = 0;
  std::size_t max_frames = 0;
  std::size_t max_labels = 0;  // U_max; the lattice has U_max + 1 label positions
  std::size_t vocab = 0;
  std::vector<T> z;
  std::vector<std::size_t> t_len;
  std::vector<std::size_t> u_len;
  int blank_id = kBlankId;

  JointLogits() = default;
  JointLogits(std::size_t b, std::size_t t_max, std::size_t u_max, std::size_t v)
      : batch(b),
        max_frames(t_max),
        max_labels(u_max),
        vocab(v),
        z(b * t_max * (u_max + 1) * v, T(0)),
        t_len(b, t_max),
        u_len(b, u_max) {}

  std::size_t label_positions() const noexcept { return max_labels + 1; }
  std::size_t frame_stride() const noexcept { return label_positions() * vocab; }
  std::size_t batch_stride() const noexcept { return max_frames * frame_stride(); }

  std::size_t offset(std::size_t b, std::size_t t, std::size_t u) const noexcept {
    return b * batch_stride() + t * frame_stride() + u * vocab;
  }
  T* cell(std::size_t b, std::size_t t, std::size_t u) noexcept { return z.data() + offset(b, t, u); }
  const T* cell(std::size_t b, std::size_t t, std::size_t u) const noexcept {
    return z.data() + offset(b, t, u);
  }
  T& at(std::size_t b, std::size_t t, std::size_t u, std::size_t v) { return z[offset(b, t, u) + v]; }
  const T& at(std::size_t b, std::size_t t, std::size_t u, std::size_t v) const {
    return z[offset(b, t, u) + v];
  }

  bool same_layout(const JointLogits& o) const noexcept {
    return batch == o.batch && max_frames == o.max_frames && max_labels == o.max_labels &&
           vocab == o.vocab && t_len == o.t_len && u_len == o.u_len && blank_id == o.blank_id;
  }

  void validate() const {
    if (z.size() != batch * batch_stride()) fail("ShapeMismatch", "joint logits buffer size");
    if (t_len.size() != batch || u_len.size() != batch) fail("ShapeMismatch", "length vectors");
    for (std::size_t b = 0; b < batch; ++b) {
      if (t_len[b] > max_frames || u_len[b] > max_labels)
        fail("ShapeMismatch", "utterance " + std::to_string(b) + " lengths exceed padding");
    }
  }
};

}  // namespace unirnnt
