#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "unirnnt/lattice/joint_logits.hpp"
#include "unirnnt/lattice/rnnt_loss.hpp"
#include "unirnnt/numerics/log_softmax.hpp"

namespace unirnnt {

/// Which mode's distribution acts as the (detached) KL target.
enum class TeacherDirection { offline_teacher, streaming_teacher, symmetric };
enum class McrVariant { full_joint, three_class };

inline std::string to_string(TeacherDirection d) {
  switch (d) {
    case TeacherDirection::offline_teacher: return "offline_teacher";
    case TeacherDirection::streaming_teacher: return "streaming_teacher";
    case TeacherDirection::symmetric: return "symmetric";
  }
  return "?";
}

inline TeacherDirection parse_direction(const std::string& s) {
  if (s == "offline_teacher" || s == "offline") return TeacherDirection::offline_teacher;
  if (s == "streaming_teacher" || s == "streaming") return TeacherDirection::streaming_teacher;
  if (s == "symmetric") return TeacherDirection::symmetric;
  fail("ConfigError", "unknown teacher direction '" + s + "'");
}

inline std::string to_string(McrVariant v) {
  return v == McrVariant::full_joint ? "full_joint" : "three_class";
}

inline McrVariant parse_variant(const std::string& s) {
  if (s == "full_joint") return McrVariant::full_joint;
  if (s == "three_class") return McrVariant::three_class;
  fail("ConfigError", "unknown MCR variant '" + s + "'");
}

struct MCRConfig {
  TeacherDirection direction = TeacherDirection::symmetric;
  double lambda = 0.3;
  McrVariant variant = McrVariant::full_joint;
  std::size_t tile = 64;
  // Differentiate through the teacher distribution(s) instead of detaching.
  bool full_grad = false;

  void validate() const {
    if (!(lambda >= 0.0)) fail("ConfigError", "MCR lambda must be >= 0");
    if (tile == 0) fail("ConfigError", "MCR tile must be >= 1");
  }
};

template <typename T>
struct MCRResult {
  T loss = 0;
  std::vector<T> grad_offline;
  std::vector<T> grad_streaming;
  std::size_t cells = 0;
};

namespace mcr_detail {

/// Scratch for one cell pair: two tiles of exp values.
template <typename T>
struct TileScratch {
  explicit TileScratch(std::size_t tile) : off(tile), str(tile) {}
  std::vector<T> off;
  std::vector<T> str;
};

template <typename T>
void check_finite(const T* z, std::size_t vocab) {
  for (std::size_t v = 0; v < vocab; ++v)
    if (!std::isfinite(z[v])) fail("NonFiniteInput", "MCR logits");
}

template <typename T>
T tiled_lse(const T* z, std::size_t vocab, std::size_t tile, std::span<T> scratch) {
  return logsumexp_tiled<T>(std::span<const T>(z, vocab), tile, scratch);
}

/// Per-cell divergence pieces, accumulated tile by tile.
template <typename T>
struct CellStats {
  T lse_off = 0;
  T lse_str = 0;
  T kl_off_str = 0;  // KL(p_off || p_str)
  T kl_str_off = 0;  // KL(p_str || p_off)
};

template <typename T>
CellStats<T> full_joint_stats(const T* zo, const T* zs, std::size_t vocab, std::size_t tile,
                              TileScratch<T>& s) {
  check_finite(zo, vocab);
  check_finite(zs, vocab);
  CellStats<T> c;
  c.lse_off = tiled_lse<T>(zo, vocab, tile, s.off);
  c.lse_str = tiled_lse<T>(zs, vocab, tile, s.str);
  for (std::size_t start = 0; start < vocab; start += tile) {
    const std::size_t n = std::min(tile, vocab - start);
    for (std::size_t i = 0; i < n; ++i) {
      s.off[i] = zo[start + i] - c.lse_off;
      s.str[i] = zs[start + i] - c.lse_str;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = s.off[i] - s.str[i];
      c.kl_off_str += std::exp(s.off[i]) * diff;
      c.kl_str_off -= std::exp(s.str[i]) * diff;
    }
  }
  return c;
}

template <typename T>
T direction_loss(TeacherDirection d, T kl_off_str, T kl_str_off) {
  switch (d) {
    case TeacherDirection::offline_teacher: return kl_off_str;
    case TeacherDirection::streaming_teacher: return kl_str_off;
    case TeacherDirection::symmetric: return T(0.5) * (kl_off_str + kl_str_off);
  }
  return 0;
}

/// Writes scale * d(cell loss)/dz for both modes, recomputing the softmaxes
/// from raw logits tile by tile.
template <typename T>
void full_joint_backward(const T* zo, const T* zs, std::size_t vocab, const MCRConfig& cfg, T scale,
                         T* go, T* gs, TileScratch<T>& s) {
  const CellStats<T> c = full_joint_stats(zo, zs, vocab, cfg.tile, s);
  const bool teacher_grad = cfg.full_grad;
  for (std::size_t start = 0; start < vocab; start += cfg.tile) {
    const std::size_t n = std::min(cfg.tile, vocab - start);
    for (std::size_t i = 0; i < n; ++i) {
      s.off[i] = zo[start + i] - c.lse_off;
      s.str[i] = zs[start + i] - c.lse_str;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t v = start + i;
      const T lp = s.off[i], lq = s.str[i];
      const T p = std::exp(lp), q = std::exp(lq);
      T d_off = 0, d_str = 0;
      switch (cfg.direction) {
        case TeacherDirection::offline_teacher:
          d_str = q - p;
          if (teacher_grad) d_off = p * (lp - lq - c.kl_off_str);
          break;
        case TeacherDirection::streaming_teacher:
          d_off = p - q;
          if (teacher_grad) d_str = q * (lq - lp - c.kl_str_off);
          break;
        case TeacherDirection::symmetric:
          d_str = T(0.5) * (q - p);
          d_off = T(0.5) * (p - q);
          if (teacher_grad) {
            d_off += T(0.5) * p * (lp - lq - c.kl_off_str);
            d_str += T(0.5) * q * (lq - lp - c.kl_str_off);
          }
          break;
      }
      if (go) go[v] += scale * d_off;
      if (gs) gs[v] += scale * d_str;
    }
  }
}

// Class index for the collapsed {blank, next target, rest} distribution.
inline int collapse_class(std::size_t v, int blank_id, int target) {
  if (static_cast<int>(v) == blank_id) return 0;
  if (target >= 0 && static_cast<int>(v) == target) return 1;
  return 2;
}

template <typename T>
struct CollapsedCell {
  T lse_all = 0;
  T log_class[3] = {0, 0, 0};
  bool present[3] = {true, true, true};
};

template <typename T>
CollapsedCell<T> collapse(const T* z, std::size_t vocab, int blank_id, int target) {
  check_finite(z, vocab);
  constexpr T ninf = -std::numeric_limits<T>::infinity();
  OnlineLogSumExp<T> all, rest;
  for (std::size_t v = 0; v < vocab; ++v) {
    all.merge(z[v], T(1));
    if (collapse_class(v, blank_id, target) == 2) rest.merge(z[v], T(1));
  }
  CollapsedCell<T> c;
  c.lse_all = all.value();
  c.log_class[0] = z[blank_id] - c.lse_all;
  c.present[1] = target >= 0;
  c.log_class[1] = target >= 0 ? z[target] - c.lse_all : ninf;
  c.present[2] = rest.max != ninf;
  c.log_class[2] = c.present[2] ? rest.value() - c.lse_all : ninf;
  return c;
}

template <typename T>
T collapsed_kl(const CollapsedCell<T>& a, const CollapsedCell<T>& b) {
  T kl = 0;
  for (int k = 0; k < 3; ++k)
    if (a.present[k]) kl += std::exp(a.log_class[k]) * (a.log_class[k] - b.log_class[k]);
  return kl;
}

template <typename T>
T three_class_cell_loss(const T* zo, const T* zs, std::size_t vocab, int blank_id, int target,
                        TeacherDirection d) {
  const auto co = collapse(zo, vocab, blank_id, target);
  const auto cs = collapse(zs, vocab, blank_id, target);
  return direction_loss<T>(d, collapsed_kl(co, cs), collapsed_kl(cs, co));
}

// d KL(teacher || student) / d z_student, for a detached teacher.
template <typename T>
void collapsed_student_grad(const T* z_student, std::size_t vocab, int blank_id, int target,
                            const CollapsedCell<T>& teacher, const CollapsedCell<T>& student,
                            T weight, T* g) {
  for (std::size_t v = 0; v < vocab; ++v) {
    const int k = collapse_class(v, blank_id, target);
    const T p = std::exp(z_student[v] - student.lse_all);
    g[v] += weight * p * (T(1) - std::exp(teacher.log_class[k] - student.log_class[k]));
  }
}

// d KL(teacher || student) / d z_teacher.
template <typename T>
void collapsed_teacher_grad(const T* z_teacher, std::size_t vocab, int blank_id, int target,
                            const CollapsedCell<T>& teacher, const CollapsedCell<T>& student,
                            T weight, T* g) {
  const T kl = collapsed_kl(teacher, student);
  for (std::size_t v = 0; v < vocab; ++v) {
    const int k = collapse_class(v, blank_id, target);
    const T p = std::exp(z_teacher[v] - teacher.lse_all);
    g[v] += weight * p * (teacher.log_class[k] - student.log_class[k] - kl);
  }
}

template <typename T>
void three_class_backward(const T* zo, const T* zs, std::size_t vocab, int blank_id, int target,
                          const MCRConfig& cfg, T scale, T* go, T* gs) {
  const auto co = collapse(zo, vocab, blank_id, target);
  const auto cs = collapse(zs, vocab, blank_id, target);
  const T half = T(0.5);
  switch (cfg.direction) {
    case TeacherDirection::offline_teacher:
      if (gs) collapsed_student_grad(zs, vocab, blank_id, target, co, cs, scale, gs);
      if (cfg.full_grad && go) collapsed_teacher_grad(zo, vocab, blank_id, target, co, cs, scale, go);
      break;
    case TeacherDirection::streaming_teacher:
      if (go) collapsed_student_grad(zo, vocab, blank_id, target, cs, co, scale, go);
      if (cfg.full_grad && gs) collapsed_teacher_grad(zs, vocab, blank_id, target, cs, co, scale, gs);
      break;
    case TeacherDirection::symmetric:
      if (gs) collapsed_student_grad(zs, vocab, blank_id, target, co, cs, half * scale, gs);
      if (go) collapsed_student_grad(zo, vocab, blank_id, target, cs, co, half * scale, go);
      if (cfg.full_grad) {
        if (go) collapsed_teacher_grad(zo, vocab, blank_id, target, co, cs, half * scale, go);
        if (gs) collapsed_teacher_grad(zs, vocab, blank_id, target, cs, co, half * scale, gs);
      }
      break;
  }
}

}  // namespace mcr_detail

/// Mode-consistency divergence for one utterance lattice pair, summed over
/// valid cells in (t, u) row-major order (not yet normalized). `targets`
/// is only read by the three-class variant.
template <typename T>
T mcr_utterance_sum(const LatticeView<T>& off, const LatticeView<T>& str, std::span<const int> targets,
                    int blank_id, const MCRConfig& cfg) {
  mcr_detail::TileScratch<T> scratch(std::min(cfg.tile, off.vocab));
  T total = 0;
  for (std::size_t t = 0; t < off.frames; ++t)
    for (std::size_t u = 0; u <= off.labels; ++u) {
      const T* zo = off.cell(t, u);
      const T* zs = str.cell(t, u);
      if (cfg.variant == McrVariant::full_joint) {
        const auto c = mcr_detail::full_joint_stats(zo, zs, off.vocab, cfg.tile, scratch);
        total += mcr_detail::direction_loss(cfg.direction, c.kl_off_str, c.kl_str_off);
      } else {
        const int target = u < off.labels ? targets[u] : -1;
        total += mcr_detail::three_class_cell_loss(zo, zs, off.vocab, blank_id, target, cfg.direction);
      }
    }
  return total;
}

/// Accumulates scale * d(sum)/dz into the gradient buffers (which share the
/// views' strides, relative to their own origins). Softmaxes are recomputed.
template <typename T>
void mcr_utterance_backward(const LatticeView<T>& off, const LatticeView<T>& str,
                            std::span<const int> targets, int blank_id, const MCRConfig& cfg, T scale,
                            T* grad_off, T* grad_str) {
  mcr_detail::TileScratch<T> scratch(std::min(cfg.tile, off.vocab));
  for (std::size_t t = 0; t < off.frames; ++t)
    for (std::size_t u = 0; u <= off.labels; ++u) {
      const T* zo = off.cell(t, u);
      const T* zs = str.cell(t, u);
      T* go = grad_off ? grad_off + (zo - off.z) : nullptr;
      T* gs = grad_str ? grad_str + (zs - str.z) : nullptr;
      if (cfg.variant == McrVariant::full_joint) {
        mcr_detail::full_joint_backward(zo, zs, off.vocab, cfg, scale, go, gs, scratch);
      } else {
        const int target = u < off.labels ? targets[u] : -1;
        mcr_detail::three_class_backward(zo, zs, off.vocab, blank_id, target, cfg, scale, go, gs);
      }
    }
}

namespace mcr_detail {

template <typename T>
LatticeView<T> view_of(const JointLogits<T>& j, std::size_t b) {
  return {j.cell(b, 0, 0), j.t_len[b], j.u_len[b], j.vocab, j.frame_stride(), j.vocab};
}

template <typename T>
void check_pair(const JointLogits<T>& off, const JointLogits<T>& str) {
  if (!off.same_layout(str) || off.z.size() != str.z.size())
    fail("ModeShapeMismatch", "offline and streaming lattices differ in shape or lengths");
  off.validate();
}

template <typename T>
MCRResult<T>& run(const JointLogits<T>& off, const JointLogits<T>& str,
                  const std::vector<std::vector<int>>* targets, const MCRConfig& cfg, MCRResult<T>& out) {
  check_pair(off, str);
  cfg.validate();
  if (out.grad_offline.size() != off.z.size() || out.grad_streaming.size() != off.z.size())
    fail("ShapeMismatch", "MCR gradient buffers");
  std::fill(out.grad_offline.begin(), out.grad_offline.end(), T(0));
  std::fill(out.grad_streaming.begin(), out.grad_streaming.end(), T(0));
  out.loss = 0;
  out.cells = 0;
  if (off.batch == 0) return out;
  const std::vector<int> none;
  // Forward: per-utterance sums in b order, each normalized by its valid
  // cell count, then a batch mean.
  for (std::size_t b = 0; b < off.batch; ++b) {
    const std::size_t cells = off.t_len[b] * (off.u_len[b] + 1);
    out.cells += cells;
    if (cells == 0) continue;
    const std::vector<int>& y = targets ? (*targets)[b] : none;
    const T sum = mcr_utterance_sum<T>(view_of(off, b), view_of(str, b), y, off.blank_id, cfg);
    out.loss += sum / T(cells);
  }
  out.loss /= T(off.batch);
  // Backward: recompute from the raw logits.
  for (std::size_t b = 0; b < off.batch; ++b) {
    const std::size_t cells = off.t_len[b] * (off.u_len[b] + 1);
    if (cells == 0) continue;
    const std::vector<int>& y = targets ? (*targets)[b] : none;
    const T scale = T(1) / (T(off.batch) * T(cells));
    mcr_utterance_backward<T>(view_of(off, b), view_of(str, b), y, off.blank_id, cfg, scale,
                              out.grad_offline.data() + off.offset(b, 0, 0),
                              out.grad_streaming.data() + off.offset(b, 0, 0));
  }
  return out;
}

}  // namespace mcr_detail

/// Full-joint MCR loss into caller-owned gradient buffers (sized like z).
template <typename T>
void mcr_loss_into(const JointLogits<T>& z_off, const JointLogits<T>& z_str, const MCRConfig& cfg,
                   MCRResult<T>& out) {
  if (cfg.variant != McrVariant::full_joint) fail("ConfigError", "mcr_loss expects full_joint");
  mcr_detail::run<T>(z_off, z_str, nullptr, cfg, out);
}

/// KL consistency between offline- and streaming-mode lattices over every
/// valid (t, u) cell, normalized per utterance by T_b * (U_b + 1) and
/// averaged over the batch. Gradients are d(loss)/dz for each mode.
template <typename T>
MCRResult<T> mcr_loss(const JointLogits<T>& z_off, const JointLogits<T>& z_str, const MCRConfig& cfg) {
  MCRResult<T> out;
  out.grad_offline.assign(z_off.z.size(), T(0));
  out.grad_streaming.assign(z_off.z.size(), T(0));
  mcr_loss_into(z_off, z_str, cfg, out);
  return out;
}

/// Variant over the collapsed {blank, next target, rest} distribution; at
/// u == U_b the target class is absent and the cell collapses to
/// {blank, rest}.
template <typename T>
MCRResult<T> mcr_three_class(const JointLogits<T>& z_off, const JointLogits<T>& z_str,
                             const std::vector<std::vector<int>>& targets, const MCRConfig& cfg) {
  if (cfg.variant != McrVariant::three_class) fail("ConfigError", "mcr_three_class expects three_class");
  if (targets.size() != z_off.batch) fail("ShapeMismatch", "targets per utterance");
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (targets[b].size() != z_off.u_len[b]) fail("ShapeMismatch", "target length != u_len");
    for (int y : targets[b]) {
      if (y == z_off.blank_id) fail("BlankInTarget");
      if (y < 0 || static_cast<std::size_t>(y) >= z_off.vocab) fail("BadToken", std::to_string(y));
    }
  }
  MCRResult<T> out;
  out.grad_offline.assign(z_off.z.size(), T(0));
  out.grad_streaming.assign(z_off.z.size(), T(0));
  mcr_detail::run<T>(z_off, z_str, &targets, cfg, out);
  return out;
}

}  // namespace unirnnt
