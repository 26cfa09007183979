#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "unirnnt/lattice/joint_logits.hpp"

namespace unirnnt {

namespace lattice_detail {

template <typename T>
T log_add(T a, T b) {
  constexpr T ninf = -std::numeric_limits<T>::infinity();
  if (a == ninf) return b;
  if (b == ninf) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

template <typename T>
T cell_logsumexp(const T* z, std::size_t vocab) {
  T mx = z[0];
  for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, z[v]);
  T s = 0;
  for (std::size_t v = 0; v < vocab; ++v) s += std::exp(z[v] - mx);
  return mx + std::log(s);
}

}  // namespace lattice_detail

/// Strided view of one utterance's [T, U+1, V] lattice inside a larger buffer.
template <typename T>
struct LatticeView {
  const T* z = nullptr;
  std::size_t frames = 0;   // valid T_b
  std::size_t labels = 0;   // valid U_b
  std::size_t vocab = 0;
  std::size_t frame_stride = 0;  // elements between (t, u) and (t+1, u)
  std::size_t label_stride = 0;  // elements between (t, u) and (t, u+1)

  const T* cell(std::size_t t, std::size_t u) const { return z + t * frame_stride + u * label_stride; }
};

/// Transducer negative log-likelihood for one utterance by log-space
/// forward-backward over the [T, U+1] lattice. When `grad` is non-null it
/// receives d(loss)/dz at the same strides as `lat` (valid cells only;
/// the caller zero-initializes).
template <typename T>
T rnnt_utterance_loss(const LatticeView<T>& lat, std::span<const int> targets, int blank_id,
                      T* grad = nullptr) {
  using lattice_detail::cell_logsumexp;
  using lattice_detail::log_add;
  const std::size_t tn = lat.frames, un = lat.labels, u1 = un + 1, vocab = lat.vocab;
  if (tn == 0) fail("ImpossibleLattice", "utterance has no frames");
  if (targets.size() != un) fail("ShapeMismatch", "target length != u_len");
  for (int y : targets) {
    if (y == blank_id) fail("BlankInTarget");
    if (y < 0 || static_cast<std::size_t>(y) >= vocab) fail("BadToken", std::to_string(y));
  }
  constexpr T ninf = -std::numeric_limits<T>::infinity();

  std::vector<T> lse(tn * u1), log_blank(tn * u1), log_emit(tn * u1, ninf);
  for (std::size_t t = 0; t < tn; ++t)
    for (std::size_t u = 0; u < u1; ++u) {
      const T* z = lat.cell(t, u);
      const std::size_t i = t * u1 + u;
      lse[i] = cell_logsumexp(z, vocab);
      log_blank[i] = z[blank_id] - lse[i];
      if (u < un) log_emit[i] = z[targets[u]] - lse[i];
    }

  std::vector<T> alpha(tn * u1, ninf), beta(tn * u1, ninf);
  alpha[0] = 0;
  for (std::size_t t = 0; t < tn; ++t)
    for (std::size_t u = 0; u < u1; ++u) {
      if (t == 0 && u == 0) continue;
      T a = ninf;
      if (t > 0) a = alpha[(t - 1) * u1 + u] + log_blank[(t - 1) * u1 + u];
      if (u > 0) a = log_add(a, alpha[t * u1 + u - 1] + log_emit[t * u1 + u - 1]);
      alpha[t * u1 + u] = a;
    }
  const T log_likelihood = alpha[(tn - 1) * u1 + un] + log_blank[(tn - 1) * u1 + un];
  if (grad == nullptr) return -log_likelihood;

  for (std::size_t t = tn; t-- > 0;)
    for (std::size_t u = u1; u-- > 0;) {
      const std::size_t i = t * u1 + u;
      if (t == tn - 1 && u == un) {
        beta[i] = log_blank[i];
        continue;
      }
      T b = ninf;
      if (t + 1 < tn) b = log_blank[i] + beta[(t + 1) * u1 + u];
      if (u < un) b = log_add(b, log_emit[i] + beta[t * u1 + u + 1]);
      beta[i] = b;
    }

  for (std::size_t t = 0; t < tn; ++t)
    for (std::size_t u = 0; u < u1; ++u) {
      const std::size_t i = t * u1 + u;
      const T occupancy = std::exp(alpha[i] + beta[i] - log_likelihood);
      T blank_post = 0;
      if (t + 1 < tn) blank_post = std::exp(alpha[i] + log_blank[i] + beta[i + u1] - log_likelihood);
      else if (u == un) blank_post = std::exp(alpha[i] + log_blank[i] - log_likelihood);
      const T emit_post = u < un ? std::exp(alpha[i] + log_emit[i] + beta[i + 1] - log_likelihood) : T(0);
      const T* z = lat.cell(t, u);
      T* g = grad + (z - lat.z);
      for (std::size_t v = 0; v < vocab; ++v) g[v] = occupancy * std::exp(z[v] - lse[i]);
      g[blank_id] -= blank_post;
      if (u < un) g[targets[u]] -= emit_post;
    }
  return -log_likelihood;
}

template <typename T>
struct RnntLossResult {
  std::vector<T> loss;  // per utterance
  std::vector<T> grad;  // same layout as JointLogits::z
};

/// Per-utterance transducer losses and the exact gradient w.r.t. every
/// logit. Padded cells receive zero gradient. Batch reduction is left to
/// the caller.
template <typename T>
RnntLossResult<T> rnnt_loss(const JointLogits<T>& logits, const std::vector<std::vector<int>>& targets,
                            bool with_grad = true) {
  logits.validate();
  if (targets.size() != logits.batch) fail("ShapeMismatch", "targets per utterance");
  RnntLossResult<T> out;
  out.loss.resize(logits.batch);
  if (with_grad) out.grad.assign(logits.z.size(), T(0));
  for (std::size_t b = 0; b < logits.batch; ++b) {
    if (logits.t_len[b] == 0 && logits.u_len[b] > 0) fail("ImpossibleLattice", "u_len > 0 with T = 0");
    LatticeView<T> lat{logits.cell(b, 0, 0), logits.t_len[b], logits.u_len[b], logits.vocab,
                       logits.frame_stride(), logits.vocab};
    T* g = with_grad ? out.grad.data() + logits.offset(b, 0, 0) : nullptr;
    out.loss[b] = rnnt_utterance_loss<T>(lat, targets[b], logits.blank_id, g);
  }
  return out;
}

}  // namespace unirnnt
