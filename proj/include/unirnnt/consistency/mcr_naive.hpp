#pragma once

#include <cmath>
#include <vector>

#include "unirnnt/consistency/mcr.hpp"

namespace unirnnt {

/// Reference MCR: materializes the complete log-softmax of both lattices
/// and evaluates loss and gradients from those buffers. Only meant for
/// validation; holds two extra copies of the [B, T, U+1, V] tensor.
template <typename T>
void mcr_naive_oracle_into(const JointLogits<T>& z_off, const JointLogits<T>& z_str, const MCRConfig& cfg,
                           MCRResult<T>& out) {
  if (!z_off.same_layout(z_str) || z_off.z.size() != z_str.z.size())
    fail("ModeShapeMismatch", "offline and streaming lattices differ in shape or lengths");
  z_off.validate();
  if (cfg.variant != McrVariant::full_joint) fail("ConfigError", "naive oracle covers full_joint only");
  const std::size_t vocab = z_off.vocab;

  std::vector<T> lsm_off(z_off.z.size(), T(0));
  std::vector<T> lsm_str(z_str.z.size(), T(0));
  for (std::size_t b = 0; b < z_off.batch; ++b)
    for (std::size_t t = 0; t < z_off.t_len[b]; ++t)
      for (std::size_t u = 0; u <= z_off.u_len[b]; ++u) {
        const std::size_t o = z_off.offset(b, t, u);
        for (const auto* pair : {&z_off.z, &z_str.z}) {
          std::vector<T>& dst = pair == &z_off.z ? lsm_off : lsm_str;
          T mx = (*pair)[o];
          for (std::size_t v = 0; v < vocab; ++v) {
            if (!std::isfinite((*pair)[o + v])) fail("NonFiniteInput", "MCR logits");
            mx = std::max(mx, (*pair)[o + v]);
          }
          T s = 0;
          for (std::size_t v = 0; v < vocab; ++v) s += std::exp((*pair)[o + v] - mx);
          const T lse = mx + std::log(s);
          for (std::size_t v = 0; v < vocab; ++v) dst[o + v] = (*pair)[o + v] - lse;
        }
      }

  std::fill(out.grad_offline.begin(), out.grad_offline.end(), T(0));
  std::fill(out.grad_streaming.begin(), out.grad_streaming.end(), T(0));
  out.loss = 0;
  out.cells = 0;
  for (std::size_t b = 0; b < z_off.batch; ++b) {
    const std::size_t cells = z_off.t_len[b] * (z_off.u_len[b] + 1);
    out.cells += cells;
    if (cells == 0) continue;
    const T norm = T(z_off.batch) * T(cells);
    T utt = 0;
    for (std::size_t t = 0; t < z_off.t_len[b]; ++t)
      for (std::size_t u = 0; u <= z_off.u_len[b]; ++u) {
        const std::size_t o = z_off.offset(b, t, u);
        T kl_pq = 0, kl_qp = 0;
        for (std::size_t v = 0; v < vocab; ++v) {
          const T lp = lsm_off[o + v], lq = lsm_str[o + v];
          kl_pq += std::exp(lp) * (lp - lq);
          kl_qp += std::exp(lq) * (lq - lp);
        }
        switch (cfg.direction) {
          case TeacherDirection::offline_teacher: utt += kl_pq; break;
          case TeacherDirection::streaming_teacher: utt += kl_qp; break;
          case TeacherDirection::symmetric: utt += T(0.5) * (kl_pq + kl_qp); break;
        }
        for (std::size_t v = 0; v < vocab; ++v) {
          const T lp = lsm_off[o + v], lq = lsm_str[o + v];
          const T p = std::exp(lp), q = std::exp(lq);
          T go = 0, gs = 0;
          if (cfg.direction == TeacherDirection::offline_teacher) {
            gs = q - p;
            if (cfg.full_grad) go = p * (lp - lq - kl_pq);
          } else if (cfg.direction == TeacherDirection::streaming_teacher) {
            go = p - q;
            if (cfg.full_grad) gs = q * (lq - lp - kl_qp);
          } else {
            go = (p - q) / T(2);
            gs = (q - p) / T(2);
            if (cfg.full_grad) {
              go += p * (lp - lq - kl_pq) / T(2);
              gs += q * (lq - lp - kl_qp) / T(2);
            }
          }
          out.grad_offline[o + v] = go / norm;
          out.grad_streaming[o + v] = gs / norm;
        }
      }
    out.loss += utt / T(cells);
  }
  if (z_off.batch > 0) out.loss /= T(z_off.batch);
}

template <typename T>
MCRResult<T> mcr_naive_oracle(const JointLogits<T>& z_off, const JointLogits<T>& z_str, const MCRConfig& cfg) {
  MCRResult<T> out;
  out.grad_offline.assign(z_off.z.size(), T(0));
  out.grad_streaming.assign(z_off.z.size(), T(0));
  mcr_naive_oracle_into(z_off, z_str, cfg, out);
  return out;
}

}  // namespace unirnnt
