#pragma once

#include <chrono>
#include <cstdint>
#include <random>

#include "unirnnt/consistency/alloc_counter.hpp"
#include "unirnnt/consistency/mcr.hpp"
#include "unirnnt/consistency/mcr_naive.hpp"

namespace unirnnt {

struct ProbeShape {
  std::size_t batch = 4;
  std::size_t frames = 64;
  std::size_t labels = 32;  // U; lattice has U + 1 label positions
  std::size_t vocab = 1024;
};

struct MemoryProbeReport {
  std::int64_t aux_bytes_fused = 0;
  std::int64_t aux_bytes_naive = 0;
  double wall_ms_fused = 0;
  double wall_ms_naive = 0;
  double loss_fused = 0;
  double loss_naive = 0;
  double max_grad_diff = 0;

  double ratio() const {
    return aux_bytes_naive > 0 ? double(aux_bytes_fused) / double(aux_bytes_naive) : 0.0;
  }
};

/// Runs the tiled and the materializing MCR paths on random logits of
/// `shape` and reports each path's peak heap allocation beyond its inputs
/// and gradient outputs (both allocated before measurement), plus wall
/// time. Requires UNIRNNT_INSTALL_ALLOCATION_COUNTER() in the binary.
template <typename T>
MemoryProbeReport mcr_memory_probe(const ProbeShape& shape, MCRConfig cfg, std::uint64_t seed = 0) {
  if (!alloc_counter::installed.load())
    throw std::logic_error("mcr_memory_probe: allocation counter not installed in this binary");
  cfg.variant = McrVariant::full_joint;
  JointLogits<T> off(shape.batch, shape.frames, shape.labels, shape.vocab);
  JointLogits<T> str(shape.batch, shape.frames, shape.labels, shape.vocab);
  std::mt19937_64 rng(seed);
  std::normal_distribution<T> dist(T(0), T(1));
  for (auto& v : off.z) v = dist(rng);
  for (auto& v : str.z) v = dist(rng);

  MCRResult<T> fused, naive;
  fused.grad_offline.assign(off.z.size(), T(0));
  fused.grad_streaming.assign(off.z.size(), T(0));
  naive.grad_offline.assign(off.z.size(), T(0));
  naive.grad_streaming.assign(off.z.size(), T(0));

  MemoryProbeReport r;
  using clock = std::chrono::steady_clock;
  {
    alloc_counter::PeakScope scope;
    const auto t0 = clock::now();
    mcr_loss_into(off, str, cfg, fused);
    r.wall_ms_fused = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    r.aux_bytes_fused = scope.peak_bytes();
  }
  {
    alloc_counter::PeakScope scope;
    const auto t0 = clock::now();
    mcr_naive_oracle_into(off, str, cfg, naive);
    r.wall_ms_naive = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    r.aux_bytes_naive = scope.peak_bytes();
  }
  r.loss_fused = static_cast<double>(fused.loss);
  r.loss_naive = static_cast<double>(naive.loss);
  for (std::size_t i = 0; i < off.z.size(); ++i) {
    r.max_grad_diff = std::max(r.max_grad_diff,
                               static_cast<double>(std::abs(fused.grad_offline[i] - naive.grad_offline[i])));
    r.max_grad_diff = std::max(
        r.max_grad_diff, static_cast<double>(std::abs(fused.grad_streaming[i] - naive.grad_streaming[i])));
  }
  return r;
}

}  // namespace unirnnt
