#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "unirnnt/lattice/joint_logits.hpp"

namespace unirnnt {

inline constexpr std::size_t kOracleMaxFrames = 6;
inline constexpr std::size_t kOracleMaxLabels = 4;

/// Transducer loss by explicit enumeration of every monotonic alignment:
/// each path is a sequence of T blanks and U target emissions ending in a
/// blank at the last frame. Path probabilities are products of per-cell
/// softmax entries computed independently of the forward recursion.
template <typename T>
std::vector<T> rnnt_bruteforce_oracle(const JointLogits<T>& logits,
                                      const std::vector<std::vector<int>>& targets) {
  std::vector<T> out(logits.batch);
  for (std::size_t b = 0; b < logits.batch; ++b) {
    const std::size_t tn = logits.t_len[b], un = logits.u_len[b], vocab = logits.vocab;
    if (tn > kOracleMaxFrames || un > kOracleMaxLabels)
      fail("OracleTooLarge", "T=" + std::to_string(tn) + " U=" + std::to_string(un));
    if (tn == 0) fail("ImpossibleLattice");
    const std::vector<int>& y = targets.at(b);

    auto prob = [&](std::size_t t, std::size_t u, int v) {
      const T* z = logits.cell(b, t, u);
      T mx = z[0];
      for (std::size_t k = 1; k < vocab; ++k) mx = std::max(mx, z[k]);
      T s = 0;
      for (std::size_t k = 0; k < vocab; ++k) s += std::exp(z[k] - mx);
      return std::exp(z[v] - mx) / s;
    };

    std::vector<T> path_logs;
    std::function<void(std::size_t, std::size_t, T)> walk = [&](std::size_t t, std::size_t u, T logp) {
      if (t == tn - 1 && u == un) {
        path_logs.push_back(logp + std::log(prob(t, u, logits.blank_id)));
        return;
      }
      if (u < un) walk(t, u + 1, logp + std::log(prob(t, u, y[u])));
      if (t + 1 < tn) walk(t + 1, u, logp + std::log(prob(t, u, logits.blank_id)));
    };
    walk(0, 0, T(0));

    T mx = -std::numeric_limits<T>::infinity();
    for (T l : path_logs) mx = std::max(mx, l);
    T s = 0;
    for (T l : path_logs) s += std::exp(l - mx);
    out[b] = -(mx + std::log(s));
  }
  return out;
}

}  // namespace unirnnt
