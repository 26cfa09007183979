#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "unirnnt/error.hpp"

namespace unirnnt {

/// Running (max, scaled-sum) pair for a logsumexp reduction that consumes
/// its input one tile at a time. Merging is associative up to rounding.
template <typename T>
struct OnlineLogSumExp {
  T max = -std::numeric_limits<T>::infinity();
  T sum = T(0);

  // `scratch` must hold at least tile.size() values; it receives exp(x - tile_max).
  void push_tile(std::span<const T> tile, std::span<T> scratch) {
    if (tile.empty()) return;
    T tile_max = *std::max_element(tile.begin(), tile.end());
    T tile_sum = T(0);
    for (std::size_t i = 0; i < tile.size(); ++i) {
      scratch[i] = std::exp(tile[i] - tile_max);
      tile_sum += scratch[i];
    }
    merge(tile_max, tile_sum);
  }

  void merge(T other_max, T other_sum) {
    if (other_max == -std::numeric_limits<T>::infinity()) return;
    if (other_max > max) {
      sum = sum * std::exp(max - other_max) + other_sum;
      max = other_max;
    } else {
      sum += other_sum * std::exp(other_max - max);
    }
  }

  T value() const { return max + std::log(sum); }
};

/// logsumexp over `x` reading `tile` entries at a time. `scratch` holds one tile.
template <typename T>
T logsumexp_tiled(std::span<const T> x, std::size_t tile, std::span<T> scratch) {
  OnlineLogSumExp<T> acc;
  for (std::size_t start = 0; start < x.size(); start += tile) {
    std::size_t n = std::min(tile, x.size() - start);
    acc.push_tile(x.subspan(start, n), scratch);
  }
  return acc.value();
}

/// Log-softmax of `x` via a two-pass tiled reduction: the first pass folds
/// tiles into a running (max, sum), the second writes x - logsumexp(x).
/// Auxiliary storage is one tile of scratch.
template <typename T>
std::vector<T> log_softmax_online(std::span<const T> x, std::size_t tile) {
  if (x.empty()) fail("EmptyInput", "log_softmax_online needs V >= 1");
  if (tile == 0) fail("BadTile", "tile must be positive");
  for (T v : x)
    if (!std::isfinite(v)) fail("NonFiniteInput", "log_softmax_online");
  std::vector<T> scratch(std::min(tile, x.size()));
  const T lse = logsumexp_tiled<T>(x, tile, scratch);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

}  // namespace unirnnt
