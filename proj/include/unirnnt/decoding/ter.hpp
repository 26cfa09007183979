#pragma once

#include <algorithm>
#include <span>
#include <vector>

namespace unirnnt {

/// Unit-cost Levenshtein distance.
inline std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Token error rate: edits / max(1, |ref|).
inline double token_error_rate(std::span<const int> hyp, std::span<const int> ref) {
  return double(edit_distance(hyp, ref)) / double(std::max<std::size_t>(1, ref.size()));
}

}  // namespace unirnnt
