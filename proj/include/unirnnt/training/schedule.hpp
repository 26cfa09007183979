#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace unirnnt {

struct LrSchedule {
  std::size_t steps = 2000;
  std::size_t warmup_steps = 200;
  double max_lr = 1e-3;
  double min_lr = 1e-5;
};

/// Linear warmup to max_lr over warmup_steps, then cosine annealing down to
/// min_lr at `steps`. Steps past the end clamp to min_lr.
inline double cosine_lr(std::size_t step, const LrSchedule& s) {
  if (step > s.steps) return s.min_lr;
  if (s.warmup_steps > 0 && step <= s.warmup_steps) return s.max_lr * double(step) / double(s.warmup_steps);
  if (s.steps <= s.warmup_steps) return s.min_lr;
  const double progress = double(step - s.warmup_steps) / double(s.steps - s.warmup_steps);
  return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace unirnnt
