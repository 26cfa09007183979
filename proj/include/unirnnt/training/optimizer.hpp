#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "unirnnt/model/transducer.hpp"

namespace unirnnt {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double weight_decay = 1e-3;
};

/// Adam with decoupled weight decay:
///   m ← β1 m + (1-β1) g;  v ← β2 v + (1-β2) g²
///   p ← p - lr (m̂ / (√v̂ + ε) + wd · p)
template <typename T>
class AdamW {
 public:
  AdamW(const ParameterSet<T>& params, AdamWConfig cfg) : cfg_(cfg), m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(ParameterSet<T>& params, const GradientSet<T>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      T* p = params[i].value.data();
      const T* g = grads[i].data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (std::size_t k = 0; k < grads[i].size(); ++k) {
        m[k] = static_cast<T>(cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k]);
        v[k] = static_cast<T>(cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k]);
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p[k] = static_cast<T>(p[k] - lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[k]));
      }
    }
  }

  std::uint64_t steps() const noexcept { return t_; }
  GradientSet<T>& first_moment() noexcept { return m_; }
  GradientSet<T>& second_moment() noexcept { return v_; }
  void restore(GradientSet<T> m, GradientSet<T> v, std::uint64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  AdamWConfig cfg_;
  GradientSet<T> m_;
  GradientSet<T> v_;
  std::uint64_t t_ = 0;
};

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(GradientSet<T>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (T v : g.values()) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (auto& v : g.values()) v *= s;
  }
  return norm;
}

}  // namespace unirnnt
