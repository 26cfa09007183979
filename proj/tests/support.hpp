#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "unirnnt/numerics/tape.hpp"
#include "unirnnt/numerics/tensor.hpp"

namespace unirnnt::testing {

using Tensors = std::vector<Tensor<double>>;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

/// Loss evaluated at `xs`; when `grads` is non-null it is sized like `xs`
/// and receives the analytic gradient.
using LossFn = std::function<double(const Tensors& xs, Tensors* grads)>;

/// max |analytic - numeric| / max(max |numeric|, floor), over all inputs,
/// with central differences of step h.
inline double grad_rel_error(Tensors xs, const LossFn& f, double h = 1e-6, double floor = 1e-8) {
  Tensors grads;
  for (const auto& x : xs) grads.emplace_back(x.shape());
  f(xs, &grads);
  double err = 0, scale = floor;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double keep = xs[i][k];
      xs[i][k] = keep + h;
      const double up = f(xs, nullptr);
      xs[i][k] = keep - h;
      const double down = f(xs, nullptr);
      xs[i][k] = keep;
      const double num = (up - down) / (2 * h);
      err = std::max(err, std::abs(grads[i][k] - num));
      scale = std::max(scale, std::abs(num));
    }
  }
  return err / scale;
}

/// Wraps a tape graph builder as a LossFn: inputs become parameter leaves,
/// the builder's output is reduced with fixed random weights so every
/// output element matters.
template <typename Build>
LossFn tape_loss(Build build, std::uint64_t seed = 7) {
  return [build, seed](const Tensors& xs, Tensors* grads) {
    Tape<double> tape;
    std::vector<Var> in;
    for (std::size_t i = 0; i < xs.size(); ++i) in.push_back(tape.param(xs[i], grads ? &(*grads)[i] : nullptr));
    const Var out = build(tape, in);
    const Tensor<double>& y = tape.value(out);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> w(y.size());
    double loss = 0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      w[k] = u(rng);
      loss += w[k] * y[k];
    }
    if (grads) {
      // Seed the output gradient with the reduction weights.
      const Var root = tape.record(Tensor<double>(Shape{1}, loss), {out}, [&tape, out, w](const Tensor<double>& g) {
        Tensor<double>& go = tape.grad(out);
        for (std::size_t k = 0; k < w.size(); ++k) go[k] += g[0] * w[k];
      });
      tape.backward(root);
    }
    return loss;
  };
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace unirnnt::testing
