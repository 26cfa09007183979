#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "unirnnt/numerics/tape.hpp"

namespace unirnnt::ops {

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    fail("ShapeMismatch", std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      if (av == T(0)) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

template <typename T, typename F, typename D>
Var unary(Tape<T>& tape, Var x, F f, D dfdx_from_out) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {x}, [&tape, x, dfdx_from_out, self](const Tensor<T>& g) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& yv = tape.value(Var{self});
    Tensor<T>& gx = tape.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx_from_out(xv[i], yv[i]);
  });
}

}  // namespace detail

/// Boolean [rows, cols] mask; allowed(i, j) means query i may read key j.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask full(std::size_t n) { return {n, n, std::vector<std::uint8_t>(n * n, 1)}; }
  bool operator()(std::size_t i, std::size_t j) const { return allowed[i * cols + j] != 0; }
};

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) fail("ShapeMismatch", "matmul inner dims");
  Tensor<T> out = Tensor<T>::matrix(m, n);
  detail::gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {a, b}, [&tape, a, b, m, k, n](const Tensor<T>& g) {
    if (tape.wants_grad(a)) detail::gemm_nt(g.data(), tape.value(b).data(), tape.grad(a).data(), m, n, k);
    if (tape.wants_grad(b)) detail::gemm_tn(tape.value(a).data(), g.data(), tape.grad(b).data(), m, k, n);
  });
}

/// x[m,k] * w[k,n] + bias[n]
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(bias);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  if (wv.rows() != k || bv.size() != n) fail("ShapeMismatch", "linear");
  Tensor<T> out = Tensor<T>::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = bv[j];
  detail::gemm_nn(xv.data(), wv.data(), out.data(), m, k, n);
  return tape.record(std::move(out), {x, w, bias}, [&tape, x, w, bias, m, k, n](const Tensor<T>& g) {
    if (tape.wants_grad(x)) detail::gemm_nt(g.data(), tape.value(w).data(), tape.grad(x).data(), m, n, k);
    if (tape.wants_grad(w)) detail::gemm_tn(tape.value(x).data(), g.data(), tape.grad(w).data(), m, k, n);
    if (tape.wants_grad(bias)) {
      Tensor<T>& gb = tape.grad(bias);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b}, [&tape, a, b](const Tensor<T>& g) {
    for (Var v : {a, b}) {
      if (!tape.wants_grad(v)) continue;
      Tensor<T>& gv = tape.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "sub");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return tape.record(std::move(out), {a, b}, [&tape, a, b](const Tensor<T>& g) {
    if (tape.wants_grad(a)) {
      Tensor<T>& ga = tape.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.wants_grad(b)) {
      Tensor<T>& gb = tape.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [&tape, a, b](const Tensor<T>& g) {
    if (tape.wants_grad(a)) {
      Tensor<T>& ga = tape.grad(a);
      const Tensor<T>& bv = tape.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.wants_grad(b)) {
      Tensor<T>& gb = tape.grad(b);
      const Tensor<T>& av = tape.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T s) {
  return detail::unary(tape, x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

/// 1 - x
template <typename T>
Var one_minus(Tape<T>& tape, Var x) {
  return detail::unary(tape, x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Var tanh(Tape<T>& tape, Var x) {
  return detail::unary(tape, x, [](T v) { return std::tanh(v); },
                       [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  return detail::unary(tape, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return detail::unary(tape, x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var silu(Tape<T>& tape, Var x) {
  return detail::unary(
      tape, x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

/// Row-wise layer normalization with affine gain/bias of length cols.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var bias, T eps = T(1e-5)) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gain);
  const Tensor<T>& bv = tape.value(bias);
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gv.size() != n || bv.size() != n) fail("ShapeMismatch", "layer_norm");
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const T d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= T(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return tape.record(std::move(out), {x, gain, bias},
                     [&tape, x, gain, bias, m, n, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](const Tensor<T>& g) {
                       const Tensor<T>& gv = tape.value(gain);
                       if (tape.wants_grad(gain) || tape.wants_grad(bias)) {
                         Tensor<T>& gg = tape.grad(gain);
                         Tensor<T>& gb = tape.grad(bias);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                             gg[j] += g[i * n + j] * xhat[i * n + j];
                             gb[j] += g[i * n + j];
                           }
                       }
                       if (!tape.wants_grad(x)) return;
                       Tensor<T>& gx = tape.grad(x);
                       for (std::size_t i = 0; i < m; ++i) {
                         T mean_dy = 0, mean_dy_xhat = 0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const T dy = g[i * n + j] * gv[j];
                           mean_dy += dy;
                           mean_dy_xhat += dy * xhat[i * n + j];
                         }
                         mean_dy /= T(n);
                         mean_dy_xhat /= T(n);
                         for (std::size_t j = 0; j < n; ++j) {
                           const T dy = g[i * n + j] * gv[j];
                           gx[i * n + j] += inv_std[i] * (dy - mean_dy - xhat[i * n + j] * mean_dy_xhat);
                         }
                       }
                     });
}

/// Multi-head scaled dot-product attention over pre-projected q, k, v
/// ([T, d] each, heads split along d). Masked scores are set to -inf before
/// the softmax.
template <typename T>
Var masked_attention(Tape<T>& tape, Var q, Var k, Var v, const AttentionMask& mask,
                     std::size_t heads) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  const std::size_t tq = qv.rows(), tk = kv.rows(), d = qv.cols();
  if (heads == 0 || d % heads != 0) fail("BadHeads", "model dim not divisible by heads");
  if (kv.cols() != d || vv.cols() != d || vv.rows() != tk) fail("ShapeMismatch", "attention qkv");
  if (mask.rows != tq || mask.cols != tk) fail("ShapeMismatch", "attention mask");
  for (std::size_t i = 0; i < tq; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < tk && !any; ++j) any = mask(i, j);
    if (!any) fail("EmptyAttentionRow", "query " + std::to_string(i));
  }
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  // probs[h][i][j]
  std::vector<T> probs(heads * tq * tk, T(0));
  Tensor<T> out = Tensor<T>::matrix(tq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      T* p = probs.data() + (h * tq + i) * tk;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        if (!mask(i, j)) continue;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qv(i, off + c) * kv(j, off + c);
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      T z = 0;
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] = mask(i, j) ? std::exp(p[j] - mx) : T(0);
        z += p[j];
      }
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] /= z;
        if (p[j] == T(0)) continue;
        for (std::size_t c = 0; c < dh; ++c) out(i, off + c) += p[j] * vv(j, off + c);
      }
    }
  }
  return tape.record(
      std::move(out), {q, k, v},
      [&tape, q, k, v, heads, tq, tk, d, dh, scale, probs = std::move(probs)](const Tensor<T>& g) {
        const Tensor<T>& qv = tape.value(q);
        const Tensor<T>& kv = tape.value(k);
        const Tensor<T>& vv = tape.value(v);
        const bool wq = tape.wants_grad(q), wk = tape.wants_grad(k), wv = tape.wants_grad(v);
        Tensor<T>* gq = wq ? &tape.grad(q) : nullptr;
        Tensor<T>* gk = wk ? &tape.grad(k) : nullptr;
        Tensor<T>* gvv = wv ? &tape.grad(v) : nullptr;
        std::vector<T> dp(tk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < tq; ++i) {
            const T* p = probs.data() + (h * tq + i) * tk;
            T dot = 0;
            for (std::size_t j = 0; j < tk; ++j) {
              dp[j] = 0;
              if (p[j] == T(0)) continue;
              for (std::size_t c = 0; c < dh; ++c) {
                dp[j] += g(i, off + c) * vv(j, off + c);
                if (wv) (*gvv)(j, off + c) += p[j] * g(i, off + c);
              }
              dot += p[j] * dp[j];
            }
            if (!wq && !wk) continue;
            for (std::size_t j = 0; j < tk; ++j) {
              if (p[j] == T(0)) continue;
              const T ds = p[j] * (dp[j] - dot) * scale;
              for (std::size_t c = 0; c < dh; ++c) {
                if (wq) (*gq)(i, off + c) += ds * kv(j, off + c);
                if (wk) (*gk)(j, off + c) += ds * qv(i, off + c);
              }
            }
          }
        }
        (void)d;
      });
}

/// Per-output-frame input visibility for depthwise convolution: output
/// frame t may read input frames in [lo[t], hi[t]); everything else is zero.
struct ConvVisibility {
  std::vector<std::size_t> lo;
  std::vector<std::size_t> hi;

  static ConvVisibility full(std::size_t frames) {
    return {std::vector<std::size_t>(frames, 0), std::vector<std::size_t>(frames, frames)};
  }
};

/// Depthwise 1-D cross-correlation, x[T,d] with kernel[k,d], odd k, centred
/// taps. Reads outside `vis` are zeros; ConvVisibility::full gives zero
/// same-padding.
template <typename T>
Var depthwise_conv1d(Tape<T>& tape, Var x, Var kernel, const ConvVisibility& vis) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& kv = tape.value(kernel);
  const std::size_t frames = xv.rows(), d = xv.cols(), k = kv.rows();
  if (k % 2 == 0) fail("EvenKernel", "kernel size " + std::to_string(k));
  if (kv.cols() != d) fail("ShapeMismatch", "conv kernel channels");
  if (vis.lo.size() != frames || vis.hi.size() != frames) fail("ShapeMismatch", "conv visibility");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> out = Tensor<T>::matrix(frames, d);
  for (std::size_t t = 0; t < frames; ++t) {
    T* o = out.data() + t * d;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
      if (src < static_cast<std::ptrdiff_t>(vis.lo[t]) || src >= static_cast<std::ptrdiff_t>(vis.hi[t]))
        continue;
      const T* xi = xv.data() + static_cast<std::size_t>(src) * d;
      const T* kj = kv.data() + j * d;
      for (std::size_t c = 0; c < d; ++c) o[c] += kj[c] * xi[c];
    }
  }
  return tape.record(std::move(out), {x, kernel}, [&tape, x, kernel, vis, frames, d, k, half](const Tensor<T>& g) {
    const Tensor<T>& xv = tape.value(x);
    const Tensor<T>& kv = tape.value(kernel);
    const bool wx = tape.wants_grad(x), wk = tape.wants_grad(kernel);
    Tensor<T>* gx = wx ? &tape.grad(x) : nullptr;
    Tensor<T>* gk = wk ? &tape.grad(kernel) : nullptr;
    for (std::size_t t = 0; t < frames; ++t) {
      const T* gt = g.data() + t * d;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
        if (src < static_cast<std::ptrdiff_t>(vis.lo[t]) || src >= static_cast<std::ptrdiff_t>(vis.hi[t]))
          continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < d; ++c) {
          if (wx) (*gx)[s * d + c] += gt[c] * kv[j * d + c];
          if (wk) (*gk)[j * d + c] += gt[c] * xv[s * d + c];
        }
      }
    }
  });
}

template <typename T>
Var depthwise_conv1d(Tape<T>& tape, Var x, Var kernel) {
  return depthwise_conv1d(tape, x, kernel, ConvVisibility::full(tape.value(x).rows()));
}

/// Rows [begin, end) of a matrix.
template <typename T>
Var slice_rows(Tape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = tape.value(x);
  if (begin > end || end > xv.rows()) fail("ShapeMismatch", "slice_rows out of range");
  const std::size_t n = xv.cols();
  Tensor<T> out = Tensor<T>::matrix(end - begin, n);
  std::copy(xv.data() + begin * n, xv.data() + end * n, out.data());
  return tape.record(std::move(out), {x}, [&tape, x, begin, n](const Tensor<T>& g) {
    Tensor<T>& gx = tape.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
  });
}

template <typename T>
Var concat_rows(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) fail("ShapeMismatch", "concat_rows of nothing");
  const std::size_t n = tape.value(parts.front()).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (tape.value(p).cols() != n) fail("ShapeMismatch", "concat_rows cols");
    rows += tape.value(p).rows();
  }
  Tensor<T> out = Tensor<T>::matrix(rows, n);
  std::size_t at = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = tape.value(p);
    std::copy(pv.data(), pv.data() + pv.size(), out.data() + at);
    at += pv.size();
  }
  return tape.record(std::move(out), parts, [&tape, parts](const Tensor<T>& g) {
    std::size_t at = 0;
    for (Var p : parts) {
      const std::size_t sz = tape.value(p).size();
      if (tape.wants_grad(p)) {
        Tensor<T>& gp = tape.grad(p);
        for (std::size_t i = 0; i < sz; ++i) gp[i] += g[at + i];
      }
      at += sz;
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  Tensor<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x}, [&tape, x](const Tensor<T>& g) {
    Tensor<T>& gx = tape.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Rows of `table` selected by `ids`.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::vector<std::size_t> ids) {
  const Tensor<T>& tv = tape.value(table);
  const std::size_t n = tv.cols();
  Tensor<T> out = Tensor<T>::matrix(ids.size(), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) fail("BadToken", "row " + std::to_string(ids[i]));
    std::copy(tv.data() + ids[i] * n, tv.data() + (ids[i] + 1) * n, out.data() + i * n);
  }
  return tape.record(std::move(out), {table}, [&tape, table, ids = std::move(ids), n](const Tensor<T>& g) {
    Tensor<T>& gt = tape.grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) gt[ids[i] * n + c] += g[i * n + c];
  });
}

/// out[t * U + u, :] = a[t, :] + b[u, :]
template <typename T>
Var grid_add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  const std::size_t ta = av.rows(), ub = bv.rows(), n = av.cols();
  if (bv.cols() != n) fail("ShapeMismatch", "grid_add");
  Tensor<T> out = Tensor<T>::matrix(ta * ub, n);
  for (std::size_t t = 0; t < ta; ++t)
    for (std::size_t u = 0; u < ub; ++u) {
      T* o = out.data() + (t * ub + u) * n;
      for (std::size_t c = 0; c < n; ++c) o[c] = av(t, c) + bv(u, c);
    }
  return tape.record(std::move(out), {a, b}, [&tape, a, b, ta, ub, n](const Tensor<T>& g) {
    const bool wa = tape.wants_grad(a), wb = tape.wants_grad(b);
    Tensor<T>* ga = wa ? &tape.grad(a) : nullptr;
    Tensor<T>* gb = wb ? &tape.grad(b) : nullptr;
    for (std::size_t t = 0; t < ta; ++t)
      for (std::size_t u = 0; u < ub; ++u) {
        const T* gi = g.data() + (t * ub + u) * n;
        for (std::size_t c = 0; c < n; ++c) {
          if (wa) (*ga)[t * n + c] += gi[c];
          if (wb) (*gb)[u * n + c] += gi[c];
        }
      }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T s = 0;
  for (T v : xv.values()) s += v;
  return tape.record(Tensor<T>(Shape{1}, s), {x}, [&tape, x](const Tensor<T>& g) {
    Tensor<T>& gx = tape.grad(x);
    for (auto& v : gx.values()) v += g[0];
  });
}

/// Σ_i weights[i] * scalars[i] for scalar ([1]) inputs.
template <typename T>
Var weighted_sum(Tape<T>& tape, const std::vector<Var>& scalars, const std::vector<T>& weights) {
  if (scalars.size() != weights.size()) fail("ShapeMismatch", "weighted_sum");
  T s = 0;
  for (std::size_t i = 0; i < scalars.size(); ++i) s += weights[i] * tape.value(scalars[i])[0];
  return tape.record(Tensor<T>(Shape{1}, s), scalars, [&tape, scalars, weights](const Tensor<T>& g) {
    for (std::size_t i = 0; i < scalars.size(); ++i)
      if (tape.wants_grad(scalars[i])) tape.grad(scalars[i])[0] += weights[i] * g[0];
  });
}

}  // namespace unirnnt::ops
