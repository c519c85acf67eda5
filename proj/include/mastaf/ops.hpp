#pragma once

// Differentiable operations over Var. Each records its forward value, a
// backward rule, and the multiply-accumulates it performed.
//
// MAC accounting: one per multiplication and one per accumulation in a
// reduction; elementwise additions, sign flips and nonlinearities are free.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "mastaf/errors.hpp"
#include "mastaf/kernels.hpp"
#include "mastaf/tape.hpp"

namespace mastaf::ops {

inline constexpr double kLogFloor = 1e-12;

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " +
                         b.shape().to_string());
  }
}

template <typename T>
void require_rank(const char* op, const Var<T>& a, std::size_t rank) {
  if (a.shape().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + a.shape().to_string());
  }
}

}  // namespace detail

// Same values, new shape of equal element count.
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw DimensionError("reshape: cannot view " + x.shape().to_string() + " as " +
                         shape.to_string());
  }
  const std::size_t xi = x.id();
  std::vector<T> out(x.value().begin(), x.value().end());
  return x.tape().record(
      "reshape", std::move(shape), std::move(out), {x},
      [xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      0);
}

template <typename T>
Var<T> transpose(const Var<T>& x) {
  detail::require_rank("transpose", x, 2);
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  std::vector<T> out(rows * cols);
  auto v = x.value();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = v[i * cols + j];
  const std::size_t xi = x.id();
  return x.tape().record(
      "transpose", Shape{cols, rows}, std::move(out), {x},
      [xi, rows, cols](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[j * rows + i];
      },
      0);
}

// a[M,K] * b[K,N]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + a.shape().to_string() + " x " +
                         b.shape().to_string());
  }
  std::vector<T> out(m * n);
  kernels::matmul<T>(a.value(), b.value(), out, m, k, n);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "matmul", Shape{m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](Tape<T>& t, std::size_t self) {
        std::span<const T> g = t.node(self).grad;
        if (auto ga = t.grad_buffer(ai); !ga.empty()) {
          std::vector<T> tmp(m * k);
          kernels::matmul_nt<T>(g, t.node(bi).value, tmp, m, n, k);
          for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
        }
        if (auto gb = t.grad_buffer(bi); !gb.empty()) {
          std::vector<T> tmp(k * n);
          kernels::matmul_tn<T>(t.node(ai).value, g, tmp, k, m, n);
          for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
        }
      },
      m * k * n);
}

// a[K,M]^T * b[K,N]
template <typename T>
Var<T> matmul_tn(const Var<T>& a, const Var<T>& b) {
  detail::require_rank("matmul_tn", a, 2);
  detail::require_rank("matmul_tn", b, 2);
  const std::size_t k = a.shape()[0], m = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul_tn: leading extents differ, " + a.shape().to_string() +
                         "^T x " + b.shape().to_string());
  }
  std::vector<T> out(m * n);
  kernels::matmul_tn<T>(a.value(), b.value(), out, m, k, n);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "matmul_tn", Shape{m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](Tape<T>& t, std::size_t self) {
        std::span<const T> g = t.node(self).grad;
        // out = a^T b  =>  da = b g^T  [K,M],  db = a g  [K,N]
        if (auto ga = t.grad_buffer(ai); !ga.empty()) {
          std::vector<T> tmp(k * m);
          kernels::matmul_nt<T>(t.node(bi).value, g, tmp, k, n, m);
          for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
        }
        if (auto gb = t.grad_buffer(bi); !gb.empty()) {
          std::vector<T> tmp(k * n);
          kernels::matmul<T>(t.node(ai).value, g, tmp, k, m, n);
          for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
        }
      },
      m * k * n);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "add", a.shape(), std::move(out), {a, b},
      [ai, bi](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t id : {ai, bi}) {
          auto gx = t.grad_buffer(id);
          if (gx.empty()) continue;
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
      },
      0);
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "mul", a.shape(), std::move(out), {a, b},
      [ai, bi](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        if (auto ga = t.grad_buffer(ai); !ga.empty()) {
          const auto& bv = t.node(bi).value;
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (auto gb = t.grad_buffer(bi); !gb.empty()) {
          const auto& av = t.node(ai).value;
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      },
      a.numel());
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v += c;
  const std::size_t xi = x.id();
  return x.tape().record(
      "add_scalar", x.shape(), std::move(out), {x},
      [xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      0);
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v *= c;
  const std::size_t xi = x.id();
  return x.tape().record(
      "scale", x.shape(), std::move(out), {x},
      [xi, c](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
      },
      x.numel());
}

template <typename T>
Var<T> neg(const Var<T>& x) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v = -v;
  const std::size_t xi = x.id();
  return x.tape().record(
      "neg", x.shape(), std::move(out), {x},
      [xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
      },
      0);
}

// max(0, x); the subgradient at 0 is 0.
template <typename T>
Var<T> relu(const Var<T>& x) {
  std::vector<T> out(x.value().begin(), x.value().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  const std::size_t xi = x.id();
  return x.tape().record(
      "relu", x.shape(), std::move(out), {x},
      [xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        const auto& xv = t.node(xi).value;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (xv[i] > T(0)) gx[i] += g[i];
        }
      },
      0);
}

// exp(x_i / tau) / sum_j exp(x_j / tau) over all elements, max-subtracted.
template <typename T>
Var<T> softmax(const Var<T>& x, T tau) {
  if (!(tau > T(0)) || !std::isfinite(static_cast<double>(tau))) {
    throw ConfigError("softmax: temperature must be positive, got " + std::to_string(tau));
  }
  auto xv = x.value();
  T mx = xv[0];
  for (T v : xv) mx = v > mx ? v : mx;
  std::vector<T> out(xv.size());
  T total = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::exp((xv[i] - mx) / tau);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  const std::size_t xi = x.id();
  return x.tape().record(
      "softmax", x.shape(), std::move(out), {x},
      [xi, tau](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        const auto& y = t.node(self).value;
        T inner = T(0);
        for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - inner) / tau;
      },
      0);
}

// Mean over columns of each row of a 2D array.
template <typename T>
Var<T> row_mean(const Var<T>& m) {
  detail::require_rank("row_mean", m, 2);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  std::vector<T> out(rows);
  auto mv = m.value();
  for (std::size_t i = 0; i < rows; ++i) {
    T acc = T(0);
    for (std::size_t j = 0; j < cols; ++j) acc += mv[i * cols + j];
    out[i] = acc / static_cast<T>(cols);
  }
  const std::size_t mi = m.id();
  return m.tape().record(
      "row_mean", Shape{rows}, std::move(out), {m},
      [mi, rows, cols](Tape<T>& t, std::size_t self) {
        auto gm = t.grad_buffer(mi);
        if (gm.empty()) return;
        const auto& g = t.node(self).grad;
        const T inv = T(1) / static_cast<T>(cols);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += g[i] * inv;
      },
      rows * cols);
}

// cube[C, ...positions] * map[...positions], the map shared by every channel.
template <typename T>
Var<T> broadcast_mul(const Var<T>& cube, const Var<T>& map) {
  const auto& cd = cube.shape().dims();
  const auto& md = map.shape().dims();
  if (cd.size() != md.size() + 1 || !std::equal(md.begin(), md.end(), cd.begin() + 1)) {
    throw DimensionError("broadcast_mul: map " + map.shape().to_string() +
                         " does not match the trailing extents of " + cube.shape().to_string());
  }
  const std::size_t channels = cd[0];
  const std::size_t positions = map.numel();
  std::vector<T> out(cube.numel());
  kernels::broadcast_mul<T>(cube.value(), map.value(), out, channels, positions);
  const std::size_t ci = cube.id(), mi = map.id();
  return cube.tape().record(
      "broadcast_mul", cube.shape(), std::move(out), {cube, map},
      [ci, mi, channels, positions](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        if (auto gc = t.grad_buffer(ci); !gc.empty()) {
          const auto& mv = t.node(mi).value;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < positions; ++p)
              gc[c * positions + p] += g[c * positions + p] * mv[p];
        }
        if (auto gm = t.grad_buffer(mi); !gm.empty()) {
          const auto& cv = t.node(ci).value;
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < positions; ++p)
              gm[p] += g[c * positions + p] * cv[c * positions + p];
        }
      },
      cube.numel());
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value()) acc += v;
  const std::size_t xi = x.id();
  return x.tape().record(
      "sum", Shape{1}, std::vector<T>{acc}, {x},
      [xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const T g = t.node(self).grad[0];
        for (auto& v : gx) v += g;
      },
      x.numel());
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("dot", a, b);
  T acc = T(0);
  auto av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "dot", Shape{1}, std::vector<T>{acc}, {a, b},
      [ai, bi](Tape<T>& t, std::size_t self) {
        const T g = t.node(self).grad[0];
        if (auto ga = t.grad_buffer(ai); !ga.empty()) {
          const auto& bv = t.node(bi).value;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
        }
        if (auto gb = t.grad_buffer(bi); !gb.empty()) {
          const auto& av = t.node(ai).value;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
        }
      },
      a.numel());
}

// Elementwise arithmetic mean of equally shaped arrays, accumulated in list
// order as sum_k (1/K) x_k.
template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw DimensionError("mean_of: empty list");
  for (const auto& x : xs) detail::require_same_shape("mean_of", xs.front(), x);
  const std::size_t n = xs.front().numel();
  const T w = T(1) / static_cast<T>(xs.size());
  std::vector<T> out(n, T(0));
  for (const auto& x : xs) {
    auto v = x.value();
    for (std::size_t i = 0; i < n; ++i) out[i] += w * v[i];
  }
  std::vector<std::size_t> ids;
  for (const auto& x : xs) ids.push_back(x.id());
  return xs.front().tape().record(
      "mean_of", xs.front().shape(), std::move(out), xs,
      [ids, w](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t id : ids) {
          auto gx = t.grad_buffer(id);
          if (gx.empty()) continue;
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += w * g[i];
        }
      },
      xs.size() * n);
}

// Packs scalars into a vector.
template <typename T>
Var<T> stack(const std::vector<Var<T>>& scalars) {
  if (scalars.empty()) throw DimensionError("stack: empty list");
  std::vector<T> out;
  std::vector<std::size_t> ids;
  for (const auto& s : scalars) {
    out.push_back(s.item());
    ids.push_back(s.id());
  }
  return scalars.front().tape().record(
      "stack", Shape{scalars.size()}, std::move(out), scalars,
      [ids](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto gx = t.grad_buffer(ids[i]);
          if (!gx.empty()) gx[0] += g[i];
        }
      },
      0);
}

// 1 - <a,b> / (|a| |b|) over all elements. A zero-norm operand is an error.
template <typename T>
Var<T> cosine_distance(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape("cosine_distance", a, b);
  auto av = a.value(), bv = b.value();
  T ab = T(0), aa = T(0), bb = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (aa == T(0) || bb == T(0)) {
    throw DegenerateInputError("cosine_distance: zero-norm operand");
  }
  const T na = std::sqrt(aa), nb = std::sqrt(bb);
  const T cosv = ab / (na * nb);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "cosine_distance", Shape{1}, std::vector<T>{T(1) - cosv}, {a, b},
      [ai, bi, na, nb, cosv](Tape<T>& t, std::size_t self) {
        const T g = t.node(self).grad[0];
        const auto& av = t.node(ai).value;
        const auto& bv = t.node(bi).value;
        // d cos / d a = b / (|a||b|) - cos * a / |a|^2
        if (auto ga = t.grad_buffer(ai); !ga.empty()) {
          for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] -= g * (bv[i] / (na * nb) - cosv * av[i] / (na * na));
        }
        if (auto gb = t.grad_buffer(bi); !gb.empty()) {
          for (std::size_t i = 0; i < gb.size(); ++i)
            gb[i] -= g * (av[i] / (na * nb) - cosv * bv[i] / (nb * nb));
        }
      },
      3 * av.size());
}

// -log p[index], with p floored at kLogFloor. Floor hits are counted on the
// tape and contribute no gradient.
template <typename T>
Var<T> neg_log_prob(const Var<T>& p, std::size_t index) {
  if (index >= p.numel()) {
    throw DimensionError("neg_log_prob: index " + std::to_string(index) + " out of range for " +
                         p.shape().to_string());
  }
  const T pv = p.value()[index];
  const bool clamped = !(pv >= static_cast<T>(kLogFloor));
  if (clamped) p.tape().note_clamped_log();
  const T used = clamped ? static_cast<T>(kLogFloor) : pv;
  const std::size_t pi = p.id();
  return p.tape().record(
      "neg_log_prob", Shape{1}, std::vector<T>{-std::log(used)}, {p},
      [pi, index, clamped, used](Tape<T>& t, std::size_t self) {
        auto gp = t.grad_buffer(pi);
        if (gp.empty() || clamped) return;
        gp[index] -= t.node(self).grad[0] / used;
      },
      0);
}

// Softmax cross-entropy of a logit vector against an integer label.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  if (label >= logits.numel()) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                         logits.shape().to_string());
  }
  auto z = logits.value();
  T mx = z[0];
  for (T v : z) mx = v > mx ? v : mx;
  T total = T(0);
  for (T v : z) total += std::exp(v - mx);
  const T lse = mx + std::log(total);
  const std::size_t li = logits.id();
  return logits.tape().record(
      "cross_entropy", Shape{1}, std::vector<T>{lse - z[label]}, {logits},
      [li, label, lse](Tape<T>& t, std::size_t self) {
        auto gl = t.grad_buffer(li);
        if (gl.empty()) return;
        const T g = t.node(self).grad[0];
        const auto& zv = t.node(li).value;
        for (std::size_t i = 0; i < gl.size(); ++i) {
          gl[i] += g * (std::exp(zv[i] - lse) - (i == label ? T(1) : T(0)));
        }
      },
      0);
}

// Affine map x[n] -> x W[n,m] + b[m]. `bias` may be an invalid Var.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  auto row = reshape(x, Shape{1, x.numel()});
  auto y = matmul(row, weight);
  auto flat = reshape(y, Shape{weight.shape()[1]});
  return bias.valid() ? add(flat, bias) : flat;
}

// Swaps the first two axes of a rank-4 array: [A,B,H,W] -> [B,A,H,W].
template <typename T>
Var<T> swap_leading_axes(const Var<T>& x) {
  detail::require_rank("swap_leading_axes", x, 4);
  const std::size_t a = x.shape()[0], b = x.shape()[1];
  const std::size_t inner = x.shape()[2] * x.shape()[3];
  std::vector<T> out(x.numel());
  auto v = x.value();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t p = 0; p < inner; ++p) out[(j * a + i) * inner + p] = v[(i * b + j) * inner + p];
  const std::size_t xi = x.id();
  return x.tape().record(
      "swap_leading_axes", Shape{b, a, x.shape()[2], x.shape()[3]}, std::move(out), {x},
      [xi, a, b, inner](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        const auto& g = t.node(self).grad;
        for (std::size_t i = 0; i < a; ++i)
          for (std::size_t j = 0; j < b; ++j)
            for (std::size_t p = 0; p < inner; ++p)
              gx[(i * b + j) * inner + p] += g[(j * a + i) * inner + p];
      },
      0);
}

// "Same"-padded stride-1 3D convolution. x[Cin,D,H,W], weight[Cout,Cin,k,k,k], bias[Cout].
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  detail::require_rank("conv3d", x, 4);
  detail::require_rank("conv3d", weight, 5);
  const auto& wd = weight.shape().dims();
  kernels::ConvGeometry g;
  g.in_channels = x.shape()[0];
  g.depth = x.shape()[1];
  g.height = x.shape()[2];
  g.width = x.shape()[3];
  g.out_channels = wd[0];
  g.kernel = wd[2];
  if (wd[1] != g.in_channels || wd[3] != g.kernel || wd[4] != g.kernel || g.kernel % 2 == 0) {
    throw DimensionError("conv3d: weight " + weight.shape().to_string() +
                         " incompatible with input " + x.shape().to_string());
  }
  if (bias.numel() != g.out_channels) {
    throw DimensionError("conv3d: bias " + bias.shape().to_string() + " for " +
                         std::to_string(g.out_channels) + " output channels");
  }
  std::vector<T> out(g.out_channels * g.depth * g.height * g.width);
  kernels::conv3d<T>(g, x.value(), weight.value(), bias.value(), out);
  const std::size_t xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.tape().record(
      "conv3d", Shape{g.out_channels, g.depth, g.height, g.width}, std::move(out),
      {x, weight, bias},
      [g, xi, wi, bi](Tape<T>& t, std::size_t self) {
        std::span<const T> go = t.node(self).grad;
        if (auto gx = t.grad_buffer(xi); !gx.empty()) {
          kernels::conv3d_grad_input<T>(g, go, t.node(wi).value, gx);
        }
        auto gw = t.grad_buffer(wi);
        auto gb = t.grad_buffer(bi);
        if (!gw.empty() || !gb.empty()) {
          std::vector<T> wtmp(t.node(wi).value.size(), T(0));
          std::vector<T> btmp(g.out_channels, T(0));
          kernels::conv3d_grad_weight<T>(g, t.node(xi).value, go, wtmp, btmp);
          for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += wtmp[i];
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += btmp[i];
        }
      },
      kernels::conv3d_macs(g));
}

// Non-overlapping average pooling with window == stride along each axis.
template <typename T>
Var<T> avg_pool3d(const Var<T>& x, std::size_t sd, std::size_t sh, std::size_t sw) {
  detail::require_rank("avg_pool3d", x, 4);
  kernels::PoolGeometry g{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], sd, sh, sw};
  if (sd == 0 || sh == 0 || sw == 0 || g.depth % sd || g.height % sh || g.width % sw) {
    throw DimensionError("avg_pool3d: strides do not divide " + x.shape().to_string());
  }
  std::vector<T> out(kernels::pool_out_elems(g));
  kernels::avg_pool3d<T>(g, x.value(), out);
  const std::size_t xi = x.id();
  return x.tape().record(
      "avg_pool3d", Shape{g.channels, g.depth / sd, g.height / sh, g.width / sw}, std::move(out),
      {x},
      [g, xi](Tape<T>& t, std::size_t self) {
        auto gx = t.grad_buffer(xi);
        if (gx.empty()) return;
        kernels::avg_pool3d_grad<T>(g, t.node(self).grad, gx);
      },
      kernels::avg_pool3d_macs(g));
}

}  // namespace mastaf::ops
