#include "mastaf/kernels.hpp"

namespace mastaf::kernels {
namespace {

template <bool Parallel, typename T>
void matmul_impl(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
                 std::size_t k, std::size_t n) {
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <bool Parallel, typename T>
void matmul_tn_impl(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
                    std::size_t k, std::size_t n) {
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T api = a[p * m + i];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

template <bool Parallel, typename T>
void matmul_nt_impl(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
                    std::size_t k, std::size_t n) {
  const auto rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

template <bool Parallel, typename T>
void broadcast_mul_impl(std::span<const T> cube, std::span<const T> map, std::span<T> out,
                        std::size_t channels, std::size_t positions) {
  const auto chans = static_cast<long>(channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long cc = 0; cc < chans; ++cc) {
    const auto base = static_cast<std::size_t>(cc) * positions;
    for (std::size_t p = 0; p < positions; ++p) out[base + p] = cube[base + p] * map[p];
  }
}

// Visits every (output position, input position, kernel tap) triple of a
// "same"-padded stride-1 3D convolution for one (out, in) channel pair.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  const auto pad = static_cast<long>(g.kernel / 2);
  const auto dd = static_cast<long>(g.depth);
  const auto hh = static_cast<long>(g.height);
  const auto ww = static_cast<long>(g.width);
  const auto kk = static_cast<long>(g.kernel);
  for (long d = 0; d < dd; ++d)
    for (long h = 0; h < hh; ++h)
      for (long w = 0; w < ww; ++w) {
        const std::size_t out_pos = static_cast<std::size_t>((d * hh + h) * ww + w);
        for (long kd = 0; kd < kk; ++kd) {
          const long sd = d + kd - pad;
          if (sd < 0 || sd >= dd) continue;
          for (long kh = 0; kh < kk; ++kh) {
            const long sh = h + kh - pad;
            if (sh < 0 || sh >= hh) continue;
            for (long kw = 0; kw < kk; ++kw) {
              const long sw = w + kw - pad;
              if (sw < 0 || sw >= ww) continue;
              const std::size_t in_pos = static_cast<std::size_t>((sd * hh + sh) * ww + sw);
              const std::size_t tap = static_cast<std::size_t>((kd * kk + kh) * kk + kw);
              fn(out_pos, in_pos, tap);
            }
          }
        }
      }
}

template <bool Parallel, typename T>
void conv3d_impl(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
                 std::span<const T> bias, std::span<T> out) {
  const std::size_t vol = g.depth * g.height * g.width;
  const std::size_t taps = g.kernel * g.kernel * g.kernel;
  const auto outs = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long oo = 0; oo < outs; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    T* dst = out.data() + o * vol;
    for (std::size_t p = 0; p < vol; ++p) dst[p] = bias[o];
    for (std::size_t i = 0; i < g.in_channels; ++i) {
      const T* src = in.data() + i * vol;
      const T* wk = weight.data() + (o * g.in_channels + i) * taps;
      for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
        dst[op] += wk[tap] * src[ip];
      });
    }
  }
}

template <bool Parallel, typename T>
void conv3d_grad_input_impl(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> weight, std::span<T> grad_in) {
  const std::size_t vol = g.depth * g.height * g.width;
  const std::size_t taps = g.kernel * g.kernel * g.kernel;
  const auto ins = static_cast<long>(g.in_channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long ii = 0; ii < ins; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* dst = grad_in.data() + i * vol;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T* go = grad_out.data() + o * vol;
      const T* wk = weight.data() + (o * g.in_channels + i) * taps;
      for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
        dst[ip] += wk[tap] * go[op];
      });
    }
  }
}

template <bool Parallel, typename T>
void conv3d_grad_weight_impl(const ConvGeometry& g, std::span<const T> in,
                             std::span<const T> grad_out, std::span<T> grad_weight,
                             std::span<T> grad_bias) {
  const std::size_t vol = g.depth * g.height * g.width;
  const std::size_t taps = g.kernel * g.kernel * g.kernel;
  const auto outs = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long oo = 0; oo < outs; ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    const T* go = grad_out.data() + o * vol;
    for (std::size_t p = 0; p < vol; ++p) grad_bias[o] += go[p];
    for (std::size_t i = 0; i < g.in_channels; ++i) {
      const T* src = in.data() + i * vol;
      T* gw = grad_weight.data() + (o * g.in_channels + i) * taps;
      for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
        gw[tap] += go[op] * src[ip];
      });
    }
  }
}

template <bool Parallel, typename T>
void avg_pool3d_impl(const PoolGeometry& g, std::span<const T> in, std::span<T> out) {
  const std::size_t od = g.depth / g.stride_d;
  const std::size_t oh = g.height / g.stride_h;
  const std::size_t ow = g.width / g.stride_w;
  const std::size_t window = g.stride_d * g.stride_h * g.stride_w;
  const T inv = T(1) / static_cast<T>(window);
  const auto chans = static_cast<long>(g.channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long cc = 0; cc < chans; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const T* src = in.data() + c * g.depth * g.height * g.width;
    T* dst = out.data() + c * od * oh * ow;
    for (std::size_t d = 0; d < od; ++d)
      for (std::size_t h = 0; h < oh; ++h)
        for (std::size_t w = 0; w < ow; ++w) {
          T acc = T(0);
          for (std::size_t a = 0; a < g.stride_d; ++a)
            for (std::size_t b = 0; b < g.stride_h; ++b)
              for (std::size_t e = 0; e < g.stride_w; ++e) {
                const std::size_t sd = d * g.stride_d + a;
                const std::size_t sh = h * g.stride_h + b;
                const std::size_t sw = w * g.stride_w + e;
                acc += src[(sd * g.height + sh) * g.width + sw];
              }
          dst[(d * oh + h) * ow + w] = acc * inv;
        }
  }
}

template <bool Parallel, typename T>
void avg_pool3d_grad_impl(const PoolGeometry& g, std::span<const T> grad_out,
                          std::span<T> grad_in) {
  const std::size_t od = g.depth / g.stride_d;
  const std::size_t oh = g.height / g.stride_h;
  const std::size_t ow = g.width / g.stride_w;
  const std::size_t window = g.stride_d * g.stride_h * g.stride_w;
  const T inv = T(1) / static_cast<T>(window);
  const auto chans = static_cast<long>(g.channels);
#pragma omp parallel for schedule(static) if (Parallel)
  for (long cc = 0; cc < chans; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    T* dst = grad_in.data() + c * g.depth * g.height * g.width;
    const T* src = grad_out.data() + c * od * oh * ow;
    for (std::size_t d = 0; d < od; ++d)
      for (std::size_t h = 0; h < oh; ++h)
        for (std::size_t w = 0; w < ow; ++w) {
          const T gv = src[(d * oh + h) * ow + w] * inv;
          for (std::size_t a = 0; a < g.stride_d; ++a)
            for (std::size_t b = 0; b < g.stride_h; ++b)
              for (std::size_t e = 0; e < g.stride_w; ++e) {
                const std::size_t sd = d * g.stride_d + a;
                const std::size_t sh = h * g.stride_h + b;
                const std::size_t sw = w * g.stride_w + e;
                dst[(sd * g.height + sh) * g.width + sw] += gv;
              }
        }
  }
}

}  // namespace

#define MASTAF_DEFINE_VARIANT(NS, PAR)                                                            \
  namespace NS {                                                                                   \
  template <typename T>                                                                            \
  void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,          \
              std::size_t k, std::size_t n) {                                                      \
    matmul_impl<PAR>(a, b, c, m, k, n);                                                            \
  }                                                                                                \
  template <typename T>                                                                            \
  void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,       \
                 std::size_t k, std::size_t n) {                                                   \
    matmul_tn_impl<PAR>(a, b, c, m, k, n);                                                         \
  }                                                                                                \
  template <typename T>                                                                            \
  void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,       \
                 std::size_t k, std::size_t n) {                                                   \
    matmul_nt_impl<PAR>(a, b, c, m, k, n);                                                         \
  }                                                                                                \
  template <typename T>                                                                            \
  void broadcast_mul(std::span<const T> cube, std::span<const T> map, std::span<T> out,           \
                     std::size_t channels, std::size_t positions) {                                \
    broadcast_mul_impl<PAR>(cube, map, out, channels, positions);                                  \
  }                                                                                                \
  template <typename T>                                                                            \
  void conv3d(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,            \
              std::span<const T> bias, std::span<T> out) {                                         \
    conv3d_impl<PAR>(g, in, weight, bias, out);                                                    \
  }                                                                                                \
  template <typename T>                                                                            \
  void conv3d_grad_input(const ConvGeometry& g, std::span<const T> grad_out,                       \
                         std::span<const T> weight, std::span<T> grad_in) {                        \
    conv3d_grad_input_impl<PAR>(g, grad_out, weight, grad_in);                                     \
  }                                                                                                \
  template <typename T>                                                                            \
  void conv3d_grad_weight(const ConvGeometry& g, std::span<const T> in,                            \
                          std::span<const T> grad_out, std::span<T> grad_weight,                   \
                          std::span<T> grad_bias) {                                                \
    conv3d_grad_weight_impl<PAR>(g, in, grad_out, grad_weight, grad_bias);                         \
  }                                                                                                \
  template <typename T>                                                                            \
  void avg_pool3d(const PoolGeometry& g, std::span<const T> in, std::span<T> out) {                \
    avg_pool3d_impl<PAR>(g, in, out);                                                              \
  }                                                                                                \
  template <typename T>                                                                            \
  void avg_pool3d_grad(const PoolGeometry& g, std::span<const T> grad_out,                         \
                       std::span<T> grad_in) {                                                     \
    avg_pool3d_grad_impl<PAR>(g, grad_out, grad_in);                                               \
  }                                                                                                \
  }

MASTAF_DEFINE_VARIANT(serial, false)
MASTAF_DEFINE_VARIANT(omp, true)
#undef MASTAF_DEFINE_VARIANT

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold) {
    omp::matmul(a, b, c, m, k, n);
  } else {
    serial::matmul(a, b, c, m, k, n);
  }
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold) {
    omp::matmul_tn(a, b, c, m, k, n);
  } else {
    serial::matmul_tn(a, b, c, m, k, n);
  }
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
               std::size_t k, std::size_t n) {
  if (m * k * n >= kParallelThreshold) {
    omp::matmul_nt(a, b, c, m, k, n);
  } else {
    serial::matmul_nt(a, b, c, m, k, n);
  }
}

template <typename T>
void broadcast_mul(std::span<const T> cube, std::span<const T> map, std::span<T> out,
                   std::size_t channels, std::size_t positions) {
  if (channels * positions >= kParallelThreshold) {
    omp::broadcast_mul(cube, map, out, channels, positions);
  } else {
    serial::broadcast_mul(cube, map, out, channels, positions);
  }
}

template <typename T>
void conv3d(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,
            std::span<const T> bias, std::span<T> out) {
  if (conv3d_macs(g) >= kParallelThreshold) {
    omp::conv3d(g, in, weight, bias, out);
  } else {
    serial::conv3d(g, in, weight, bias, out);
  }
}

template <typename T>
void conv3d_grad_input(const ConvGeometry& g, std::span<const T> grad_out,
                       std::span<const T> weight, std::span<T> grad_in) {
  if (conv3d_macs(g) >= kParallelThreshold) {
    omp::conv3d_grad_input(g, grad_out, weight, grad_in);
  } else {
    serial::conv3d_grad_input(g, grad_out, weight, grad_in);
  }
}

template <typename T>
void conv3d_grad_weight(const ConvGeometry& g, std::span<const T> in, std::span<const T> grad_out,
                        std::span<T> grad_weight, std::span<T> grad_bias) {
  if (conv3d_macs(g) >= kParallelThreshold) {
    omp::conv3d_grad_weight(g, in, grad_out, grad_weight, grad_bias);
  } else {
    serial::conv3d_grad_weight(g, in, grad_out, grad_weight, grad_bias);
  }
}

template <typename T>
void avg_pool3d(const PoolGeometry& g, std::span<const T> in, std::span<T> out) {
  if (avg_pool3d_macs(g) >= kParallelThreshold) {
    omp::avg_pool3d(g, in, out);
  } else {
    serial::avg_pool3d(g, in, out);
  }
}

template <typename T>
void avg_pool3d_grad(const PoolGeometry& g, std::span<const T> grad_out, std::span<T> grad_in) {
  if (avg_pool3d_macs(g) >= kParallelThreshold) {
    omp::avg_pool3d_grad(g, grad_out, grad_in);
  } else {
    serial::avg_pool3d_grad(g, grad_out, grad_in);
  }
}

#define MASTAF_INSTANTIATE(NS, T)                                                                 \
  template void NS matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t,   \
                             std::size_t, std::size_t);                                            \
  template void NS matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>,              \
                                std::size_t, std::size_t, std::size_t);                            \
  template void NS matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>,              \
                                std::size_t, std::size_t, std::size_t);                            \
  template void NS broadcast_mul<T>(std::span<const T>, std::span<const T>, std::span<T>,          \
                                    std::size_t, std::size_t);                                     \
  template void NS conv3d<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,          \
                             std::span<const T>, std::span<T>);                                    \
  template void NS conv3d_grad_input<T>(const ConvGeometry&, std::span<const T>,                   \
                                        std::span<const T>, std::span<T>);                         \
  template void NS conv3d_grad_weight<T>(const ConvGeometry&, std::span<const T>,                  \
                                         std::span<const T>, std::span<T>, std::span<T>);          \
  template void NS avg_pool3d<T>(const PoolGeometry&, std::span<const T>, std::span<T>);           \
  template void NS avg_pool3d_grad<T>(const PoolGeometry&, std::span<const T>, std::span<T>);

MASTAF_INSTANTIATE(serial::, float)
MASTAF_INSTANTIATE(serial::, double)
MASTAF_INSTANTIATE(omp::, float)
MASTAF_INSTANTIATE(omp::, double)
MASTAF_INSTANTIATE(, float)
MASTAF_INSTANTIATE(, double)
#undef MASTAF_INSTANTIATE

}  // namespace mastaf::kernels
