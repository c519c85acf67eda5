#pragma once

// Dense numeric kernels behind the differentiable ops.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `omp::`. The OpenMP versions partition the outermost output loop only and
// keep the inner accumulation order of the serial reference, so both produce
// bit-identical results. The top-level functions dispatch on problem size.

#include <cstddef>
#include <span>

namespace mastaf::kernels {

// Work (multiply-accumulates) below which the dispatchers stay serial.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t depth = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 3;  // cubic, odd, "same" zero padding, stride 1
};

struct PoolGeometry {
  std::size_t channels = 1;
  std::size_t depth = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t stride_d = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
};

#define MASTAF_KERNEL_DECLS                                                                         \
  /* c[M,N] = a[M,K] * b[K,N] */                                                                    \
  template <typename T>                                                                             \
  void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,           \
              std::size_t k, std::size_t n);                                                        \
  /* c[M,N] = a[K,M]^T * b[K,N] */                                                                  \
  template <typename T>                                                                             \
  void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,        \
                 std::size_t k, std::size_t n);                                                     \
  /* c[M,N] = a[M,K] * b[N,K]^T */                                                                  \
  template <typename T>                                                                             \
  void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,        \
                 std::size_t k, std::size_t n);                                                     \
  /* out[c,p] = cube[c,p] * map[p] */                                                               \
  template <typename T>                                                                             \
  void broadcast_mul(std::span<const T> cube, std::span<const T> map, std::span<T> out,            \
                     std::size_t channels, std::size_t positions);                                  \
  template <typename T>                                                                             \
  void conv3d(const ConvGeometry& g, std::span<const T> in, std::span<const T> weight,             \
              std::span<const T> bias, std::span<T> out);                                           \
  /* accumulates into grad_in */                                                                    \
  template <typename T>                                                                             \
  void conv3d_grad_input(const ConvGeometry& g, std::span<const T> grad_out,                        \
                         std::span<const T> weight, std::span<T> grad_in);                          \
  /* accumulates into grad_weight and grad_bias */                                                  \
  template <typename T>                                                                             \
  void conv3d_grad_weight(const ConvGeometry& g, std::span<const T> in,                             \
                          std::span<const T> grad_out, std::span<T> grad_weight,                    \
                          std::span<T> grad_bias);                                                  \
  template <typename T>                                                                             \
  void avg_pool3d(const PoolGeometry& g, std::span<const T> in, std::span<T> out);                  \
  /* accumulates into grad_in */                                                                    \
  template <typename T>                                                                             \
  void avg_pool3d_grad(const PoolGeometry& g, std::span<const T> grad_out, std::span<T> grad_in);

namespace serial {
MASTAF_KERNEL_DECLS
}  // namespace serial

namespace omp {
MASTAF_KERNEL_DECLS
}  // namespace omp

// Size-dispatching entry points.
MASTAF_KERNEL_DECLS

#undef MASTAF_KERNEL_DECLS

inline std::size_t conv3d_macs(const ConvGeometry& g) {
  return g.out_channels * g.depth * g.height * g.width * g.in_channels * g.kernel * g.kernel *
         g.kernel;
}

inline std::size_t pool_out_elems(const PoolGeometry& g) {
  return g.channels * (g.depth / g.stride_d) * (g.height / g.stride_h) * (g.width / g.stride_w);
}

inline std::size_t avg_pool3d_macs(const PoolGeometry& g) {
  return pool_out_elems(g) * g.stride_d * g.stride_h * g.stride_w;
}

}  // namespace mastaf::kernels
