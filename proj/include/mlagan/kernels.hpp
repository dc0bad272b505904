#pragma once

// Tape-free numeric kernels. Every differentiable op in autodiff.hpp calls into
// these for both its forward and its backward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "mlagan/tensor.hpp"

namespace mlagan::kernels {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
  }
  Tensor<T> out({m, p});
  const T* A = a.ptr();
  const T* B = b.ptr();
  T* C = out.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = C + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = A[i * k + kk];
      const T* brow = B + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  Tensor<T> out({m, n});
  const T* A = a.ptr();
  T* O = out.ptr();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) O[j * n + i] = A[i * m + j];
  return out;
}

/// aᵀ·b
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul_tn");
  require_rank(b, 2, "matmul_tn");
  const std::size_t n = a.dim(0), m = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul_tn: leading dims disagree " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor<T> out({m, p});
  const T* A = a.ptr();
  const T* B = b.ptr();
  T* C = out.ptr();
  for (std::size_t r = 0; r < n; ++r) {
    const T* arow = A + r * m;
    const T* brow = B + r * p;
    for (std::size_t i = 0; i < m; ++i) {
      const T ari = arow[i];
      T* crow = C + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += ari * brow[j];
    }
  }
  return out;
}

/// a·bᵀ
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  return matmul(a, transpose(b));
}

/// Output extent of a convolution; rejects geometries that do not divide evenly.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
  if (stride == 0 || k == 0) throw DimensionError("conv: stride and kernel must be positive");
  const std::size_t padded = in + 2 * pad;
  if (padded < k) throw DimensionError("conv: kernel larger than padded input");
  if ((padded - k) % stride != 0) {
    throw DimensionError("conv: non-integral output size for extent " + std::to_string(in) +
                         ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                         ", pad=" + std::to_string(pad));
  }
  return (padded - k) / stride + 1;
}

/// Extent a transposed convolution produces from `in` (inverse of conv_out_extent).
inline std::size_t conv_transpose_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                             std::size_t pad) {
  if (stride == 0 || k == 0) throw DimensionError("conv_transpose: stride and kernel must be positive");
  const std::size_t full = (in - 1) * stride + k;
  if (full <= 2 * pad) throw DimensionError("conv_transpose: padding consumes the whole output");
  return full - 2 * pad;
}

struct ConvGeometry {
  std::size_t channels, height, width, k, stride, pad, out_h, out_w;
};

/// Unfolds x[C×H×W] into columns [(C·k·k) × (out_h·out_w)].
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& g) {
  Tensor<T> cols({g.channels * g.k * g.k, g.out_h * g.out_w});
  const T* X = x.ptr();
  T* Cp = cols.ptr();
  const std::size_t ncol = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = Cp + ((c * g.k + ki) * g.k + kj) * ncol;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          const T* xrow = X + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
            row[oh * g.out_w + ow] = xrow[iw];
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatter-adds columns back into a C×H×W map.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const ConvGeometry& g) {
  Tensor<T> x({g.channels, g.height, g.width});
  const T* Cp = cols.ptr();
  T* X = x.ptr();
  const std::size_t ncol = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = Cp + ((c * g.k + ki) * g.k + kj) * ncol;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          T* xrow = X + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
            xrow[iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
  return x;
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                           std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  if (w.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(0)) +
                         " channels, weight expects " + std::to_string(w.dim(1)));
  }
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: kernel must be square");
  const std::size_t k = w.dim(2);
  return ConvGeometry{x.dim(0), x.dim(1), x.dim(2), k, stride, pad,
                      conv_out_extent(x.dim(1), k, stride, pad),
                      conv_out_extent(x.dim(2), k, stride, pad)};
}

/// Cross-correlation: x[Ci×H×W], w[Co×Ci×k×k] -> [Co×H'×W'].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  const ConvGeometry g = conv_geometry(x, w, stride, pad);
  const std::size_t co = w.dim(0);
  Tensor<T> wmat = w.reshaped({co, g.channels * g.k * g.k});
  Tensor<T> out = matmul(wmat, im2col(x, g));
  return out.reshaped({co, g.out_h, g.out_w});
}

/// Geometry of the conv2d whose adjoint maps y[Co×h×w] through weight w[Co×Ci×k×k].
template <typename T>
ConvGeometry conv_transpose_geometry(const Tensor<T>& y, const Tensor<T>& w, std::size_t stride,
                                     std::size_t pad) {
  require_rank(y, 3, "conv2d_transpose");
  require_rank(w, 4, "conv2d_transpose");
  if (w.dim(0) != y.dim(0)) {
    throw DimensionError("conv2d_transpose: input has " + std::to_string(y.dim(0)) +
                         " channels, weight expects " + std::to_string(w.dim(0)));
  }
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d_transpose: kernel must be square");
  const std::size_t k = w.dim(2);
  ConvGeometry g{w.dim(1),
                 conv_transpose_out_extent(y.dim(1), k, stride, pad),
                 conv_transpose_out_extent(y.dim(2), k, stride, pad),
                 k, stride, pad, y.dim(1), y.dim(2)};
  // the forward conv on the produced map must land back on y's extents
  if (conv_out_extent(g.height, k, stride, pad) != g.out_h ||
      conv_out_extent(g.width, k, stride, pad) != g.out_w) {
    throw DimensionError("conv2d_transpose: inconsistent geometry");
  }
  return g;
}

/// Exact linear adjoint of conv2d: y[Co×h×w], w[Co×Ci×k×k] -> [Ci×H×W].
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& y, const Tensor<T>& w, std::size_t stride,
                           std::size_t pad) {
  const ConvGeometry g = conv_transpose_geometry(y, w, stride, pad);
  const std::size_t co = w.dim(0);
  Tensor<T> wmat = w.reshaped({co, g.channels * g.k * g.k});
  Tensor<T> cols = matmul_tn(wmat, y.reshaped({co, g.out_h * g.out_w}));
  return col2im(cols, g);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.ptr() + i * m;
    T* orow = out.ptr() + i * m;
    const T mx = *std::max_element(row, row + m);
    T total{0};
    for (std::size_t j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < m; ++j) orow[j] /= total;
  }
  return out;
}

template <typename T>
std::vector<T> row_norms(const Tensor<T>& x) {
  require_rank(x, 2, "row_norms");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<T> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    T ss{0};
    for (std::size_t j = 0; j < d; ++j) ss += x[i * d + j] * x[i * d + j];
    norms[i] = std::sqrt(ss);
  }
  return norms;
}

/// Row i -> x_i / max(|x_i|, eps).
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps) {
  if (!(eps > T{0})) throw UsageError("l2_normalize_rows: eps must be positive");
  const std::vector<T> norms = row_norms(x);
  const std::size_t d = x.dim(1);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const T denom = std::max(norms[i], eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] / denom;
  }
  return out;
}

}  // namespace mlagan::kernels
