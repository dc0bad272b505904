#pragma once

// Quadratic reference evaluations used only to cross-check the factored
// kernels. Deliberately naive: explicit norms, explicit double loops, no
// shared code with attention.hpp.

#include <cmath>
#include <cstddef>
#include <vector>

#include "mlagan/tensor.hpp"

namespace mlagan::oracle {

/// Row form of Taylor-map attention: weights (1 + q^_i . k^_j) summed directly.
template <typename T>
Tensor<T> brute_force_linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                       std::vector<T>* weights_out = nullptr) {
  const std::size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  if (k.dim(1) != d || v.dim(0) != nk) throw DimensionError("brute_force_linear_attention: shapes");
  auto unit = [d](const T* row) {
    T ss{0};
    for (std::size_t a = 0; a < d; ++a) ss += row[a] * row[a];
    const T norm = std::sqrt(ss);
    std::vector<T> u(d, T{0});
    if (norm > T{0})
      for (std::size_t a = 0; a < d; ++a) u[a] = row[a] / norm;
    return u;
  };
  std::vector<std::vector<T>> kh(nk);
  for (std::size_t j = 0; j < nk; ++j) kh[j] = unit(k.ptr() + j * d);

  Tensor<T> out({nq, dv});
  for (std::size_t i = 0; i < nq; ++i) {
    const std::vector<T> qh = unit(q.ptr() + i * d);
    T total{0};
    for (std::size_t j = 0; j < nk; ++j) {
      T cosine{0};
      for (std::size_t a = 0; a < d; ++a) cosine += qh[a] * kh[j][a];
      const T w = T{1} + cosine;
      if (weights_out) weights_out->push_back(w);
      total += w;
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += w * v[j * dv + c];
    }
    for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] /= total;
  }
  return out;
}

/// exp-weighted row form of dot-product attention, no max shift.
template <typename T>
Tensor<T> brute_force_softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  const std::size_t nq = q.dim(0), nk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  Tensor<T> out({nq, dv});
  for (std::size_t i = 0; i < nq; ++i) {
    T total{0};
    for (std::size_t j = 0; j < nk; ++j) {
      T s{0};
      for (std::size_t a = 0; a < d; ++a) s += q[i * d + a] * k[j * d + a];
      const T w = std::exp(s);
      total += w;
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += w * v[j * dv + c];
    }
    for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] /= total;
  }
  return out;
}

/// Direct double sum of the kernelised form with features phi(q_i), psi(k_j).
template <typename T>
Tensor<T> brute_force_kernel_attention(const Tensor<T>& phi, const Tensor<T>& psi, const Tensor<T>& v) {
  const std::size_t nq = phi.dim(0), nk = psi.dim(0), d = phi.dim(1), dv = v.dim(1);
  Tensor<T> out({nq, dv});
  for (std::size_t i = 0; i < nq; ++i) {
    T total{0};
    for (std::size_t j = 0; j < nk; ++j) {
      T s{0};
      for (std::size_t a = 0; a < d; ++a) s += phi[i * d + a] * psi[j * d + a];
      total += s;
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += s * v[j * dv + c];
    }
    for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] /= total;
  }
  return out;
}

template <typename T>
Tensor<T> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor<T> out({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      T s{0};
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * p + j];
      out[i * p + j] = s;
    }
  return out;
}

/// Six nested loops, zero padding, cross-correlation.
template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor<T> out({co, ho, wo});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xo = 0; xo < wo; ++xo) {
        T s{0};
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long iy = static_cast<long>(y * stride + a) - static_cast<long>(pad);
              const long ix = static_cast<long>(xo * stride + b) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              s += x.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                   w[((o * ci + c) * k + a) * k + b];
            }
        out.at(o, y, xo) = s;
      }
  return out;
}

}  // namespace mlagan::oracle
