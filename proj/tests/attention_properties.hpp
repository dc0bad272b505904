#pragma once

// Property checks over seeded random attention instances. Shared by the unit
// tests and the acceptance suite; each returns the worst observed deviation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "mlagan/attention.hpp"
#include "mlagan/oracle.hpp"
#include "mlagan/random.hpp"

namespace mlagan::props {

struct Instance {
  Tensor<double> q, k, v;
};

inline Instance random_instance(std::uint64_t seed, std::size_t max_n = 64, std::size_t max_d = 16) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> nd(1, max_n), dd(1, max_d);
  const std::size_t n = nd(rng), dk = dd(rng), dv = dd(rng);
  return {normal_tensor<double>({n, dk}, 1.0, rng), normal_tensor<double>({n, dk}, 1.0, rng),
          normal_tensor<double>({n, dv}, 1.0, rng)};
}

inline double max_rel_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

inline Tensor<double> permute_rows(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  const std::size_t d = x.dim(1);
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(x.ptr() + perm[i] * d, d, out.ptr() + i * d);
  return out;
}

template <typename Fn>
double permutation_equivariance(const Instance& in, std::uint64_t seed, Fn attend) {
  Rng rng(seed);
  std::vector<std::size_t> pq(in.q.dim(0)), pk(in.k.dim(0));
  std::iota(pq.begin(), pq.end(), std::size_t{0});
  std::iota(pk.begin(), pk.end(), std::size_t{0});
  std::shuffle(pq.begin(), pq.end(), rng);
  std::shuffle(pk.begin(), pk.end(), rng);
  const Tensor<double> base = attend(in.q, in.k, in.v);
  // permuting queries permutes the output rows
  const double dq = max_rel_diff(attend(permute_rows(in.q, pq), in.k, in.v), permute_rows(base, pq));
  // permuting keys and values jointly changes nothing
  const double dkv = max_rel_diff(attend(in.q, permute_rows(in.k, pk), permute_rows(in.v, pk)), base);
  return std::max(dq, dkv);
}

/// Largest amount by which an output entry escapes [min, max] of its V column.
inline double convex_hull_violation(const Tensor<double>& out, const Tensor<double>& v) {
  const std::size_t dv = v.dim(1);
  double worst = 0;
  for (std::size_t c = 0; c < dv; ++c) {
    double lo = v[c], hi = v[c];
    for (std::size_t j = 0; j < v.dim(0); ++j) {
      lo = std::min(lo, v[j * dv + c]);
      hi = std::max(hi, v[j * dv + c]);
    }
    for (std::size_t i = 0; i < out.dim(0); ++i) {
      const double o = out[i * dv + c];
      worst = std::max({worst, lo - o, o - hi});
    }
  }
  return worst;
}

inline double row_stochastic_error(const Tensor<double>& w) {
  double worst = 0;
  for (std::size_t i = 0; i < w.dim(0); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < w.dim(1); ++j) {
      if (w.at(i, j) < 0) return 1.0;
      s += w.at(i, j);
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

/// Rescale every row of Q and K by its own positive factor; linear attention must not move.
inline double scale_invariance(const Instance& in, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> f(0.05, 20.0);
  auto rescale = [&](Tensor<double> x) {
    for (std::size_t i = 0; i < x.dim(0); ++i) {
      const double s = f(rng);
      for (std::size_t j = 0; j < x.dim(1); ++j) x.at(i, j) *= s;
    }
    return x;
  };
  const Tensor<double> base = linear_attention(in.q, in.k, in.v);
  return max_rel_diff(linear_attention(rescale(in.q), rescale(in.k), in.v), base);
}

}  // namespace mlagan::props
