#pragma once

#include <gtest/gtest.h>

#include <cstdint>

#include "mlagan/random.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan::testing {

inline Tensor<double> rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return uniform_tensor<double>(std::move(shape), lo, hi, rng);
}

inline void expect_near_all(const Tensor<double>& a, const Tensor<double>& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mlagan::testing
