#pragma once

// Central finite differences against reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mlagan/autodiff.hpp"

namespace mlagan {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_name;  // param name, or empty for a plain input
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// |a - b| / max(|a|, |b|, 1e-8)
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace detail {

inline void note(GradCheckResult& r, double analytic, double numeric, const std::string& name,
                 std::size_t idx) {
  const double e = relative_error(analytic, numeric);
  ++r.coords_checked;
  if (r.coords_checked == 1 || e > r.max_rel_err) {
    r.max_rel_err = e;
    r.worst_name = name;
    r.worst_index = idx;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

template <typename T>
T eval_scalar(const Var<T>& out) {
  if (out.value().size() != 1) throw UsageError("finite_diff_check: function must return a scalar");
  const T v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
  return v;
}

// Up to `limit` coordinates of [0, n), all of them when limit is 0 or >= n.
inline std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Checks d f / d x for a scalar-valued f built on a fresh tape.
template <typename T>
GradCheckResult finite_diff_check(const std::function<Var<T>(Tape<T>&, const Var<T>&)>& f,
                                  const Tensor<T>& x, T h = T(1e-5)) {
  if (!(h > T{0})) throw UsageError("finite_diff_check: step must be positive");
  Tensor<T> analytic;
  {
    Tape<T> tape;
    Var<T> xv = tape.variable(x);
    Var<T> out = f(tape, xv);
    detail::eval_scalar(out);
    tape.backward(out);
    analytic = tape.grad(xv);
  }
  auto eval_at = [&](const Tensor<T>& point) {
    Tape<T> tape(GradMode::off);
    return detail::eval_scalar(f(tape, tape.constant(point)));
  };
  GradCheckResult r;
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const T fp = eval_at(probe);
    probe[i] = x[i] - h;
    const T fm = eval_at(probe);
    probe[i] = x[i];
    detail::note(r, static_cast<double>(analytic[i]), static_cast<double>((fp - fm) / (2 * h)), "", i);
  }
  return r;
}

/// Checks gradients of a scalar loss with respect to each Param. The loss
/// builder must read the params through tape.param() so backward reaches them.
/// With max_coords_per_param > 0 a seeded subset of coordinates is probed.
///
/// Each coordinate is probed at every step in `steps` and scored by the best
/// agreeing estimate. A wrong gradient disagrees at all steps; a correct one
/// only looks wrong when one step is too large (a kink inside the stencil) or
/// too small (cancellation on a tiny gradient).
template <typename T>
GradCheckResult param_grad_check(const std::function<Var<T>(Tape<T>&)>& loss,
                                 const std::vector<Param<T>*>& params, const std::vector<T>& steps,
                                 std::size_t max_coords_per_param = 0, std::uint64_t seed = 0) {
  if (steps.empty()) throw UsageError("param_grad_check: no steps given");
  for (T h : steps)
    if (!(h > T{0})) throw UsageError("param_grad_check: step must be positive");
  for (Param<T>* p : params) p->zero_grad();
  {
    Tape<T> tape;
    Var<T> out = loss(tape);
    detail::eval_scalar(out);
    tape.backward(out);
  }
  std::vector<Tensor<T>> analytic;
  for (Param<T>* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape<T> tape(GradMode::off);
    return detail::eval_scalar(loss(tape));
  };
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<T>& p = *params[k];
    for (std::size_t i : detail::pick_coords(p.value.size(), max_coords_per_param, rng)) {
      const T orig = p.value[i];
      const double a = static_cast<double>(analytic[k][i]);
      double best = 0, best_err = std::numeric_limits<double>::infinity();
      for (T h : steps) {
        p.value[i] = orig + h;
        const T fp = eval();
        p.value[i] = orig - h;
        const T fm = eval();
        p.value[i] = orig;
        const double num = static_cast<double>((fp - fm) / (2 * h));
        if (relative_error(a, num) < best_err) {
          best_err = relative_error(a, num);
          best = num;
        }
      }
      detail::note(r, a, best, p.name, i);
    }
  }
  for (Param<T>* p : params) p->zero_grad();
  return r;
}

template <typename T>
GradCheckResult param_grad_check(const std::function<Var<T>(Tape<T>&)>& loss,
                                 const std::vector<Param<T>*>& params, T h = T(1e-5),
                                 std::size_t max_coords_per_param = 0, std::uint64_t seed = 0) {
  return param_grad_check(loss, params, std::vector<T>{h}, max_coords_per_param, seed);
}

}  // namespace mlagan
