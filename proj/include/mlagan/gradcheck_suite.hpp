#pragma once

// The full set of finite-difference checks, shared by the CLI, the unit tests
// and the acceptance run. Primitives are held to 1e-6, composites to 1e-4,
// all in double precision.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlagan/attention.hpp"
#include "mlagan/gan.hpp"
#include "mlagan/gradcheck.hpp"
#include "mlagan/models.hpp"
#include "mlagan/random.hpp"

namespace mlagan {

inline constexpr double kPrimitiveGradTol = 1e-6;
inline constexpr double kCompositeGradTol = 1e-4;

struct GradCase {
  std::string name;
  bool composite = false;
  std::function<GradCheckResult(std::uint64_t seed)> run;

  double tolerance() const { return composite ? kCompositeGradTol : kPrimitiveGradTol; }
};

struct GradCaseOutcome {
  std::string name;
  bool composite = false;
  double tolerance = 0;
  GradCheckResult result;

  bool passed() const { return result.max_rel_err < tolerance; }
};

namespace detail {

using TapeD = Tape<double>;
using VarD = Var<double>;
using UnaryD = std::function<VarD(TapeD&, const VarD&)>;

inline Tensor<double> suite_tensor(Shape shape, std::uint64_t seed, std::uint64_t salt, double lo = -1,
                                   double hi = 1) {
  Rng rng(mix_seed(seed, salt));
  return uniform_tensor<double>(std::move(shape), lo, hi, rng);
}

/// Wraps a scalar function of one input tensor.
inline GradCase input_case(std::string name, Shape shape, std::function<UnaryD(std::uint64_t)> make,
                           bool composite = false, double lo = -1, double hi = 1) {
  return {name, composite, [=](std::uint64_t seed) {
            return finite_diff_check<double>(make(seed), suite_tensor(shape, seed, 0, lo, hi));
          }};
}

}  // namespace detail

/// Every differentiable primitive, each probed through a smooth scalar read-out.
inline std::vector<GradCase> primitive_grad_cases() {
  using detail::suite_tensor;
  using detail::TapeD;
  using detail::UnaryD;
  using detail::VarD;
  // sum(y * probe) with a fixed random probe, so every output coordinate matters
  auto weighted = [](std::uint64_t seed, Shape s) {
    return [probe = suite_tensor(std::move(s), seed, 99)](TapeD& t, const VarD& y) {
      return ad::sum(ad::mul(y, t.constant(probe)));
    };
  };
  auto pointwise = [weighted](std::function<VarD(const VarD&)> op) {
    return [=](std::uint64_t seed) -> UnaryD {
      auto read = weighted(seed, {3, 4});
      return [=](TapeD& t, const VarD& x) { return read(t, op(x)); };
    };
  };
  using detail::input_case;
  return {
      input_case("matmul_left", {2, 3},
                 [](std::uint64_t s) -> UnaryD {
                   return [m = suite_tensor({3, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::matmul(x, t.constant(m))));
                   };
                 }),
      input_case("matmul_right", {3, 4},
                 [](std::uint64_t s) -> UnaryD {
                   return [m = suite_tensor({4, 3}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::matmul(t.constant(m), x)));
                   };
                 }),
      input_case("transpose", {4, 3},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {3, 4});
                   return [read](TapeD& t, const VarD& x) { return read(t, ad::transpose(x)); };
                 }),
      input_case("add", {3, 4},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {3, 4});
                   return [read, m = suite_tensor({3, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return read(t, ad::add(ad::mul(x, x), t.constant(m)));
                   };
                 }),
      input_case("sub", {3, 4},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {3, 4});
                   return [read, m = suite_tensor({3, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return read(t, ad::sub(t.constant(m), ad::mul(x, x)));
                   };
                 }),
      input_case("mul", {3, 4},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {3, 4});
                   return [read, m = suite_tensor({3, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return read(t, ad::mul(x, t.constant(m)));
                   };
                 }),
      input_case("scale", {3, 4}, pointwise([](const VarD& x) { return ad::scale(ad::mul(x, x), -1.7); })),
      input_case("add_scalar", {3, 4}, pointwise([](const VarD& x) { return ad::mul(ad::add_scalar(x, 0.3), x); })),
      input_case("relu", {3, 4}, pointwise([](const VarD& x) { return ad::relu(x); })),
      input_case("leaky_relu", {3, 4}, pointwise([](const VarD& x) { return ad::leaky_relu(x, 0.2); })),
      input_case("sigmoid", {3, 4}, pointwise([](const VarD& x) { return ad::sigmoid(ad::scale(x, 3.0)); })),
      input_case("tanh", {3, 4}, pointwise([](const VarD& x) { return ad::tanh(x); })),
      input_case("abs", {3, 4}, pointwise([](const VarD& x) { return ad::abs(x); })),
      input_case("log_clamped", {3, 4}, pointwise([](const VarD& x) { return ad::log_clamped(ad::sigmoid(x), 1e-7); })),
      input_case("sum_axes", {3, 4},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::sum(ad::tanh(ad::sum(x, {1}))); };
                 }),
      input_case("mean_axes", {3, 4},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::sum(ad::tanh(ad::mean(x, {0}))); };
                 }),
      input_case("concat", {3, 4},
                 [](std::uint64_t s) -> UnaryD {
                   return [m = suite_tensor({3, 2}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::concat<double>({x, ad::mul(x, x), t.constant(m)}, 1)));
                   };
                 }),
      input_case("slice", {3, 4},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::sum(ad::tanh(ad::slice(x, 1, 1, 2))); };
                 }),
      input_case("split", {4, 3},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) {
                     const auto parts = ad::split(x, 0, 2);
                     return ad::sum(ad::tanh(ad::mul(parts[0], parts[1])));
                   };
                 }),
      input_case("reshape", {3, 4},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::sum(ad::tanh(ad::reshape(x, {2, 6}))); };
                 }),
      input_case("softmax_rows", {3, 4}, pointwise([](const VarD& x) { return ad::softmax_rows(x); })),
      input_case("l2_normalize_rows", {3, 4},
                 pointwise([](const VarD& x) { return ad::l2_normalize_rows(x, 1e-12); })),
      input_case("conv2d_input", {2, 6, 6},
                 [](std::uint64_t s) -> UnaryD {
                   return [w = suite_tensor({3, 2, 3, 3}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::conv2d(x, t.constant(w), 1, 1)));
                   };
                 }),
      input_case("conv2d_weight", {3, 2, 3, 3},
                 [](std::uint64_t s) -> UnaryD {
                   return [x = suite_tensor({2, 6, 6}, s, 1)](TapeD& t, const VarD& w) {
                     return ad::sum(ad::tanh(ad::conv2d(t.constant(x), w, 1, 1)));
                   };
                 }),
      input_case("conv2d_strided", {2, 6, 6},
                 [](std::uint64_t s) -> UnaryD {
                   return [w = suite_tensor({3, 2, 4, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::conv2d(x, t.constant(w), 2, 1)));
                   };
                 }),
      input_case("conv2d_transpose_input", {2, 3, 3},
                 [](std::uint64_t s) -> UnaryD {
                   return [w = suite_tensor({2, 3, 4, 4}, s, 1)](TapeD& t, const VarD& x) {
                     return ad::sum(ad::tanh(ad::conv2d_transpose(x, t.constant(w), 2, 1)));
                   };
                 }),
      input_case("conv2d_transpose_weight", {2, 3, 4, 4},
                 [](std::uint64_t s) -> UnaryD {
                   return [x = suite_tensor({2, 3, 3}, s, 1)](TapeD& t, const VarD& w) {
                     return ad::sum(ad::tanh(ad::conv2d_transpose(t.constant(x), w, 2, 1)));
                   };
                 }),
      input_case("add_channel_bias", {3},
                 [](std::uint64_t s) -> UnaryD {
                   return [x = suite_tensor({3, 2, 2}, s, 1)](TapeD& t, const VarD& b) {
                     return ad::sum(ad::tanh(ad::add_channel_bias(t.constant(x), b)));
                   };
                 }),
      input_case("linear_attention_core_q", {6, 4},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {6, 3});
                   return [read, k = suite_tensor({6, 4}, s, 1), v = suite_tensor({6, 3}, s, 2)](TapeD& t,
                                                                                                const VarD& q) {
                     const VarD kn = ad::l2_normalize_rows(t.constant(k), 1e-12);
                     return read(t, ad::linear_attention_core(ad::l2_normalize_rows(q, 1e-12), kn, t.constant(v), 1e-6));
                   };
                 }),
      input_case("linear_attention_core_k", {6, 4},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {6, 3});
                   return [read, q = suite_tensor({6, 4}, s, 1), v = suite_tensor({6, 3}, s, 2)](TapeD& t,
                                                                                                const VarD& k) {
                     const VarD qn = ad::l2_normalize_rows(t.constant(q), 1e-12);
                     return read(t, ad::linear_attention_core(qn, ad::l2_normalize_rows(k, 1e-12), t.constant(v), 1e-6));
                   };
                 }),
      input_case("linear_attention_core_v", {6, 3},
                 [weighted](std::uint64_t s) -> UnaryD {
                   auto read = weighted(s, {6, 3});
                   return [read, q = suite_tensor({6, 4}, s, 1), k = suite_tensor({6, 4}, s, 2)](TapeD& t,
                                                                                                const VarD& v) {
                     const VarD qn = ad::l2_normalize_rows(t.constant(q), 1e-12);
                     const VarD kn = ad::l2_normalize_rows(t.constant(k), 1e-12);
                     return read(t, ad::linear_attention_core(qn, kn, v, 1e-6));
                   };
                 }),
      input_case("l1_loss", {3, 3, 3},
                 [](std::uint64_t s) -> UnaryD {
                   return [gt = suite_tensor({3, 3, 3}, s, 1, 0, 1)](TapeD& t, const VarD& x) {
                     return ad::l1_loss(t.constant(gt), x, {2.0, 100.0, 0.5});
                   };
                 },
                 false, 0, 1),
      input_case("d_loss", {1, 3, 3},
                 [](std::uint64_t s) -> UnaryD {
                   return [f = suite_tensor({1, 3, 3}, s, 1, 0.05, 0.95)](TapeD& t, const VarD& x) {
                     return ad::d_loss(x, t.constant(f), 1e-7);
                   };
                 },
                 false, 0.05, 0.95),
      input_case("g_adv_loss", {1, 3, 3},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::g_adv_loss(x, 1e-7); };
                 },
                 false, 0.05, 0.95),
      input_case("g_adv_loss_literal", {1, 3, 3},
                 [](std::uint64_t) -> UnaryD {
                   return [](TapeD&, const VarD& x) { return ad::g_adv_loss(x, 1e-7, true); };
                 },
                 false, 0.05, 0.95),
  };
}

/// Attention block, multi-head attention, discriminator and generator end to end.
inline std::vector<GradCase> composite_grad_cases() {
  using detail::suite_tensor;
  using detail::TapeD;
  using detail::VarD;
  std::vector<GradCase> out;

  auto qkv_case = [](std::string name, bool softmax) {
    return detail::input_case(
        std::move(name), {8, 4},
        [softmax](std::uint64_t seed) -> detail::UnaryD {
          return [softmax, k = suite_tensor({8, 4}, seed, 1), v = suite_tensor({8, 3}, seed, 2),
                  probe = suite_tensor({8, 3}, seed, 3)](TapeD& t, const VarD& q) {
            const VarD y = softmax ? ad::softmax_attention(q, t.constant(k), t.constant(v))
                                   : ad::linear_attention(q, ad::scale(q, 0.5), t.constant(v));
            return ad::sum(ad::mul(y, t.constant(probe)));
          };
        },
        true);
  };
  out.push_back(qkv_case("softmax_attention", true));
  out.push_back(qkv_case("linear_attention", false));

  out.push_back({"multi_head_linear_attention_x", true, [](std::uint64_t seed) {
                   const AttentionConfig cfg = AttentionConfig::for_width(8, 2);
                   Rng rng(mix_seed(seed, 10));
                   auto w = std::make_shared<AttentionWeights<double>>(AttentionWeights<double>::init(cfg, rng));
                   const Tensor<double> probe = suite_tensor({10, 8}, seed, 11);
                   return finite_diff_check<double>(
                       [w, cfg, probe](TapeD& t, const VarD& x) {
                         return ad::sum(ad::mul(multi_head_linear_attention(x, *w, cfg, ParamUse::freeze),
                                                t.constant(probe)));
                       },
                       suite_tensor({10, 8}, seed, 12));
                 }});
  out.push_back({"multi_head_linear_attention_params", true, [](std::uint64_t seed) {
                   const AttentionConfig cfg = AttentionConfig::for_width(8, 2);
                   Rng rng(mix_seed(seed, 10));
                   AttentionWeights<double> w = AttentionWeights<double>::init(cfg, rng);
                   const Tensor<double> x = suite_tensor({10, 8}, seed, 12);
                   const Tensor<double> probe = suite_tensor({10, 8}, seed, 11);
                   return param_grad_check<double>(
                       [&](TapeD& t) {
                         return ad::sum(ad::mul(multi_head_linear_attention(t.constant(x), w, cfg), t.constant(probe)));
                       },
                       w.parameters(), 1e-5);
                 }});
  out.push_back({"attention_block", true, [](std::uint64_t seed) {
                   const AttentionConfig cfg = AttentionConfig::for_width(4, 2);
                   Rng rng(mix_seed(seed, 20));
                   AttentionWeights<double> w = AttentionWeights<double>::init(cfg, rng);
                   const Tensor<double> x = suite_tensor({4, 3, 3}, seed, 21);
                   const Tensor<double> probe = suite_tensor({4, 3, 3}, seed, 22);
                   auto loss = [&](TapeD& t, const VarD& in, ParamUse use) {
                     return ad::sum(ad::mul(attention_block(in, w, cfg, use), t.constant(probe)));
                   };
                   GradCheckResult r = finite_diff_check<double>(
                       [&](TapeD& t, const VarD& in) { return loss(t, in, ParamUse::freeze); }, x);
                   const GradCheckResult rp = param_grad_check<double>(
                       [&](TapeD& t) { return loss(t, t.constant(x), ParamUse::train); }, w.parameters(), 1e-5);
                   if (rp.max_rel_err > r.max_rel_err) {
                     const std::size_t n = r.coords_checked;
                     r = rp;
                     r.coords_checked += n;
                   } else {
                     r.coords_checked += rp.coords_checked;
                   }
                   return r;
                 }});
  out.push_back({"discriminator", true, [](std::uint64_t seed) {
                   Discriminator<double> d(DiscriminatorConfig::for_images(3), mix_seed(seed, 30));
                   const Tensor<double> x = suite_tensor({3, 8, 8}, seed, 31, 0, 1);
                   const Tensor<double> y = suite_tensor({3, 8, 8}, seed, 32, 0, 1);
                   return param_grad_check<double>(
                       [&](TapeD& t) { return ad::mean(d.forward(t.constant(x), t.constant(y))); }, d.parameters(),
                       std::vector<double>{1e-4, 1e-5, 1e-6}, 8, seed);
                 }});
  out.push_back({"generator_3x8x8", true, [](std::uint64_t seed) {
                   GeneratorConfig cfg;
                   cfg.side = 8;
                   Generator<double> g(cfg, mix_seed(seed, 40));
                   const Tensor<double> x = suite_tensor({3, 8, 8}, seed, 41, 0, 1);
                   const Tensor<double> probe = suite_tensor({3, 8, 8}, seed, 42);
                   GradCheckResult r = param_grad_check<double>(
                       [&](TapeD& t) { return ad::sum(ad::mul(g.forward(t.constant(x)), t.constant(probe))); },
                       g.parameters(), std::vector<double>{1e-4, 1e-5, 1e-6}, 8, seed);
                   const GradCheckResult rx = finite_diff_check<double>(
                       [&](TapeD& t, const VarD& in) {
                         return ad::sum(ad::mul(g.forward(in, ParamUse::freeze), t.constant(probe)));
                       },
                       x);
                   if (rx.max_rel_err > r.max_rel_err) {
                     const std::size_t n = r.coords_checked;
                     r = rx;
                     r.worst_name = "input";
                     r.coords_checked += n;
                   } else {
                     r.coords_checked += rx.coords_checked;
                   }
                   return r;
                 }});
  return out;
}

inline std::vector<GradCase> all_grad_cases() {
  std::vector<GradCase> out = primitive_grad_cases();
  for (auto& c : composite_grad_cases()) out.push_back(std::move(c));
  return out;
}

inline std::vector<GradCaseOutcome> run_grad_cases(const std::vector<GradCase>& cases, std::uint64_t seed) {
  std::vector<GradCaseOutcome> out;
  for (const auto& c : cases) out.push_back({c.name, c.composite, c.tolerance(), c.run(seed)});
  return out;
}

}  // namespace mlagan
