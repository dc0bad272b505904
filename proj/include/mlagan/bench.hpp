#pragma once

// Wall time and transient memory of softmax vs linear attention as N grows.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlagan/attention.hpp"
#include "mlagan/error.hpp"
#include "mlagan/random.hpp"

namespace mlagan {

inline constexpr const char* kBenchHeader = "kernel,n,d,wall_time_ns,peak_transient_elements";

enum class BenchKernel { softmax, linear };

inline std::string to_string(BenchKernel k) { return k == BenchKernel::softmax ? "softmax" : "linear"; }

struct BenchRecord {
  BenchKernel kernel = BenchKernel::linear;
  std::size_t n = 0;
  std::size_t d = 0;
  std::int64_t wall_time_ns = 0;  // median over reps, warmup excluded
  std::size_t peak_transient_elements = 0;
};

struct BenchConfig {
  std::vector<std::size_t> sizes{256, 1024, 4096};
  std::size_t dim = 32;
  std::size_t reps = 7;
  std::uint64_t seed = 0;

  void validate() const {
    if (sizes.empty()) throw ConfigError("bench: no sizes given");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i] == 0) throw ConfigError("bench: sizes must be positive");
      if (i && sizes[i] <= sizes[i - 1]) throw ConfigError("bench: sizes must be strictly ascending");
    }
    if (dim == 0) throw ConfigError("bench: dim must be positive");
    if (reps < 5) throw ConfigError("bench: at least 5 repetitions are required");
  }
};

inline std::int64_t median_ns(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

/// Times one kernel on seeded N x D inputs: one warmup, then `reps` timed runs.
template <typename T = float>
BenchRecord bench_kernel(BenchKernel kernel, std::size_t n, std::size_t d, std::size_t reps, std::uint64_t seed) {
  Rng rng(mix_seed(seed, n));
  const Tensor<T> q = uniform_tensor<T>({n, d}, -1, 1, rng);
  const Tensor<T> k = uniform_tensor<T>({n, d}, -1, 1, rng);
  const Tensor<T> v = uniform_tensor<T>({n, d}, -1, 1, rng);
  auto run = [&](AttentionDiagnostics* diag) {
    return kernel == BenchKernel::softmax ? softmax_attention(q, k, v, diag)
                                          : linear_attention(q, k, v, T(kAttentionDenominatorEps), diag);
  };
  AttentionDiagnostics diag;
  volatile T sink = run(&diag)[0];
  std::vector<std::int64_t> times;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<T> out = run(nullptr);
    const auto t1 = std::chrono::steady_clock::now();
    sink = out[0];
    times.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }
  (void)sink;
  return {kernel, n, d, median_ns(std::move(times)), diag.peak_transient_elements};
}

template <typename T = float>
std::vector<BenchRecord> run_bench(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRecord> out;
  for (BenchKernel kernel : {BenchKernel::softmax, BenchKernel::linear})
    for (std::size_t n : cfg.sizes) out.push_back(bench_kernel<T>(kernel, n, cfg.dim, cfg.reps, cfg.seed));
  return out;
}

inline void write_bench_row(std::ostream& out, const BenchRecord& r) {
  out << to_string(r.kernel) << ',' << r.n << ',' << r.d << ',' << r.wall_time_ns << ','
      << r.peak_transient_elements << '\n';
}

inline std::optional<BenchRecord> find_record(const std::vector<BenchRecord>& rs, BenchKernel k, std::size_t n) {
  for (const auto& r : rs)
    if (r.kernel == k && r.n == n) return r;
  return std::nullopt;
}

/// Growth of one kernel between two sizes: time ratio and memory relative to
/// the N^2 and N*D + D^2 yardsticks.
struct ScalingSummary {
  BenchKernel kernel;
  std::size_t n_small = 0, n_large = 0;
  double time_ratio = 0;
  double peak_over_n2 = 0;         // at n_large
  double peak_over_linear = 0;     // at n_large, against N*D + D^2
};

inline ScalingSummary summarize_scaling(const std::vector<BenchRecord>& rs, BenchKernel k, std::size_t n_small,
                                        std::size_t n_large) {
  const auto a = find_record(rs, k, n_small);
  const auto b = find_record(rs, k, n_large);
  if (!a || !b) throw UsageError("summarize_scaling: sizes not present in the benchmark");
  ScalingSummary s{k, n_small, n_large};
  s.time_ratio = static_cast<double>(b->wall_time_ns) / static_cast<double>(std::max<std::int64_t>(a->wall_time_ns, 1));
  const double n = static_cast<double>(n_large), d = static_cast<double>(b->d);
  s.peak_over_n2 = static_cast<double>(b->peak_transient_elements) / (n * n);
  s.peak_over_linear = static_cast<double>(b->peak_transient_elements) / (n * d + d * d);
  return s;
}

}  // namespace mlagan
