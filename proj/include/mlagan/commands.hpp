#pragma once

// The command-line operations as plain functions: synth, train (and the head
// ablation), eval, bench and gradcheck.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlagan/bench.hpp"
#include "mlagan/csv.hpp"
#include "mlagan/data.hpp"
#include "mlagan/gan.hpp"
#include "mlagan/gradcheck_suite.hpp"
#include "mlagan/metrics.hpp"
#include "mlagan/models.hpp"

namespace mlagan::cli {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFile = "checkpoint.ckpt";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kEvalFile = "eval.csv";
inline constexpr const char* kAblationFile = "ablation.csv";
inline constexpr const char* kAblationHeader =
    "method,attention,heads,steps,seed,psnr_db,ssim,baseline_psnr_db,baseline_ssim,wall_time_s";

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::size_t n = 200;
  std::size_t side = 32;
  std::uint64_t seed = 7;
  double max_opacity = 0.9;
  fs::path out;
};

inline void cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("synth: --out is required");
  const Split<float> split = make_dataset<float>(o.n, o.side, o.seed, o.max_opacity);
  write_dataset(split, o.out);
  log << "synth: " << o.n << " pairs (" << split.train.size() << " train, " << split.test.size() << " test), "
      << o.side << "x" << o.side << ", seed " << o.seed << " -> " << o.out.string() << '\n';
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct ModelOptions {
  std::size_t heads = 4;
  std::size_t base_channels = 16;
  std::size_t levels = 3;
  EncoderKind encoder = EncoderKind::attention;

  GeneratorConfig generator(std::size_t side) const {
    GeneratorConfig g;
    g.heads = heads;
    g.base_channels = base_channels;
    g.levels = levels;
    g.encoder = encoder;
    g.side = side;
    g.validate();
    return g;
  }
};

struct TrainOptions {
  fs::path data;
  fs::path out;
  std::optional<fs::path> resume;
  ModelOptions model;
  TrainConfig train;
  bool allow_skip = false;
};

inline std::size_t image_side(const Split<float>& s) {
  const auto& first = s.train.empty() ? s.test.front() : s.train.front();
  if (first.cloudy.dim(1) != first.cloudy.dim(2)) throw DimensionError("training images must be square");
  return first.cloudy.dim(1);
}

inline MetricReport baseline_report(const std::vector<ImagePair<float>>& pairs) {
  std::vector<EvalPair<float>> view;
  for (const auto& p : pairs) view.push_back({p.id, &p.cloudy, &p.clear});
  return evaluate_pairs<float>(view);
}

inline void write_report_file(const MetricReport& r, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  write_report_csv(r, f);
  if (!f) throw IoError("write failed for " + path.string());
}

struct TrainOutcome {
  MetricReport baseline;
  MetricReport final_report;
  std::vector<TraceRow> trace;
  std::uint64_t steps_done = 0;
  double wall_time_s = 0;
};

/// Trains on an in-memory split and writes checkpoint, trace and final eval under `out`.
inline TrainOutcome train_on_split(const Split<float>& split, const fs::path& out, const ModelOptions& model,
                                   const TrainConfig& tc, const std::optional<fs::path>& resume, std::ostream& log) {
  const GeneratorConfig gcfg = model.generator(image_side(split));
  Trainer<float> trainer(gcfg, tc);
  if (resume) trainer.resume(*resume);
  fs::create_directories(out);
  TrainOutcome r;
  r.baseline = baseline_report(split.test);
  std::ofstream trace = open_csv(out / kTraceFile, kTraceHeader, resume.has_value());
  const auto t0 = std::chrono::steady_clock::now();
  r.trace = trainer.run(split, [&](const TraceRow& row) {
    write_trace_row(trace, row);
    trace.flush();
    log << "step " << row.step << "/" << tc.steps << " d_loss " << row.m.d_loss << " g_adv " << row.m.g_adv
        << " l1 " << row.m.l1 << " psnr " << format_psnr(row.psnr_eval) << " ssim " << row.ssim_eval << '\n';
  });
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.steps_done = trainer.step();
  trainer.save(out / kCheckpointFile);
  r.final_report = trainer.evaluate(split.test);
  write_report_file(r.final_report, out / kEvalFile);
  return r;
}

inline TrainOutcome cmd_train(const TrainOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("train: --out is required");
  const LoadedPairs<float> data = load_dataset<float>(o.data, o.allow_skip);
  TrainOutcome r = train_on_split(data.split, o.out, o.model, o.train, o.resume, log);
  log << std::setprecision(6) << "train: " << r.steps_done << " steps in " << r.wall_time_s << " s; held-out PSNR "
      << format_psnr(r.baseline.mean_psnr) << " -> " << format_psnr(r.final_report.mean_psnr) << " dB, SSIM "
      << r.baseline.mean_ssim << " -> " << r.final_report.mean_ssim << "; checkpoint "
      << (o.out / kCheckpointFile).string() << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// ablation over the encoder block
// ---------------------------------------------------------------------------

struct AblationArm {
  EncoderKind encoder;
  std::size_t heads;

  std::string method() const { return encoder == EncoderKind::conv ? "MC-GAN" : "MLA-GAN"; }
  std::string label() const {
    return encoder == EncoderKind::conv ? std::string("conv") : "heads" + std::to_string(heads);
  }
};

inline std::vector<AblationArm> default_ablation_arms() {
  return {{EncoderKind::conv, 4}, {EncoderKind::attention, 1}, {EncoderKind::attention, 2}, {EncoderKind::attention, 4}};
}

struct AblationRow {
  AblationArm arm;
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  double psnr_db = 0, ssim = 0;
  double baseline_psnr_db = 0, baseline_ssim = 0;
  double wall_time_s = 0;
};

inline void write_ablation_row(std::ostream& out, const AblationRow& r) {
  out << r.arm.method() << ',' << (r.arm.encoder == EncoderKind::conv ? "no" : "yes") << ','
      << (r.arm.encoder == EncoderKind::conv ? std::string("-") : std::to_string(r.arm.heads)) << ',' << r.steps
      << ',' << r.seed << ',' << std::setprecision(8) << format_psnr(r.psnr_db) << ',' << r.ssim << ','
      << format_psnr(r.baseline_psnr_db) << ',' << r.baseline_ssim << ',' << std::setprecision(4) << r.wall_time_s
      << '\n';
}

/// Trains every arm from the same seed on the same split; one CSV row per arm.
inline std::vector<AblationRow> run_ablation(const Split<float>& split, const fs::path& out, const ModelOptions& base,
                                             const TrainConfig& tc, const std::vector<AblationArm>& arms,
                                             std::ostream& log) {
  fs::create_directories(out);
  std::ofstream csv = open_csv(out / kAblationFile, kAblationHeader);
  std::vector<AblationRow> rows;
  for (const auto& arm : arms) {
    ModelOptions m = base;
    m.encoder = arm.encoder;
    m.heads = arm.heads;
    log << "ablation: arm " << arm.label() << '\n';
    const TrainOutcome r = train_on_split(split, out / arm.label(), m, tc, std::nullopt, log);
    rows.push_back({arm, r.steps_done, tc.seed, r.final_report.mean_psnr, r.final_report.mean_ssim,
                    r.baseline.mean_psnr, r.baseline.mean_ssim, r.wall_time_s});
    write_ablation_row(csv, rows.back());
    csv.flush();
  }
  log << "ablation summary (directional, not asserted):\n";
  for (const auto& r : rows) {
    log << "  " << std::left << std::setw(8) << r.arm.label() << std::right << " PSNR " << format_psnr(r.psnr_db)
        << " dB (" << std::showpos << r.psnr_db - r.baseline_psnr_db << std::noshowpos << " vs input), SSIM "
        << r.ssim << '\n';
  }
  return rows;
}

inline std::vector<AblationRow> cmd_ablation(const TrainOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ConfigError("train: --out is required");
  if (o.resume) throw ConfigError("--ablation cannot be combined with --resume");
  const LoadedPairs<float> data = load_dataset<float>(o.data, o.allow_skip);
  return run_ablation(data.split, o.out, o.model, o.train, default_ablation_arms(), log);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

enum class EvalSplit { test, train, all };

struct EvalOptions {
  fs::path data;
  std::optional<fs::path> checkpoint;
  ModelOptions model;
  EvalSplit split = EvalSplit::test;
  std::optional<fs::path> out;
  bool allow_skip = false;
};

inline MetricReport cmd_eval(const EvalOptions& o, std::ostream& csv) {
  const LoadedPairs<float> data = load_dataset<float>(o.data, o.allow_skip);
  std::vector<ImagePair<float>> pairs;
  if (o.split != EvalSplit::train) pairs = data.split.test;
  if (o.split != EvalSplit::test) pairs.insert(pairs.end(), data.split.train.begin(), data.split.train.end());
  if (pairs.empty()) throw IoError("eval: selected split is empty");
  std::vector<EvalPair<float>> view;
  for (const auto& p : pairs) view.push_back({p.id, &p.cloudy, &p.clear});
  MetricReport report;
  if (o.checkpoint) {
    Generator<float> gen(o.model.generator(pairs.front().cloudy.dim(1)), 0);
    load_generator(gen, *o.checkpoint);
    report = evaluate_pairs<float>(view, [&gen](const Tensor<float>& x) { return gen.infer(x); });
  } else {
    report = evaluate_pairs<float>(view);
    report.notes.push_back("baseline: cloudy input scored against clear");
  }
  if (o.out) {
    write_report_file(report, *o.out);
  } else {
    write_report_csv(report, csv);
  }
  return report;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOptions {
  std::vector<std::size_t> dims{32};
  BenchConfig config;
  std::optional<fs::path> out;
};

inline std::vector<BenchRecord> cmd_bench(const BenchOptions& o, std::ostream& log) {
  if (o.dims.empty()) throw ConfigError("bench: no dims given");
  std::vector<BenchRecord> all;
  for (std::size_t d : o.dims) {
    BenchConfig c = o.config;
    c.dim = d;
    const auto rs = run_bench<float>(c);
    all.insert(all.end(), rs.begin(), rs.end());
  }
  if (o.out) {
    std::ofstream f = open_csv(*o.out, kBenchHeader);
    for (const auto& r : all) write_bench_row(f, r);
    if (!f) throw IoError("write failed for " + o.out->string());
  } else {
    log << kBenchHeader << '\n';
    for (const auto& r : all) write_bench_row(log, r);
  }
  const auto& sizes = o.config.sizes;
  if (sizes.size() >= 2) {
    for (std::size_t d : o.dims) {
      std::vector<BenchRecord> at_d;
      for (const auto& r : all)
        if (r.d == d) at_d.push_back(r);
      for (BenchKernel k : {BenchKernel::softmax, BenchKernel::linear}) {
        const ScalingSummary s = summarize_scaling(at_d, k, sizes[sizes.size() - 2], sizes.back());
        log << "# " << to_string(k) << " D=" << d << ": t(" << s.n_large << ")/t(" << s.n_small
            << ") = " << std::setprecision(4) << s.time_ratio << ", peak/N^2 = " << s.peak_over_n2
            << ", peak/(ND+D^2) = " << s.peak_over_linear << '\n';
      }
    }
  }
  return all;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// Runs every finite-difference case; returns true when all pass.
inline bool cmd_gradcheck(std::uint64_t seed, std::ostream& log, const std::vector<GradCase>& cases = all_grad_cases()) {
  std::size_t failed = 0;
  for (const auto& o : run_grad_cases(cases, seed)) {
    const bool ok = o.passed();
    failed += !ok;
    log << (ok ? "PASS " : "FAIL ") << std::left << std::setw(10) << (o.composite ? "composite" : "primitive")
        << std::setw(36) << o.name << std::right << " max_rel_err " << std::scientific << std::setprecision(3)
        << o.result.max_rel_err << " tol " << o.tolerance << std::defaultfloat << " coords " << o.result.coords_checked;
    if (!ok) {
      log << " worst " << (o.result.worst_name.empty() ? "x" : o.result.worst_name) << "[" << o.result.worst_index
          << "] analytic " << o.result.analytic << " numeric " << o.result.numeric;
    }
    log << '\n';
  }
  log << "gradcheck: " << cases.size() - failed << "/" << cases.size() << " passed (seed " << seed << ")\n";
  return failed == 0;
}

}  // namespace mlagan::cli
