// mlagan: synth | train | eval | bench | gradcheck

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "mlagan/commands.hpp"

namespace {

using namespace mlagan;
using namespace mlagan::cli;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

const CLI::Validator kPositive(
    [](std::string& s) -> std::string {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && v > 0) return {};
      } catch (const std::exception&) {
      }
      return "must be positive, got '" + s + "'";
    },
    "POSITIVE");

const std::map<std::string, EncoderKind> kEncoders{{"attention", EncoderKind::attention}, {"conv", EncoderKind::conv}};
const std::map<std::string, EvalSplit> kSplits{
    {"test", EvalSplit::test}, {"train", EvalSplit::train}, {"all", EvalSplit::all}};

void add_model_flags(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--heads", m.heads, "attention heads per encoder block")->capture_default_str()->check(kPositive);
  cmd->add_option("--base-channels", m.base_channels, "channels at the first level")
      ->capture_default_str()
      ->check(kPositive);
  cmd->add_option("--levels", m.levels, "encoder levels")->capture_default_str()->check(kPositive);
  cmd->add_option("--encoder", m.encoder, "encoder block: attention or conv")
      ->transform(CLI::CheckedTransformer(kEncoders, CLI::ignore_case))
      ->default_str("attention");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thin-cloud removal GAN with multi-head linear attention"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic paired cloudy/clear dataset");
  c_synth->add_option("--n", synth.n, "number of pairs")->capture_default_str()->check(kPositive);
  c_synth->add_option("--side", synth.side, "image side in pixels")->capture_default_str()->check(kPositive);
  c_synth->add_option("--seed", synth.seed, "dataset seed")->capture_default_str();
  c_synth->add_option("--max-opacity", synth.max_opacity, "peak cloud opacity")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--out", synth.out, "output directory")->required();

  TrainOptions train;
  bool ablation = false;
  std::string resume;
  auto* c_train = app.add_subcommand("train", "train the GAN on a dataset directory");
  c_train->add_option("--data", train.data, "dataset directory (cloud/, label/)")->required();
  c_train->add_option("--out", train.out, "output directory for checkpoint and CSVs")->required();
  c_train->add_option("--steps", train.train.steps, "optimizer steps")->capture_default_str();
  c_train->add_option("--seed", train.train.seed, "initialisation and sampling seed")->capture_default_str();
  c_train->add_option("--batch", train.train.batch, "pairs per step")->capture_default_str()->check(kPositive);
  c_train->add_option("--lr", train.train.lr, "Adam learning rate")->capture_default_str()->check(kPositive);
  c_train->add_option("--log-every", train.train.log_every, "steps between held-out evaluations")
      ->capture_default_str()
      ->check(kPositive);
  c_train->add_option("--lambda", train.train.loss.lambda_c, "per-channel L1 weights (one per channel)")
      ->expected(3)
      ->capture_default_str();
  c_train->add_flag("--literal-g-loss", train.train.loss.literal_generator_loss,
                    "minimise log(1 - D(G(x))) instead of -log D(G(x))");
  c_train->add_option("--resume", resume, "continue from a checkpoint written by train");
  c_train->add_flag("--ablation", ablation, "train the conv, 1-, 2- and 4-head arms and write ablation.csv");
  c_train->add_flag("--allow-skip", train.allow_skip, "skip unpaired or unreadable images");
  add_model_flags(c_train, train.model);
  c_train->callback([&] {
    if (!resume.empty()) train.resume = resume;
  });

  EvalOptions eval;
  std::string eval_ckpt, eval_out;
  auto* c_eval = app.add_subcommand("eval", "score generated (or raw cloudy) images against clear labels");
  c_eval->add_option("--data", eval.data, "dataset directory")->required();
  c_eval->add_option("--checkpoint", eval_ckpt, "generator checkpoint; omit for the cloudy baseline");
  c_eval->add_option("--split", eval.split, "test, train or all")
      ->transform(CLI::CheckedTransformer(kSplits, CLI::ignore_case))
      ->default_str("test");
  c_eval->add_option("--out", eval_out, "CSV path (default: stdout)");
  c_eval->add_flag("--allow-skip", eval.allow_skip, "skip unpaired or unreadable images");
  add_model_flags(c_eval, eval.model);
  c_eval->callback([&] {
    if (!eval_ckpt.empty()) eval.checkpoint = eval_ckpt;
    if (!eval_out.empty()) eval.out = eval_out;
  });

  BenchOptions bench;
  std::string bench_out;
  auto* c_bench = app.add_subcommand("bench", "time softmax vs linear attention across sequence lengths");
  c_bench->add_option("--dims", bench.dims, "feature dimensions D")->capture_default_str()->check(kPositive);
  c_bench->add_option("--sizes", bench.config.sizes, "ascending sequence lengths N")
      ->capture_default_str()
      ->check(kPositive);
  c_bench->add_option("--reps", bench.config.reps, "timed repetitions (median reported)")->capture_default_str();
  c_bench->add_option("--seed", bench.config.seed, "input seed")->capture_default_str();
  c_bench->add_option("--out", bench_out, "CSV path, appended to (default: stdout)");
  c_bench->callback([&] {
    if (!bench_out.empty()) bench.out = bench_out;
  });

  std::uint64_t gc_seed = 0;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of every backward at 64-bit");
  c_grad->add_option("--seed", gc_seed, "input seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_synth->parsed()) cmd_synth(synth, std::cout);
    if (c_train->parsed()) {
      if (ablation) {
        cmd_ablation(train, std::cout);
      } else {
        cmd_train(train, std::cout);
      }
    }
    if (c_eval->parsed()) cmd_eval(eval, std::cout);
    if (c_bench->parsed()) cmd_bench(bench, std::cout);
    if (c_grad->parsed() && !cmd_gradcheck(gc_seed, std::cout)) return kExitRuntime;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
