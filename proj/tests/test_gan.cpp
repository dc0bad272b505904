#include <cmath>
#include <filesystem>
#include <sstream>

#include "mlagan/gan.hpp"
#include "mlagan/gradcheck.hpp"
#include "test_util.hpp"

using namespace mlagan;
using mlagan::testing::rand_t;

namespace {

Tensor<double> filled(Shape s, double v) {
  Tensor<double> t(std::move(s));
  for (auto& x : t.data()) x = v;
  return t;
}

GeneratorConfig tiny_gen() {
  GeneratorConfig c;
  c.side = 16;
  c.base_channels = 4;
  c.heads = 2;
  return c;
}

TrainConfig tiny_train(std::size_t steps) {
  TrainConfig c;
  c.steps = steps;
  c.batch = 2;
  c.log_every = 2;
  c.seed = 3;
  return c;
}

std::vector<const ImagePair<float>*> first(const std::vector<ImagePair<float>>& v, std::size_t n) {
  std::vector<const ImagePair<float>*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&v[i]);
  return out;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mlagan_test_gan";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(L1Loss, ZeroForEqualInputs) {
  const auto x = rand_t({3, 4, 4}, 1);
  EXPECT_EQ(l1_loss(x, x, {100, 100, 100}), 0.0);
}

TEST(L1Loss, SingleTerm) {
  EXPECT_DOUBLE_EQ(l1_loss(filled({1, 1, 1}, 0.5), filled({1, 1, 1}, 0.0), {1.0}), 0.5);
}

TEST(L1Loss, MatchesLoopOracle) {
  const auto a = rand_t({3, 5, 6}, 2), b = rand_t({3, 5, 6}, 3);
  const std::vector<double> lam{1.5, 100.0, 0.25};
  double s = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 5; ++h)
      for (std::size_t w = 0; w < 6; ++w) s += lam[c] * std::abs(a.at(c, h, w) - b.at(c, h, w));
  EXPECT_NEAR(l1_loss(a, b, lam), s / 90.0, 1e-12);
}

TEST(L1Loss, SymmetricAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = rand_t({3, 4, 4}, seed), b = rand_t({3, 4, 4}, seed + 50);
    const double ab = l1_loss(a, b, {100, 100, 100});
    EXPECT_EQ(ab, l1_loss(b, a, {100, 100, 100}));
    EXPECT_GT(ab, 0.0);
  }
}

TEST(L1Loss, ShapeMismatchThrows) {
  EXPECT_THROW(l1_loss(rand_t({3, 4, 4}, 1), rand_t({3, 4, 5}, 1), {1, 1, 1}), DimensionError);
  EXPECT_THROW(l1_loss(rand_t({3, 4, 4}, 1), rand_t({3, 4, 4}, 1), {1, 1}), DimensionError);
}

TEST(AdversarialLoss, UniformHalfGivesTwoLnTwo) {
  const auto half = filled({1, 4, 4}, 0.5);
  EXPECT_NEAR(d_loss(half, half), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(d_loss(half, half), 1.38629, 1e-5);
  EXPECT_NEAR(g_adv_loss(half), std::log(2.0), 1e-12);
  EXPECT_NEAR(g_adv_loss(half, 1e-7, true), std::log(0.5), 1e-12);
}

TEST(AdversarialLoss, PerfectDiscriminatorIsNearZero) {
  const double eps = 1e-7;
  const double v = d_loss(filled({1, 2, 2}, 1.0), filled({1, 2, 2}, 0.0), eps);
  EXPECT_NEAR(v, -2.0 * std::log(1.0 - eps), 1e-15);
  EXPECT_LT(v, 1e-6);
}

TEST(AdversarialLoss, ClampKeepsValuesFinite) {
  EXPECT_TRUE(std::isfinite(d_loss(filled({1, 2, 2}, 0.0), filled({1, 2, 2}, 1.0))));
  EXPECT_TRUE(std::isfinite(g_adv_loss(filled({1, 2, 2}, 0.0))));
}

TEST(MinimaxValue, HalfGivesTwoLnHalf) {
  const auto half = filled({1, 4, 4}, 0.5);
  EXPECT_NEAR(minimax_value(half, half), 2.0 * std::log(0.5), 1e-12);
}

TEST(MinimaxValue, IsNegatedDiscriminatorLoss) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = rand_t({1, 4, 4}, seed, 0.01, 0.99), f = rand_t({1, 4, 4}, seed + 9, 0.01, 0.99);
    EXPECT_NEAR(minimax_value(r, f), -d_loss(r, f), 1e-12);
  }
}

TEST(MinimaxValue, IncreasesWithRealScore) {
  const auto f = rand_t({1, 2, 2}, 4, 0.1, 0.9);
  double prev = -std::numeric_limits<double>::infinity();
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double v = minimax_value(filled({1, 2, 2}, p), f);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(LossGradients, PassFiniteDifferences) {
  const auto gt = rand_t({3, 3, 3}, 1, 0, 1);
  const auto l1 = finite_diff_check<double>(
      [&](Tape<double>& t, const Var<double>& x) { return ad::l1_loss(t.constant(gt), x, {2.0, 100.0, 0.5}); },
      rand_t({3, 3, 3}, 2, 0, 1));
  EXPECT_LT(l1.max_rel_err, 1e-6);
  const auto fake = rand_t({1, 3, 3}, 4, 0.05, 0.95);
  const auto dl = finite_diff_check<double>(
      [&](Tape<double>& t, const Var<double>& x) { return ad::d_loss(x, t.constant(fake), 1e-7); },
      rand_t({1, 3, 3}, 3, 0.05, 0.95));
  EXPECT_LT(dl.max_rel_err, 1e-6);
  const auto dl2 = finite_diff_check<double>(
      [&](Tape<double>& t, const Var<double>& x) { return ad::d_loss(t.constant(fake), x, 1e-7); },
      rand_t({1, 3, 3}, 5, 0.05, 0.95));
  EXPECT_LT(dl2.max_rel_err, 1e-6);
  for (bool literal : {false, true}) {
    const auto ga = finite_diff_check<double>(
        [&](Tape<double>&, const Var<double>& x) { return ad::g_adv_loss(x, 1e-7, literal); },
        rand_t({1, 3, 3}, 6, 0.05, 0.95));
    EXPECT_LT(ga.max_rel_err, 1e-6);
  }
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradient) {
  Param<double> p("w", Tensor<double>::from_rows({{1.0, -2.0, 3.0}}));
  Adam<double> opt({&p}, 0.01, 0.9, 0.999, 1e-8);
  const std::vector<double> g{0.5, -4.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i) p.grad[i] = g[i];
  opt.step();
  // bias-corrected m = g and v = g^2 on the first step
  const std::vector<double> start{1.0, -2.0, 3.0};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.value[i], start[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-12);
    EXPECT_EQ(p.grad[i], 0.0);
  }
}

TEST(Adam, MinimisesQuadratic) {
  Param<double> p("w", Tensor<double>::from_rows({{3.0, -1.0}}));
  Adam<double> opt({&p}, 0.05, 0.9, 0.999);
  for (int k = 0; k < 2000; ++k) {
    for (std::size_t i = 0; i < 2; ++i) p.grad[i] = 2.0 * p.value[i];
    opt.step();
  }
  EXPECT_LT(std::abs(p.value[0]), 1e-2);
  EXPECT_LT(std::abs(p.value[1]), 1e-2);
}

TEST(TrainStep, GeneratorDescendsAdversarialLossWithFrozenDiscriminator) {
  const auto data = make_dataset<float>(10, 16, 1);
  TrainConfig cfg = tiny_train(1);
  cfg.loss.lambda_c = {0.0, 0.0, 0.0};
  cfg.train_discriminator = false;
  cfg.lr = 1e-3;
  Trainer<float> tr(tiny_gen(), cfg);
  const auto batch = first(data.train, 2);
  auto g_adv_now = [&] {
    double s = 0;
    for (const auto* p : batch)
      s += g_adv_loss(tr.discriminator().infer(p->cloudy, tr.generator().infer(p->cloudy)));
    return s / 2;
  };
  const double before = g_adv_now();
  const auto d_before = tr.discriminator().parameters().front()->value;
  const StepMetrics m = tr.train_step(batch);
  EXPECT_NEAR(m.g_adv, before, 1e-5);
  EXPECT_LT(g_adv_now(), before);
  EXPECT_EQ(tr.discriminator().parameters().front()->value, d_before);
}

TEST(TrainStep, ChangesParametersAndReportsConsistentValue) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> tr(tiny_gen(), tiny_train(1));
  const auto g0 = tr.generator().parameters().front()->value;
  const auto d0 = tr.discriminator().parameters().front()->value;
  const StepMetrics m = tr.train_step(first(data.train, 2));
  EXPECT_FALSE(tr.generator().parameters().front()->value == g0);
  EXPECT_FALSE(tr.discriminator().parameters().front()->value == d0);
  EXPECT_NEAR(m.value, -m.d_loss, 1e-5);
  EXPECT_EQ(tr.step(), 1u);
}

TEST(TrainStep, NonFiniteWeightsAbort) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> tr(tiny_gen(), tiny_train(1));
  tr.generator().parameters().front()->value[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(tr.train_step(first(data.train, 2)), NumericError);
}

TEST(TrainLoop, TraceIsDeterministic) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> a(tiny_gen(), tiny_train(6)), b(tiny_gen(), tiny_train(6));
  const auto ta = a.run(data), tb = b.run(data);
  ASSERT_EQ(ta.size(), 3u);
  EXPECT_EQ(ta, tb);
  EXPECT_EQ(ta.back().step, 6u);
}

TEST(TrainLoop, ZeroStepsLeavesInitialWeights) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> tr(tiny_gen(), tiny_train(0));
  EXPECT_TRUE(tr.run(data).empty());
  Generator<float> fresh(tiny_gen(), mix_seed(3, 1));
  auto pa = tr.generator().parameters(), pb = fresh.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

TEST(TrainLoop, ResumeReproducesContinuation) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> full(tiny_gen(), tiny_train(8));
  const auto whole = full.run(data);

  Trainer<float> head(tiny_gen(), tiny_train(4));
  head.run(data);
  const auto path = temp_path("resume.ckpt");
  head.save(path);

  Trainer<float> tail(tiny_gen(), tiny_train(8));
  tail.resume(path);
  EXPECT_EQ(tail.step(), 4u);
  const auto rest = tail.run(data);
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0], whole[2]);
  EXPECT_EQ(rest[1], whole[3]);
  auto pa = full.generator().parameters(), pb = tail.generator().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

TEST(TrainLoop, ResumeRejectsForeignSeed) {
  const auto data = make_dataset<float>(10, 16, 1);
  Trainer<float> a(tiny_gen(), tiny_train(2));
  a.run(data);
  const auto path = temp_path("seed.ckpt");
  a.save(path);
  TrainConfig other = tiny_train(4);
  other.seed = 99;
  Trainer<float> b(tiny_gen(), other);
  EXPECT_THROW(b.resume(path), LoadError);
}

TEST(BatchSchedule, CoversEveryIndexEachEpoch) {
  BatchSchedule s(7, 5);
  std::vector<std::size_t> seen;
  for (std::uint64_t step = 0; step < 7; ++step) {
    const auto b = s.batch(step, 1);
    seen.push_back(b[0]);
  }
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(seen[i], i);
  BatchSchedule t(7, 5);
  EXPECT_EQ(t.batch(3, 2), s.batch(3, 2));
}

TEST(Trace, CsvRowLayout) {
  std::ostringstream os;
  write_trace_row(os, {10, {1.5, 0.25, 3.0, -1.5}, 20.5, 0.75});
  EXPECT_EQ(os.str(), "10,1.5,0.25,3,-1.5,20.5,0.75\n");
  EXPECT_STREQ(kTraceHeader, "step,d_loss,g_adv,l1,value,psnr_eval,ssim_eval");
}

TEST(Config, InvalidValuesThrow) {
  TrainConfig c;
  c.batch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  GanLossParams l;
  l.lambda_c = {1.0, -1.0, 1.0};
  EXPECT_THROW(l.validate(3), ConfigError);
  l.lambda_c = {1.0};
  EXPECT_THROW(l.validate(3), ConfigError);
}
