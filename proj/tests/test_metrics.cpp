#include <cmath>
#include <sstream>

#include "metric_oracle.hpp"
#include "mlagan/metrics.hpp"
#include "test_util.hpp"

using namespace mlagan;
using mlagan::testing::rand_t;
using mlagan::testing::ssim_oracle;

TEST(Mse, IdenticalIsZero) {
  const auto x = rand_t({3, 4, 4}, 1);
  EXPECT_EQ(mse(x, x), 0.0);
}

TEST(Mse, SinglePixel) {
  EXPECT_DOUBLE_EQ(mse(Tensor<double>::scalar(0.5), Tensor<double>::scalar(0.0)), 0.25);
}

TEST(Mse, MatchesLoopOracle) {
  const auto x = rand_t({3, 5, 7}, 2), y = rand_t({3, 5, 7}, 3);
  double s = 0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < 5; ++h)
      for (std::size_t w = 0; w < 7; ++w) s += std::pow(x.at(c, h, w) - y.at(c, h, w), 2);
  EXPECT_NEAR(mse(x, y), s / 105.0, 1e-12);
}

TEST(Mse, ShapeMismatchThrows) {
  EXPECT_THROW(mse(rand_t({3, 4, 4}, 1), rand_t({3, 4, 5}, 1)), DimensionError);
}

TEST(Psnr, EightBitUnitMse) {
  const double expected = 20.0 * std::log10(255.0);
  EXPECT_NEAR(psnr_from_mse(1.0, 255.0), expected, 1e-12);
  EXPECT_NEAR(psnr_from_mse(1.0, 255.0), 48.1308, 1e-3);
  // through images: every pixel off by exactly one level
  Tensor<double> a = Tensor<double>::zeros({3, 4, 4}), b = Tensor<double>::ones({3, 4, 4});
  EXPECT_NEAR(psnr(a, b, 255.0), 48.1308, 1e-3);
}

TEST(Psnr, RatioOneIsZeroDb) { EXPECT_NEAR(psnr_from_mse(4.0, 2.0), 0.0, 1e-15); }

TEST(Psnr, IdenticalIsInfinite) {
  const auto x = rand_t({3, 4, 4}, 4);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_GT(psnr(x, x), 0.0);
}

TEST(Psnr, DecreasesWithMse) {
  double prev = std::numeric_limits<double>::infinity();
  for (double m : {1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0, 3.0}) {
    const double p = psnr_from_mse(m);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Psnr, JointRescaleInvariant) {
  const auto x = rand_t({3, 6, 6}, 5, 0, 1), y = rand_t({3, 6, 6}, 6, 0, 1);
  for (double s : {0.01, 3.0, 255.0}) {
    Tensor<double> xs = x, ys = y;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xs[i] *= s;
      ys[i] *= s;
    }
    EXPECT_NEAR(psnr(xs, ys, s), psnr(x, y, 1.0), 1e-9);
  }
}

TEST(Psnr, NonPositivePeakThrows) { EXPECT_THROW(psnr_from_mse(1.0, 0.0), UsageError); }

TEST(Ssim, IdenticalIsOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = rand_t({3, 8, 8}, seed, 0, 1);
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
  }
  const Tensor<double> flat = Tensor<double>::ones({3, 4, 4});
  EXPECT_NEAR(ssim(flat, flat), 1.0, 1e-12);
}

TEST(Ssim, Symmetric) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = rand_t({3, 8, 8}, seed, 0, 1), y = rand_t({3, 8, 8}, seed + 100, 0, 1);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
  }
}

TEST(Ssim, MatchesScalarOracleOnRandom4x4) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = rand_t({4, 4}, seed, 0, 1), y = rand_t({4, 4}, seed + 1000, 0, 1);
    const double expect = ssim_oracle(x.values(), y.values(), 1.0);
    EXPECT_NEAR(ssim(x, y), expect, 1e-10) << "seed " << seed;
  }
}

TEST(Ssim, AveragesChannels) {
  const auto x = rand_t({3, 4, 4}, 7, 0, 1), y = rand_t({3, 4, 4}, 8, 0, 1);
  double sum = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> xc(x.values().begin() + c * 16, x.values().begin() + (c + 1) * 16);
    std::vector<double> yc(y.values().begin() + c * 16, y.values().begin() + (c + 1) * 16);
    sum += ssim_oracle(xc, yc, 1.0);
  }
  EXPECT_NEAR(ssim(x, y), sum / 3, 1e-10);
}

TEST(Ssim, BoundedByOne) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto x = rand_t({3, 6, 6}, seed, 0, 1);
    Tensor<double> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (seed % 2) ? 1.0 - x[i] : x[i] * 0.3 + 0.1;
    const double s = ssim(x, y);
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(Ssim, ShapeMismatchThrows) {
  EXPECT_THROW(ssim(rand_t({3, 4, 4}, 1), rand_t({3, 4, 5}, 1)), DimensionError);
}

TEST(EvaluatePairs, IdenticalPairsGiveUnitSsimAndCappedPsnr) {
  const auto a = rand_t({3, 4, 4}, 1, 0, 1), b = rand_t({3, 4, 4}, 2, 0, 1);
  std::vector<EvalPair<double>> pairs{{"a", &a, &a}, {"b", &b, &b}};
  const MetricReport r = evaluate_pairs(pairs);
  EXPECT_EQ(r.count, 2u);
  EXPECT_NEAR(r.mean_ssim, 1.0, 1e-9);
  EXPECT_EQ(r.mean_psnr, kPsnrCsvCap);
  EXPECT_EQ(r.capped, 2u);
  EXPECT_FALSE(r.notes.empty());
}

TEST(EvaluatePairs, AggregatesAreMeans) {
  const auto a = rand_t({3, 4, 4}, 1, 0, 1), b = rand_t({3, 4, 4}, 2, 0, 1), c = rand_t({3, 4, 4}, 3, 0, 1);
  std::vector<EvalPair<double>> pairs{{"x", &a, &b}, {"y", &b, &c}};
  const MetricReport r = evaluate_pairs(pairs);
  EXPECT_NEAR(r.mean_psnr, (psnr(a, b) + psnr(b, c)) / 2, 1e-12);
  EXPECT_NEAR(r.mean_ssim, (ssim(a, b) + ssim(b, c)) / 2, 1e-12);
}

TEST(EvaluatePairs, RestoreFunctionIsApplied) {
  const auto a = rand_t({3, 4, 4}, 1, 0, 1), b = rand_t({3, 4, 4}, 2, 0, 1);
  std::vector<EvalPair<double>> pairs{{"x", &a, &b}};
  const MetricReport r = evaluate_pairs<double>(pairs, [&](const Tensor<double>&) { return b; });
  EXPECT_NEAR(r.mean_ssim, 1.0, 1e-9);
}

TEST(EvaluatePairs, EmptySetThrows) {
  EXPECT_THROW(evaluate_pairs(std::vector<EvalPair<double>>{}), UsageError);
}

TEST(EvaluatePairs, CsvLayout) {
  const auto a = rand_t({3, 4, 4}, 1, 0, 1), b = rand_t({3, 4, 4}, 2, 0, 1);
  std::vector<EvalPair<double>> pairs{{"same", &a, &a}, {"diff", &a, &b}};
  std::ostringstream os;
  write_report_csv(evaluate_pairs(pairs), os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "id,psnr_db,ssim");
  std::getline(is, line);
  EXPECT_EQ(line.rfind("same,inf,", 0), 0u);
  std::getline(is, line);
  EXPECT_EQ(line.rfind("diff,", 0), 0u);
  std::getline(is, line);
  EXPECT_EQ(line.rfind("mean,", 0), 0u);
  std::getline(is, line);
  EXPECT_EQ(line.rfind("# ", 0), 0u);
}
