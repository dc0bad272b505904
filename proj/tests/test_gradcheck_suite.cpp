#include <gtest/gtest.h>

#include <set>
#include <string>

#include "mlagan/gradcheck_suite.hpp"

namespace mlagan {
namespace {

class GradSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradSuite, MatchesCentralDifferencesAcrossSeeds) {
  const auto cases = all_grad_cases();
  const GradCase& c = cases.at(GetParam());
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GradCheckResult r = c.run(seed);
    EXPECT_GT(r.coords_checked, 0u) << c.name;
    EXPECT_LT(r.max_rel_err, c.tolerance())
        << c.name << " seed " << seed << " worst " << r.worst_name << "[" << r.worst_index << "] analytic "
        << r.analytic << " numeric " << r.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradSuite, ::testing::Range<std::size_t>(0, all_grad_cases().size()),
                         [](const auto& info) { return all_grad_cases()[info.param].name; });

TEST(GradSuiteCases, NamesAreUniqueAndTiersAreSet) {
  std::set<std::string> names;
  std::size_t composites = 0;
  for (const auto& c : all_grad_cases()) {
    EXPECT_TRUE(names.insert(c.name).second) << c.name;
    composites += c.composite;
    EXPECT_EQ(c.tolerance(), c.composite ? kCompositeGradTol : kPrimitiveGradTol);
  }
  EXPECT_EQ(composites, composite_grad_cases().size());
  EXPECT_GE(primitive_grad_cases().size(), 30u);
}

TEST(GradSuiteCases, OutcomesReportPassFlag) {
  const auto out = run_grad_cases(primitive_grad_cases(), 5);
  ASSERT_EQ(out.size(), primitive_grad_cases().size());
  for (const auto& o : out) EXPECT_TRUE(o.passed()) << o.name << " " << o.result.max_rel_err;
  GradCaseOutcome bad = out.front();
  bad.result.max_rel_err = 1.0;
  EXPECT_FALSE(bad.passed());
}

// A deliberately wrong backward in a composite must fail its tier.
TEST(GradSuiteCases, CorruptedCompositeBackwardIsCaught) {
  using TapeD = Tape<double>;
  using VarD = Var<double>;
  Rng rng(3);
  const Tensor<double> x0 = uniform_tensor<double>({6, 4}, -1, 1, rng);
  auto broken = [](TapeD& t, const VarD& x) {
    VarD y = ad::tanh(x);
    VarD bad = t.record("nudged_identity", y.value(), {y}, [y](TapeD& tp, const Tensor<double>& g,
                                                                const Tensor<double>&) {
      Tensor<double> d = g;
      d[0] *= 1.01;
      tp.accumulate(y, d);
    });
    return ad::sum(ad::mul(bad, bad));
  };
  EXPECT_GT(finite_diff_check<double>(broken, x0).max_rel_err, kCompositeGradTol);
}

}  // namespace
}  // namespace mlagan
