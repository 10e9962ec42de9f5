#include <gtest/gtest.h>

#include <sstream>

#include "beamsched/verify.hpp"

using namespace beamsched;

namespace {

VerifyGrid small_grid() {
  VerifyGrid g;
  g.tuples = 4;
  g.lambda_points = 6;
  g.buffer_size = 30;
  g.discount_samples = 2;
  return g;
}

}  // namespace

TEST(Verify, SampledTuplesRespectRanges) {
  const VerifyGrid g;
  const auto ps = sample_params(g, 50, 0);
  ASSERT_EQ(ps.size(), 50u);
  for (const auto& p : ps) {
    EXPECT_GE(p.arrival_prob, g.a_lo);
    EXPECT_LE(p.arrival_prob, g.a_hi);
    EXPECT_GE(p.channel_prob, g.d_lo);
    EXPECT_LE(p.channel_prob, g.d_hi);
    EXPECT_GE(p.beam_cost, g.p_lo);
    EXPECT_LE(p.beam_cost, g.p_hi);
    EXPECT_GE(p.holding_coeff, g.q_lo);
    EXPECT_LE(p.holding_coeff, g.q_hi);
    EXPECT_EQ(p.buffer_size, g.buffer_size);
  }
}

TEST(Verify, LambdaGridSpansRange) {
  const UserParams p{0.5, 0.5, 10, 2, 60};
  const auto l = lambda_grid(p, 15);
  ASSERT_EQ(l.size(), 15u);
  EXPECT_DOUBLE_EQ(l.front(), -10);
  EXPECT_DOUBLE_EQ(l.back(), 20 + 2 * 3600);
  for (std::size_t i = 1; i < l.size(); ++i) EXPECT_GT(l[i], l[i - 1]);
}

TEST(Verify, ReportIsDeterministic) {
  VerifySelection sel;
  sel.index = false;
  const auto a = run_verify(small_grid(), sel);
  const auto b = run_verify(small_grid(), sel);
  std::ostringstream sa, sb;
  write_report(sa, a);
  write_report(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_FALSE(sa.str().empty());
}

TEST(Verify, CleanModelHasMonotoneValues) {
  VerifySelection sel;
  sel.discount = sel.index = false;
  const auto r = run_verify(small_grid(), sel);
  EXPECT_GT(r.at("value_monotone").checks, 0);
  EXPECT_TRUE(r.at("value_monotone").passed()) << r.at("value_monotone").first_violation;
  EXPECT_TRUE(r.at("bellman_residual").passed());
}

// A holding cost that falls with queue length must break value monotonicity.
TEST(Verify, CorruptedCostIsDetected) {
  VerifySelection sel;
  sel.discount = sel.index = false;
  const auto r = run_verify(small_grid(), sel, [](const UserParams& p) {
    std::vector<double> h(p.num_states());
    for (int x = 0; x <= p.buffer_size; ++x) h[x] = p.holding_coeff * double((p.buffer_size - x) * (p.buffer_size - x));
    return UserModel(p, h);
  });
  EXPECT_GT(r.at("value_monotone").violations, 0);
  EXPECT_FALSE(r.passed());
}

TEST(Verify, RejectsBadGrid) {
  auto g = small_grid();
  g.tuples = 0;
  EXPECT_THROW(run_verify(g), ValidationError);
  g = small_grid();
  g.boundary_margin = g.buffer_size;
  EXPECT_THROW(run_verify(g), ValidationError);
}

TEST(PropertyResult, Records) {
  PropertyResult p("x");
  p.record(true, 0, "a");
  p.record(false, 2.0, "b");
  p.record(false, 5.0, "c");
  EXPECT_EQ(p.checks, 3);
  EXPECT_EQ(p.violations, 2);
  EXPECT_EQ(p.worst, 5.0);
  EXPECT_EQ(p.first_violation, "b");
  EXPECT_FALSE(p.passed());
}
