#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "beamsched/mdp.hpp"
#include "oracles.hpp"

using namespace beamsched;

namespace {

std::vector<int> as_ints(std::span<const Action> a) {
  std::vector<int> out;
  for (Action x : a) out.push_back(x == Action::Active);
  return out;
}

// Stationary law of a policy from the dense system pi (P - I) = 0, sum pi = 1.
std::vector<double> dense_stationary(const UserParams& p, const std::vector<int>& act) {
  const auto pm = oracle::transition_matrix(p, act);
  const std::size_t n = pm.size();
  oracle::Matrix a(n, std::vector<double>(n));
  std::vector<double> b(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) a[j][i] = pm[i][j] - (i == j ? 1.0 : 0.0);
  for (std::size_t i = 0; i < n; ++i) a[n - 1][i] = 1.0;
  b[n - 1] = 1.0;
  return oracle::solve_dense(a, b);
}

const UserParams kHeavy{0.55, 0.35, 60, 30, 60};

}  // namespace

TEST(ExtractThreshold, Examples) {
  using A = Action;
  const std::vector<A> a{A::Passive, A::Passive, A::Passive, A::Active, A::Active};
  EXPECT_EQ(extract_threshold(a), 2);
  const std::vector<A> b{A::Active, A::Active, A::Active};
  EXPECT_EQ(extract_threshold(b), -1);
  const std::vector<A> c{A::Passive, A::Active, A::Passive};
  EXPECT_FALSE(extract_threshold(c).has_value());
  EXPECT_EQ(extract_threshold(c, 2), 0);
  const std::vector<A> d{A::Passive, A::Passive};
  EXPECT_EQ(extract_threshold(d), 1);
}

TEST(RelativeValueIteration, HugeTaxMakesEveryNonEmptyStateActive) {
  for (const UserParams& p : {kHeavy, UserParams{0.3, 0.6, 20, 4, 40}}) {
    const UserModel m(p);
    const double tax = 10.0 * (p.beam_cost + p.holding_coeff * p.buffer_size * p.buffer_size);
    const auto sol = relative_value_iteration(tax, m, {});
    EXPECT_EQ(sol.values[0], 0.0);
    for (int x = 1; x <= p.buffer_size; ++x) {
      const auto q = detail::q_values(m, sol.values, x, tax);
      EXPECT_LT(q.active, q.passive) << x;
      EXPECT_EQ(sol.actions[x], Action::Active) << x;
    }
  }
}

TEST(RelativeValueIteration, ServingNeverPaysOff) {
  const UserParams p{0.4, 0.5, 10, 0.01, 20};  // P >= q N^2 = 4
  const UserModel m(p);
  for (double tax : {0.0, -5.0}) {
    const auto sol = relative_value_iteration(tax, m, {});
    for (int x = 0; x <= p.buffer_size; ++x) {
      const auto q = detail::q_values(m, sol.values, x, tax);
      EXPECT_LE(q.passive, q.active) << x;
      EXPECT_EQ(sol.actions[x], Action::Passive) << x;
    }
  }
}

TEST(RelativeValueIteration, AverageCostMatchesStationaryEvaluation) {
  const UserModel m(kHeavy);
  const auto sol = relative_value_iteration(100.0, m, {});
  const auto act = as_ints(sol.actions);
  const auto pi = dense_stationary(kHeavy, act);
  double eta = 0.0;
  for (int x = 0; x <= kHeavy.buffer_size; ++x)
    eta += pi[x] * (kHeavy.holding_coeff * x * x + (act[x] ? kHeavy.beam_cost : 100.0));
  EXPECT_NEAR(sol.avg_cost, eta, 1e-6);
}

TEST(RelativeValueIteration, BellmanResidualWithinTolerance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 10; ++trial) {
    const UserParams p{u(rng), u(rng), 1 + 100 * u(rng), 50 * u(rng), 40};
    const UserModel m(p);
    const auto sol = relative_value_iteration(100 * u(rng) - 20, m, {});
    EXPECT_LE(sol.residual, SolverKnobs{}.rvi_tol * sol.scale);
  }
}

TEST(RelativeValueIteration, ReportsNoConvergence) {
  SolverKnobs k;
  k.rvi_max_iter = 3;
  try {
    relative_value_iteration(10.0, UserModel(kHeavy), k);
    FAIL() << "expected NoConvergence";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::NoConvergence);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(PolicyIteration, AgreesWithRelativeValueIteration) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 15; ++trial) {
    const UserParams p{u(rng), u(rng), 1 + 100 * u(rng), 50 * u(rng), 40};
    const UserModel m(p);
    const double tax = -p.beam_cost + (3 * p.beam_cost + p.holding_coeff * 1600) * u(rng);
    const auto a = relative_value_iteration(tax, m, {});
    const auto b = policy_iteration(tax, m, {});
    EXPECT_NEAR(a.avg_cost, b.avg_cost, 1e-8 * a.scale);
  }
}

TEST(DiscountedValueIteration, ConstantCost) {
  const UserParams p{0.4, 0.6, 7, 0, 20};
  const double gamma = 0.95;
  const auto d = discounted_value_iteration(7.0, gamma, UserModel(p), {});
  for (double v : d.values) EXPECT_NEAR(v, 7.0 / (1 - gamma), 1e-8);
  EXPECT_NEAR(d.v0, 7.0 / (1 - gamma), 1e-8);
}

TEST(DiscountedValueIteration, GapShrinksAsDiscountGrows) {
  const UserParams p{0.3, 0.6, 20, 2, 30};
  const UserModel m(p);
  const double tax = 50.0;
  const double eta = relative_value_iteration(tax, m, {}).avg_cost;
  const double g99 = std::abs(0.01 * discounted_value_iteration(tax, 0.99, m, {}).v0 - eta);
  const double g999 = std::abs(0.001 * discounted_value_iteration(tax, 0.999, m, {}).v0 - eta);
  EXPECT_LT(g999, g99);
}

TEST(DiscountedValueIteration, RejectsBadDiscount) {
  EXPECT_THROW(discounted_value_iteration(0.0, 1.0, UserModel(kHeavy), {}), ValidationError);
}

TEST(FixedThreshold, AlwaysPassiveAbsorbsAtFullBuffer) {
  const UserParams p{0.4, 0.6, 10, 2, 30};
  const auto pv = solve_fixed_threshold(7.0, 30, UserModel(p), {});
  EXPECT_NEAR(pv.avg_cost, 2.0 * 900 + 7.0, 1e-9);
}

TEST(FixedThreshold, MatchesFixedPolicyValueIteration) {
  const UserParams p{0.5, 0.5, 10, 1, 30};
  const auto pv = solve_fixed_threshold(5.0, 2, UserModel(p), {});
  const auto act = as_ints(threshold_actions(2, 30));
  const auto ref = oracle::fixed_policy_vi(p, act, 5.0, 200000);
  EXPECT_NEAR(pv.avg_cost, ref.eta, 1e-6);
  for (int x = 0; x <= 30; ++x) EXPECT_NEAR(pv.values[x], ref.values[x], 1e-6) << x;
}

TEST(FixedThreshold, AlwaysActiveEqualsStationaryCost) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 10; ++trial) {
    const UserParams p{u(rng), u(rng), 100 * u(rng), 20 * u(rng), 50};
    const UserModel m(p);
    const auto sd = stationary_distribution(-1, m);
    double eta = 0.0;
    for (int j = 0; j <= 50; ++j) eta += sd.probs[j] * (m.holding(j) + p.beam_cost);
    EXPECT_NEAR(solve_fixed_threshold(3.0, -1, m, {}).avg_cost, eta, 1e-9 * std::max(1.0, eta));
  }
}

// Exact O(N) evaluation against a dense pivoted solve of the same equations
// on well-conditioned chains.
TEST(FixedThreshold, MatchesDenseSolve) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.3, 0.6);
  for (int trial = 0; trial < 20; ++trial) {
    const UserParams p{u(rng), u(rng), 50 * u(rng), 5 * u(rng), 40};
    const UserModel m(p);
    const int t = int(rng() % 41) - 1;
    const double tax = 100 * u(rng) - 30;
    const auto pv = solve_fixed_threshold(tax, t, m, {});
    const auto ref = oracle::evaluate_dense(p, as_ints(threshold_actions(t, 40)), tax);
    double vmax = 1.0;
    for (double v : ref.values) vmax = std::max(vmax, std::abs(v));
    EXPECT_NEAR(pv.avg_cost, ref.eta, 1e-9 * std::max(1.0, std::abs(ref.eta))) << "t=" << t;
    for (int x = 0; x <= 40; ++x) EXPECT_NEAR(pv.values[x], ref.values[x], 1e-9 * vmax) << "t=" << t << " x=" << x;
    EXPECT_LE(policy_equation_residual(threshold_actions(t, 40), tax, m, pv), 1e-9 * vmax);
  }
}

TEST(FixedThreshold, RejectsBadThreshold) {
  EXPECT_THROW(solve_fixed_threshold(0.0, -2, UserModel(kHeavy), {}), ValidationError);
  EXPECT_THROW(solve_fixed_threshold(0.0, 61, UserModel(kHeavy), {}), ValidationError);
}

TEST(StationaryDistribution, FullThresholdIsPointMass) {
  const auto sd = stationary_distribution(50, UserModel(UserParams{0.4, 0.6, 1, 1, 50}));
  EXPECT_TRUE(sd.degenerate);
  EXPECT_EQ(sd.probs[50], 1.0);
  EXPECT_THROW(threshold_average_cost(0.0, 50, UserModel(UserParams{0.4, 0.6, 1, 1, 50})), SolverError);
}

TEST(StationaryDistribution, MatchesPowerIteration) {
  const UserParams p{0.4, 0.6, 1, 1, 50};
  const auto sd = stationary_distribution(0, UserModel(p));
  const auto ref = oracle::power_stationary(oracle::transition_matrix(p, as_ints(threshold_actions(0, 50))), 100000, 1e-15);
  for (int x = 0; x <= 50; ++x) EXPECT_NEAR(sd.probs[x], ref[x], 1e-10) << x;
}

TEST(StationaryDistribution, SumsToOneAndIsInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 20; ++trial) {
    const UserParams p{u(rng), u(rng), 1, 1, 30};
    const int t = int(rng() % 31) - 1;
    const auto sd = stationary_distribution(t, UserModel(p));
    double s = 0.0;
    for (double v : sd.probs) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-10);
    const auto pm = oracle::transition_matrix(p, as_ints(threshold_actions(t, 30)));
    for (int j = 0; j <= 30; ++j) {
      double vp = 0.0;
      for (int i = 0; i <= 30; ++i) vp += sd.probs[i] * pm[i][j];
      EXPECT_NEAR(vp, sd.probs[j], 1e-8);
    }
  }
}

TEST(StationaryDistribution, PassiveMassStrictlyIncreasing) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 20; ++trial) {
    const UserModel m(UserParams{u(rng), u(rng), 1, 1, 60});
    for (int t = -1; t < 59; ++t) EXPECT_EQ(passive_mass_increment(t, m).sign, 1) << "t=" << t;
  }
}

TEST(ThresholdAverageCost, AlwaysActiveWithoutHoldingCost) {
  EXPECT_NEAR(threshold_average_cost(3.0, -1, UserModel(UserParams{0.3, 0.5, 17, 0, 20})), 17.0, 1e-12);
}

TEST(ThresholdAverageCost, MinimumOverThresholdsIsOptimalCost) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int trial = 0; trial < 10; ++trial) {
    const UserParams p{u(rng), u(rng), 1 + 100 * u(rng), 20 * u(rng), 40};
    const UserModel m(p);
    const double tax = -p.beam_cost + (3 * p.beam_cost + p.holding_coeff * 1600) * u(rng);
    double best = p.holding_coeff * 1600 + tax;  // t = N
    for (int t = -1; t < 40; ++t) best = std::min(best, threshold_average_cost(tax, t, m));
    const auto sol = relative_value_iteration(tax, m, {});
    EXPECT_NEAR(best, sol.avg_cost, 1e-6 * sol.scale);
  }
}

TEST(ThresholdAverageCost, Supermodular) {
  const UserModel m(UserParams{0.45, 0.55, 30, 3, 40});
  const std::vector<double> taxes{-30, 10, 200, 5000};
  for (std::size_t i1 = 0; i1 < taxes.size(); ++i1)
    for (std::size_t i2 = 0; i2 < i1; ++i2)
      for (int t1 = 0; t1 < 39; ++t1)
        for (int t2 = -1; t2 < t1; ++t2) {
          const double lhs = threshold_average_cost(taxes[i1], t2, m) + threshold_average_cost(taxes[i2], t1, m);
          const double rhs = threshold_average_cost(taxes[i1], t1, m) + threshold_average_cost(taxes[i2], t2, m);
          EXPECT_LE(lhs, rhs + 1e-9 * std::abs(rhs));
        }
}
