#include <gtest/gtest.h>

#include <cmath>

#include "dula/error.hpp"
#include "dula/schedules.hpp"

using namespace dula;

TEST(Alpha, ShiftedFormFirstStep) {
  const auto s = StepSchedule::from_shifted(0.004, 230, 0.55, 0.48, 230, 0.05);
  EXPECT_NEAR(s.alpha(0), 0.004 / std::pow(230.0, 0.55), 1e-15);
  EXPECT_NEAR(s.alpha(0), 2.0096e-4, 5e-8);
  EXPECT_NEAR(s.alpha(10), 0.004 / std::pow(240.0, 0.55), 1e-15);
}

TEST(Alpha, PlainFormFirstStepIsGain) {
  StepSchedule s;
  s.a = 1.0;
  s.delta2 = 0.6;
  EXPECT_DOUBLE_EQ(s.alpha(0), 1.0);
  EXPECT_NEAR(s.alpha(1), std::pow(2.0, -0.6), 1e-15);
}

TEST(Alpha, StrictlyDecreasing) {
  StepSchedule s;
  s.a = 0.3;
  s.delta2 = 0.7;
  s.offset2 = 12.0;
  for (std::uint64_t k = 0; k < 5000; ++k) ASSERT_LT(s.alpha(k + 1), s.alpha(k));
}

TEST(Beta, ShiftedFormFirstStep) {
  const auto s = StepSchedule::from_shifted(0.004, 230, 0.55, 0.48, 230, 0.05);
  EXPECT_NEAR(s.beta(0), 0.3657, 1e-4);
}

TEST(Beta, ConstantWhenDeltaZero) {
  StepSchedule s;
  s.b = 0.2;
  s.delta1 = 0.0;
  for (std::uint64_t k : {0ULL, 1ULL, 100ULL, 1000000ULL}) EXPECT_EQ(s.beta(k), 0.2);
}

TEST(Beta, NeverExceedsGain) {
  StepSchedule s;
  s.b = 0.4;
  s.delta1 = 0.1;
  EXPECT_DOUBLE_EQ(s.beta(0), 0.4);
  for (std::uint64_t k = 1; k < 2000; ++k) {
    ASSERT_LE(s.beta(k), s.b);
    ASSERT_LT(s.beta(k), s.beta(k - 1));
  }
}

TEST(FromShifted, RejectsShiftBelowOne) {
  EXPECT_THROW(StepSchedule::from_shifted(0.1, 0.5, 0.6, 0.1, 1.0, 0.0), InvalidSchedule);
}

TEST(Validate, BoundaryIsWarning) {
  StepSchedule s;
  s.delta1 = 0.05;
  s.delta2 = 0.55;
  const auto v = validate(s);
  ASSERT_FALSE(v.ok());
  EXPECT_FALSE(v.has_fatal());
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].constraint, "1/2 + delta1 < delta2");
}

TEST(Validate, ConstantBetaPasses) {
  StepSchedule s;
  s.delta1 = 0.0;
  s.delta2 = 0.6;
  EXPECT_TRUE(validate(s).ok());
}

TEST(Validate, DeltaTwoOneFails) {
  StepSchedule s;
  s.delta1 = 0.0;
  s.delta2 = 1.0;
  const auto v = validate(s);
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].constraint, "delta2 < 1");
}

TEST(Validate, NonPositiveGainsAreFatal) {
  StepSchedule s;
  s.delta2 = 0.7;
  s.a = 0.0;
  EXPECT_TRUE(validate(s).has_fatal());
  s.a = 1.0;
  s.b = -0.1;
  EXPECT_TRUE(validate(s).has_fatal());
  s.b = 0.1;
  s.offset1 = -1.0;
  EXPECT_TRUE(validate(s).has_fatal());
}

TEST(Validate, SummabilityFollowsFromCondition) {
  // delta2 < 1 (sum alpha diverges) and 2 delta2 > 1 (sum alpha^2 converges) for every passing schedule.
  for (double d1 = 0.0; d1 < 0.5; d1 += 0.05) {
    for (double d2 = 0.0; d2 < 1.2; d2 += 0.01) {
      StepSchedule s;
      s.delta1 = d1;
      s.delta2 = d2;
      if (validate(s).ok()) {
        EXPECT_LT(d2, 1.0);
        EXPECT_GT(2.0 * d2, 1.0);
      }
    }
  }
}

TEST(RecommendedGain, SpotValue) {
  TheoreticalInputs t;
  t.rho_u = 1.0;
  t.lipschitz = 1.0;
  t.gamma = 3.0;
  const auto g = recommended_a(t, 1, 2.0 / 3.0);
  EXPECT_NEAR(g.a, std::cbrt(0.06), 1e-14);
  EXPECT_NEAR(g.a, 0.39149, 1e-5);
  EXPECT_NEAR(g.margin, 1.0 - 24.0 / 25.0, 1e-12);
  EXPECT_GT(g.margin, 0.0);
}

TEST(RecommendedGain, ScalesWithAgents) {
  TheoreticalInputs t;
  t.gamma = 3.0;
  const double a1 = recommended_a(t, 4, 0.7).a;
  const double a2 = recommended_a(t, 8, 0.7).a;
  EXPECT_NEAR(a1 / a2, 8.0, 1e-10);
}

TEST(RecommendedGain, DecreasingInAgentsAndLipschitz) {
  TheoreticalInputs t;
  t.gamma = 2.5;
  double prev = recommended_a(t, 1, 0.7).a;
  for (std::size_t n = 2; n < 20; ++n) {
    const double a = recommended_a(t, n, 0.7).a;
    EXPECT_LT(a, prev);
    prev = a;
  }
  TheoreticalInputs lo = t, hi = t;
  hi.lipschitz = 2.0;
  EXPECT_LT(recommended_a(hi, 3, 0.7).a, recommended_a(lo, 3, 0.7).a);
}

TEST(RecommendedGain, RejectsGammaAtMostTwo) {
  TheoreticalInputs t;
  t.gamma = 2.0;
  EXPECT_THROW(recommended_a(t, 3, 0.7), InvalidParameter);
}

namespace {

StepSchedule valid_schedule() {
  StepSchedule s;
  s.a = 0.05;
  s.b = 0.2;
  s.delta1 = 0.05;
  s.delta2 = 0.7;
  return s;
}

// Independent restatement of the two branches.
double k_star_oracle(const TheoreticalInputs& t, const StepSchedule& s, double n, double eps,
                     const KlBoundConstants& c) {
  const double q1 = (c.f0 + c.cf1) * std::exp(s.a * t.rho_u / (1 - s.delta2)) + c.cf3;
  const double q2 = c.cf2 * std::pow(n, 2 - t.gamma);
  const double b1 = std::pow((1 - s.delta2) / (s.a * t.rho_u) * std::log(2 * q1 / eps), 1 / (1 - s.delta2));
  const double b2 = std::pow(2 * q2 / eps, 1 / (s.delta2 - 2 * s.delta1));
  return std::ceil(std::max(b1, b2));
}

}  // namespace

TEST(KStar, MatchesClosedForm) {
  TheoreticalInputs t;
  t.rho_u = 0.5;
  t.gamma = 3.0;
  const KlBoundConstants c{2.0, 1.0, 3.0, 0.5};
  for (double eps : {0.5, 0.1, 0.01}) {
    for (std::size_t n : {1u, 5u, 10u}) {
      EXPECT_EQ(static_cast<double>(k_star(t, valid_schedule(), n, eps, c)),
                k_star_oracle(t, valid_schedule(), static_cast<double>(n), eps, c));
    }
  }
}

TEST(KStar, MonotoneInEpsilon) {
  TheoreticalInputs t;
  const KlBoundConstants c{1.0, 1.0, 1.0, 1.0};
  std::uint64_t prev = 0;
  for (double eps = 0.9; eps > 1e-4; eps *= 0.7) {
    const auto k = k_star(t, valid_schedule(), 5, eps, c);
    EXPECT_GE(k, prev);
    prev = k;
  }
}

TEST(KStar, NonIncreasingInAgents) {
  TheoreticalInputs t;
  t.gamma = 3.0;
  const KlBoundConstants c{0.0, 0.0, 5.0, 0.0};
  std::uint64_t prev = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t n = 1; n < 30; ++n) {
    const auto k = k_star(t, valid_schedule(), n, 0.05, c);
    EXPECT_LE(k, prev);
    prev = k;
  }
}

TEST(KStar, ZeroConstantsGiveZero) {
  TheoreticalInputs t;
  EXPECT_EQ(k_star(t, valid_schedule(), 5, 0.1, KlBoundConstants{}), 0u);
}

TEST(KStar, Errors) {
  TheoreticalInputs t;
  const KlBoundConstants c{1, 1, 1, 1};
  EXPECT_THROW(k_star(t, valid_schedule(), 5, 0.0, c), InvalidParameter);
  EXPECT_THROW(k_star(t, valid_schedule(), 5, 1.0, c), InvalidParameter);
  auto s = valid_schedule();
  s.delta1 = 0.4;
  s.delta2 = 0.8;
  EXPECT_THROW(k_star(t, s, 5, 0.1, c), InvalidSchedule);
}
