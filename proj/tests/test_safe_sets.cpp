#include "cvpm/safe_sets.hpp"

#include <random>

#include "common.hpp"
#include "gtest/gtest.h"

namespace cvpm {
namespace {

using testing::make_cruise_obstacle;
using testing::quantile_oracle;

TEST(SelectSide, ObstacleBehind) {
  EXPECT_EQ(select_side(-30.0, 0.0, 5.0, 2.3), Side::rear);
}

TEST(SelectSide, ObstacleOneLaneLeft) {
  EXPECT_EQ(select_side(0.0, 3.5, 5.0, 2.3), Side::left);
}

TEST(SelectSide, TieBreaksTowardFront) {
  // Equal front/left margins by construction: ds - infl_s == dd - infl_d.
  EXPECT_EQ(select_side(10.0, 3.5, 5.0, -3.0), Side::front);
}

TEST(BuildSafeSequence, LeadVehicleRowRule) {
  const double T = 0.1, v_lead = 15.0;
  const Obstacle o = make_cruise_obstacle(50.0, v_lead, 0.0, 0.3, 0.1, 1.0, 0.5, T);
  const EgoState ego{0, 0, 0, 15};
  const VehicleGeometry ego_geom{4.5, 1.8};
  const double margin = 0.5;
  const SafeSetSequence seq = build_safe_sequence(ego, {o}, 4, ego_geom, margin);

  const double infl = 0.5 * (4.5 + 4.5) + margin;
  ASSERT_EQ(seq.n_rows(), 4);
  for (int k = 1; k <= 4; ++k) {
    const SafeRow& row = seq.rows[k - 1];
    EXPECT_EQ(row.side, Side::front);
    EXPECT_EQ(row.h.step, k);
    // Row reads s_ego,k <= 50 + v_lead k T - inflation.
    const double allowed = -seq.q_bar(k - 1);
    EXPECT_NEAR(allowed, 50.0 + v_lead * k * T - infl, 1e-9);
    EXPECT_NEAR((row.h.normal - Vec4(1, 0, 0, 0)).norm(), 0.0, 1e-12);
  }
}

TEST(BuildSafeSequence, NoObstaclesMeansWholeSpace) {
  const SafeSetSequence seq = build_safe_sequence({0, 0, 0, 10}, {}, 5, {4.5, 1.8}, 0.5);
  EXPECT_EQ(seq.n_rows(), 0);
  EXPECT_EQ(seq.Q.rows(), 0);
}

TEST(BuildSafeSequence, AdjacentLaneConstrainsLateralOnly) {
  const Obstacle o = make_cruise_obstacle(0.0, 15.0, 3.5, 0.3, 0.1, 1.0, 0.5);
  const SafeSetSequence seq = build_safe_sequence({0, 0, 0, 15}, {o}, 3, {4.5, 1.8}, 0.5);
  for (const auto& row : seq.rows) {
    EXPECT_EQ(row.side, Side::left);
    EXPECT_DOUBLE_EQ(row.h.normal(0), 0.0);
    EXPECT_DOUBLE_EQ(row.h.normal(1), 1.0);
  }
}

TEST(BuildSafeSequence, StepRowsTouchOnlyTheirStateBlock) {
  const Obstacle a = make_cruise_obstacle(40.0, 14.0, 0.0, 0.3, 0.1, 1.0, 0.5);
  const Obstacle b = make_cruise_obstacle(10.0, 16.0, 3.5, 0.3, 0.1, 1.0, 0.5);
  const int N = 5;
  const SafeSetSequence seq = build_safe_sequence({20, 0, 0, 15}, {a, b}, N, {4.5, 1.8}, 0.5);
  for (int r = 0; r < seq.n_rows(); ++r) {
    const int k = seq.rows[r].h.step;
    for (int c = 0; c < 4 * N; ++c) {
      if (c / 4 != k - 1) ASSERT_EQ(seq.Q(r, c), 0.0);
    }
  }
}

TEST(TightenChance, MedianLeavesOffsetUnchanged) {
  const Halfspace h{Vec4(1, 0, 0, 0), -42.0, 2};
  EXPECT_DOUBLE_EQ(tighten_chance(h, 4.0, 0.5).offset, -42.0);
}

TEST(TightenChance, MatchesQuantileOracle) {
  const Halfspace h{Vec4(1, 0, 0, 0), 0.0, 1};
  const Halfspace t = tighten_chance(h, 1.0, 0.8);
  EXPECT_NEAR(t.offset, 0.8416, 5e-5);
  EXPECT_NEAR(t.offset, quantile_oracle(0.8), 1e-9);
}

TEST(TightenChance, ZeroVarianceUnchanged) {
  const Halfspace h{Vec4(0, 1, 0, 0), 3.25, 1};
  for (double beta : {0.5, 0.8, 0.95, 0.999}) {
    EXPECT_DOUBLE_EQ(tighten_chance(h, 0.0, beta).offset, 3.25);
  }
}

TEST(TightenChance, RejectsBetaOutsideRange) {
  const Halfspace h{Vec4(1, 0, 0, 0), 0.0, 1};
  EXPECT_THROW(tighten_chance(h, 1.0, 0.49), std::invalid_argument);
  EXPECT_THROW(tighten_chance(h, 1.0, 1.0), std::invalid_argument);
}

TEST(TightenChance, FeasibleRegionShrinksWithBeta) {
  const Halfspace h{Vec4(1, 0, 0, 0), -10.0, 1};
  double prev = tighten_chance(h, 2.0, 0.5).offset;
  for (double beta : {0.6, 0.7, 0.8, 0.9, 0.95, 0.99}) {
    const double off = tighten_chance(h, 2.0, beta).offset;
    EXPECT_GT(off, prev);
    prev = off;
  }
}

TEST(TightenChance, BoundaryViolationFrequencyCalibrated) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (double beta : {0.6, 0.8, 0.9, 0.95}) {
    const double sigma = 2.5;
    const Halfspace h{Vec4(1, 0, 0, 0), -30.0, 1};
    const Halfspace t = tighten_chance(h, sigma * sigma, beta);
    const double boundary_s = -t.offset;  // ego exactly on the tightened boundary
    int viol = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double q = h.offset + sigma * gauss(rng);
      if (boundary_s + q > 0.0) ++viol;
    }
    EXPECT_LE(static_cast<double>(viol) / n, (1.0 - beta) + 0.02);
  }
}

TEST(ReachTube, ZeroSupportsEqualNominalRollout) {
  Obstacle o = make_cruise_obstacle(10.0, 12.0, 0.0, 0.3, 0.1, 0.0, 0.0);
  const int N = 4;
  const ReachTube tube = reach_tube(o, N);
  ObstacleState x = o.state;
  EXPECT_NEAR((tube.lo[0] - tube.hi[0]).norm(), 0.0, 1e-12);
  for (int k = 0; k < N; ++k) {
    x = step_obstacle(x, o.model, Vec2::Zero(), o.model.reference_at(o.state, k));
    EXPECT_NEAR((tube.lo[k + 1] - x.vec()).norm(), 0.0, 1e-9);
    EXPECT_NEAR((tube.hi[k + 1] - x.vec()).norm(), 0.0, 1e-9);
  }
}

TEST(ReachTube, OneStepIntervalImage) {
  Obstacle o = make_cruise_obstacle(0.0, 10.0, 0.0, 0.3, 0.3, 1.0, 1.0);
  const ReachTube tube = reach_tube(o, 1);
  // Position half-width after one step: T^2/2 * 1 beyond nominal.
  const double nominal_s = tube.lo[1](0) + 0.5 * (tube.hi[1](0) - tube.lo[1](0));
  EXPECT_NEAR(tube.hi[1](0) - nominal_s, 0.005, 1e-12);
  EXPECT_NEAR(nominal_s - tube.lo[1](0), 0.005, 1e-12);
}

TEST(ReachTube, ContainsMonteCarloRollouts) {
  Obstacle o = make_cruise_obstacle(5.0, 13.0, 1.0, 0.5, 0.25, 1.5, 0.8);
  o.noise = TruncatedGaussian::diagonal(Vec4(0.01, 0.005, 0.01, 0.005),
                                        Vec4(-0.2, -0.1, -0.2, -0.1),
                                        Vec4(0.2, 0.1, 0.2, 0.1));
  const int N = 6;
  const ReachTube tube = reach_tube(o, N);
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec4 v = sample(o.noise, rng).head<4>();
    ObstacleState x = ObstacleState::from_vec(o.state.vec() + v);
    // The planner anchor is the measured state; rollouts must stay inside.
    for (int k = 0; k < N; ++k) {
      const Vec2 w = sample(o.disturbance, rng).head<2>();
      x = step_obstacle(x, o.model, w, o.model.reference_at(o.state, k));
      for (int i = 0; i < 4; ++i) {
        ASSERT_GE(x.vec()(i), tube.lo[k + 1](i) - 1e-9);
        ASSERT_LE(x.vec()(i), tube.hi[k + 1](i) + 1e-9);
      }
    }
  }
}

TEST(TightenRobust, ZeroWidthTubeKeepsNominalOffset) {
  const Obstacle o = make_cruise_obstacle(30.0, 10.0, 0.0, 0.3, 0.1, 0.0, 0.0);
  const int N = 3;
  const SafeSetSequence seq = build_safe_sequence({0, 0, 0, 10}, {o}, N, {4.5, 1.8}, 0.5);
  const ReachTube tube = reach_tube(o, N);
  for (const auto& row : seq.rows) {
    EXPECT_NEAR(tighten_robust(row, tube).offset, row.h.offset, 1e-9);
  }
}

TEST(TightenRobust, TubeWideningShrinksAllowedRegion) {
  const Obstacle o = make_cruise_obstacle(30.0, 10.0, 0.0, 0.3, 0.1, 0.0, 0.0);
  const SafeSetSequence seq = build_safe_sequence({0, 0, 0, 10}, {o}, 2, {4.5, 1.8}, 0.5);
  ReachTube tube = reach_tube(o, 2);
  const SafeRow& row = seq.rows[1];  // front side, step 2
  const double allowed_before = -tighten_robust(row, tube).offset;
  tube.lo[row.h.step](0) -= 1.0;
  tube.hi[row.h.step](0) += 1.0;
  const double allowed_after = -tighten_robust(row, tube).offset;
  EXPECT_NEAR(allowed_before - allowed_after, 1.0, 1e-12);
}

TEST(TightenRobust, TighterThanChanceWhenSupportsDominate) {
  // Supports at 4 sigma dominate every quantile up to beta = 0.9999.
  const Obstacle o = make_cruise_obstacle(40.0, 12.0, 0.0, 0.3, 0.12, 1.2, 0.48);
  const int N = 5;
  const SafeSetSequence seq = build_safe_sequence({0, 0, 0, 12}, {o}, N, {4.5, 1.8}, 0.5);
  const ReachTube tube = reach_tube(o, N);
  for (double beta : {0.6, 0.8, 0.95, 0.99}) {
    for (const auto& row : seq.rows) {
      const double robust = tighten_robust(row, tube).offset;
      const double chance = tighten_chance(row.h, row.sigma, beta).offset;
      EXPECT_GE(robust, chance - 1e-9);
    }
  }
}

}  // namespace
}  // namespace cvpm
