#include "cvpm/vehicle_models.hpp"

#include <random>

#include "common.hpp"
#include "gtest/gtest.h"

namespace cvpm {
namespace {

TEST(StepEgoNonlinear, EquilibriumAtRest) {
  const EgoState x0{0, 0, 0, 0};
  const EgoState x1 = step_ego_nonlinear(x0, {0, 0}, VehicleParams{}, 0.1, 0.0);
  EXPECT_EQ(x1.s, 0.0);
  EXPECT_EQ(x1.d, 0.0);
  EXPECT_EQ(x1.phi, 0.0);
  EXPECT_EQ(x1.v, 0.0);
}

TEST(StepEgoNonlinear, StraightLineAnalytic) {
  const EgoState x1 = step_ego_nonlinear({0, 0, 0, 10}, {0, 0}, VehicleParams{}, 0.1, 0.0);
  EXPECT_NEAR(x1.s, 1.0, 1e-12);
  EXPECT_NEAR(x1.d, 0.0, 1e-12);
  EXPECT_NEAR(x1.v, 10.0, 1e-12);
}

TEST(StepEgoNonlinear, ConstantAccelerationClosedForm) {
  // s = v0 T + a T^2/2, v = v0 + a T
  const EgoState x1 = step_ego_nonlinear({0, 0, 0, 10}, {2, 0}, VehicleParams{}, 0.1, 0.0);
  EXPECT_NEAR(x1.s, 1.01, 1e-12);
  EXPECT_NEAR(x1.v, 10.2, 1e-12);
}

TEST(StepEgoNonlinear, SaturatesAtActuatorBox) {
  VehicleParams vp;
  const EgoState a = step_ego_nonlinear({0, 0, 0, 10}, {100.0, 0}, vp, 0.1, 0.0);
  const EgoState b = step_ego_nonlinear({0, 0, 0, 10}, {vp.a_max, 0}, vp, 0.1, 0.0);
  EXPECT_DOUBLE_EQ(a.v, b.v);
}

TEST(LinearizeDiscretize, RestIsFixedPoint) {
  const EgoState x0{3.0, -1.0, 0.2, 0.0};
  const LinearEgoModel m = linearize_discretize(x0, VehicleParams{}, 0.1, 0.0);
  EXPECT_TRUE(m.degenerate);
  const Vec4 next = m.step(x0.vec(), Vec2::Zero());
  EXPECT_NEAR((next - x0.vec()).norm(), 0.0, 1e-12);
}

TEST(LinearizeDiscretize, MatchesNonlinearAtLinearizationPoint) {
  const EgoState x0{0, 0, 0, 10};
  const LinearEgoModel m = linearize_discretize(x0, VehicleParams{}, 0.1, 0.0);
  const Vec4 lin = m.step(x0.vec(), Vec2::Zero());
  const Vec4 nl = step_ego_nonlinear(x0, {0, 0}, VehicleParams{}, 0.1, 0.0).vec();
  EXPECT_NEAR((lin - nl).norm(), 0.0, 1e-6);
}

TEST(LinearizeDiscretize, JacobianMatchesFiniteDifferences) {
  const VehicleParams vp;
  const EgoState x0{5.0, 0.7, 0.05, 12.0};
  const double kappa = 0.002;
  Mat4 Ac;
  Mat42 Bc;
  ego_continuous_jacobians(x0, vp, kappa, Ac, Bc);

  const double h = 1e-6;
  Mat4 Ac_fd;
  for (int j = 0; j < 4; ++j) {
    Vec4 xp = x0.vec(), xm = x0.vec();
    xp(j) += h;
    xm(j) -= h;
    Ac_fd.col(j) =
        (ego_dynamics(xp, Vec2::Zero(), vp.wheelbase, kappa) -
         ego_dynamics(xm, Vec2::Zero(), vp.wheelbase, kappa)) /
        (2 * h);
  }
  Mat42 Bc_fd;
  for (int j = 0; j < 2; ++j) {
    Vec2 up = Vec2::Zero(), um = Vec2::Zero();
    up(j) += h;
    um(j) -= h;
    Bc_fd.col(j) = (ego_dynamics(x0.vec(), up, vp.wheelbase, kappa) -
                    ego_dynamics(x0.vec(), um, vp.wheelbase, kappa)) /
                   (2 * h);
  }
  EXPECT_LT((Ac - Ac_fd).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((Bc - Bc_fd).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(LinearizeDiscretize, OneStepErrorQuadraticInPerturbation) {
  const VehicleParams vp;
  const EgoState lin_point{0, 0, 0, 15};
  const LinearEgoModel m = linearize_discretize(lin_point, vp, 0.1, 0.0);

  double worst_ratio = 0.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec4 dx(0.0, 0.5 * unit(rng), 0.05 * unit(rng), 0.5 * unit(rng));
    const Vec2 u(1.0 * unit(rng), 0.05 * unit(rng));
    const Vec4 xi = lin_point.vec() + dx;
    const Vec4 lin = m.step(xi, u);
    const Vec4 nl =
        step_ego_nonlinear(EgoState::from_vec(xi), EgoInput::from_vec(u), vp, 0.1, 0.0).vec();
    const double denom = dx.squaredNorm() + u.squaredNorm();
    if (denom > 1e-8) worst_ratio = std::max(worst_ratio, (lin - nl).norm() / denom);
  }
  EXPECT_LT(worst_ratio, 0.2);  // empirical quadratic-remainder constant, 2x slack
}

TEST(StepObstacle, ReferenceEquilibrium) {
  const ObstacleModel model = make_obstacle_model(
      0.1, Vec4(0, 0, 1.0, 0), Vec4::Ones(), Vec2::Ones(), Vec2(-4, -1), Vec2(3, 1), {});
  const ObstacleState at_ref{5.0, 0.0, 1.0, 0.0};
  const ObstacleState next = step_obstacle(at_ref, model, Vec2::Zero());
  EXPECT_NEAR((next.vec() - at_ref.vec()).norm(), 0.0, 1e-12);
}

TEST(StepObstacle, ZeroOrderHoldIntegration) {
  ObstacleModel model;
  double_integrator_zoh(0.1, model.A, model.B);
  model.K.setZero();  // open loop: u equals the disturbance
  model.u_min = Vec2(-4, -1);
  model.u_max = Vec2(3, 1);
  const ObstacleState next = step_obstacle({0, 10, 0, 0}, model, Vec2(2.0, 0.0));
  EXPECT_NEAR(next.s, 1.01, 1e-12);
  EXPECT_NEAR(next.vs, 10.2, 1e-12);
  EXPECT_NEAR(next.d, 0.0, 1e-12);
}

TEST(StepObstacle, SaturatesExactlyAtBound) {
  const ObstacleModel model = make_obstacle_model(
      0.1, Vec4(0, 10, 0, 0), Vec4::Ones(), Vec2::Ones(), Vec2(-4, -1), Vec2(3, 1), {});
  const ObstacleState state{0, 10, 0, 0};
  const Vec2 u = obstacle_input(state, model, Vec2(50.0, 0.0), model.reference_at(state, 0));
  EXPECT_DOUBLE_EQ(u(0), 3.0);
}

TEST(StepObstacle, AppliedInputAlwaysInBox) {
  const ObstacleModel model = make_obstacle_model(
      0.1, Vec4(0, 14, 0, 0), Vec4(0.2, 1, 1.5, 2), Vec2::Ones(), Vec2(-4, -1), Vec2(3, 1), {});
  std::mt19937_64 rng(42);
  std::normal_distribution<double> big(0.0, 10.0);
  for (int i = 0; i < 100000; ++i) {
    const ObstacleState state{big(rng), 14 + big(rng), big(rng), big(rng)};
    const Vec2 u = obstacle_input(state, model, Vec2(big(rng), big(rng)),
                                  model.reference_at(state, 0));
    ASSERT_GE(u(0), model.u_min(0));
    ASSERT_LE(u(0), model.u_max(0));
    ASSERT_GE(u(1), model.u_min(1));
    ASSERT_LE(u(1), model.u_max(1));
  }
}

TEST(StepObstacle, ConvergesMonotonicallyInRiccatiNorm) {
  const double T = 0.1;
  Mat4 A;
  Mat42 B;
  double_integrator_zoh(T, A, B);
  const Vec4 q(0.2, 1.0, 1.5, 2.0);
  const Vec2 r(1.0, 1.0);
  const Eigen::MatrixXd P = solve_dare(A, B, Mat4(q.asDiagonal()), Mat2(r.asDiagonal()));

  ObstacleModel model =
      make_obstacle_model(T, Vec4(0, 15, 2.0, 0), q, r, Vec2(-50, -50), Vec2(50, 50), {});
  ObstacleState state{0.0, 14.0, 1.0, 0.3};  // small offset: no saturation
  const ObstacleState anchor = state;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 60; ++k) {
    const Vec4 e = state.vec() - model.reference_at(anchor, k);
    const double V = e.dot(P * e);
    ASSERT_LE(V, prev + 1e-12);
    prev = V;
    state = step_obstacle(state, model, Vec2::Zero(), model.reference_at(anchor, k));
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(LqrGain, ScalarRiccatiFixedPoint) {
  Eigen::MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
  A << 1;
  B << 1;
  Q << 1;
  R << 1;
  const double golden = 0.5 * (1.0 + std::sqrt(5.0));
  EXPECT_NEAR(solve_dare(A, B, Q, R)(0, 0), golden, 1e-10);
  EXPECT_NEAR(lqr_gain(A, B, Q, R)(0, 0), golden / (1.0 + golden), 1e-10);
}

TEST(LqrGain, ZeroStateCostGivesZeroGain) {
  Eigen::MatrixXd A(2, 2), B(2, 1), Q(2, 2), R(1, 1);
  A << 1, 0.1, 0, 1;
  B << 0.005, 0.1;
  Q.setZero();
  R << 1;
  EXPECT_NEAR(lqr_gain(A, B, Q, R).norm(), 0.0, 1e-12);
}

TEST(LqrGain, GainShrinksWithInputPenalty) {
  Eigen::MatrixXd A(2, 2), B(2, 1), Q(2, 2), R1(1, 1), R10(1, 1);
  A << 1, 0.1, 0, 1;
  B << 0.005, 0.1;
  Q = Eigen::MatrixXd::Identity(2, 2);
  R1 << 1;
  R10 << 10;
  EXPECT_LT(lqr_gain(A, B, Q, R10).norm(), lqr_gain(A, B, Q, R1).norm());
}

TEST(LqrGain, ClosedLoopStrictlyStable) {
  const ObstacleModel model = make_obstacle_model(
      0.1, Vec4(0, 15, 0, 0), Vec4(0.2, 1, 1.5, 2), Vec2(1, 1), Vec2(-4, -1), Vec2(3, 1), {});
  const auto eig = model.closed_loop().eigenvalues();
  for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(eig(i)), 1.0);
}

}  // namespace
}  // namespace cvpm
