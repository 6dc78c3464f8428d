#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cvpm/riccati.hpp"

namespace cvpm {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Mat24 = Eigen::Matrix<double, 2, 4>;

/// Ego state in road-aligned Frenet coordinates:
/// longitudinal position s [m], lateral offset d [m], yaw phi [rad], speed v [m/s].
struct EgoState {
  double s = 0.0;
  double d = 0.0;
  double phi = 0.0;
  double v = 0.0;

  Vec4 vec() const { return Vec4(s, d, phi, v); }
  static EgoState from_vec(const Vec4& x) { return {x(0), x(1), x(2), x(3)}; }
};

/// Ego input: acceleration a [m/s^2] and front steering angle delta [rad].
struct EgoInput {
  double a = 0.0;
  double delta = 0.0;

  Vec2 vec() const { return Vec2(a, delta); }
  static EgoInput from_vec(const Vec2& u) { return {u(0), u(1)}; }
};

struct VehicleGeometry {
  double length = 4.5;
  double width = 1.8;
};

struct VehicleParams {
  double wheelbase = 2.9;
  VehicleGeometry geometry{};
  double a_min = -8.0;
  double a_max = 3.0;
  double delta_min = -0.4;
  double delta_max = 0.4;
};

inline EgoInput clamp_input(const EgoInput& u, const VehicleParams& p) {
  return {std::clamp(u.a, p.a_min, p.a_max), std::clamp(u.delta, p.delta_min, p.delta_max)};
}

// Curvature-aware kinematic bicycle in Frenet coordinates:
//   s'   = v cos(phi) / (1 - d*kappa)
//   d'   = v sin(phi)
//   phi' = v tan(delta)/L - kappa * s'
//   v'   = a
inline Vec4 ego_dynamics(const Vec4& x, const Vec2& u, double wheelbase, double kappa) {
  const double d = x(1), phi = x(2), v = x(3);
  const double alpha = 1.0 / (1.0 - d * kappa);
  const double s_dot = v * std::cos(phi) * alpha;
  Vec4 f;
  f(0) = s_dot;
  f(1) = v * std::sin(phi);
  f(2) = v * std::tan(u(1)) / wheelbase - kappa * s_dot;
  f(3) = u(0);
  return f;
}

/// Analytic Jacobians of the continuous dynamics at (state, u = 0). The speed
/// entering the input/state gains is clamped to v_floor so steering authority
/// does not vanish at standstill; callers flag that case as degenerate.
inline void ego_continuous_jacobians(const EgoState& state, const VehicleParams& params,
                                     double kappa, Mat4& Ac, Mat42& Bc,
                                     double v_floor = 0.1) {
  const double v = std::max(state.v, v_floor);
  const double phi = state.phi;
  const double alpha = 1.0 / (1.0 - state.d * kappa);
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  Ac = Mat4::Zero();
  Ac(0, 1) = v * cphi * kappa * alpha * alpha;
  Ac(0, 2) = -v * sphi * alpha;
  Ac(0, 3) = cphi * alpha;
  Ac(1, 2) = v * cphi;
  Ac(1, 3) = sphi;
  Ac.row(2) = -kappa * Ac.row(0);
  Bc = Mat42::Zero();
  Bc(2, 1) = v / params.wheelbase;  // tan(delta) slope at delta = 0
  Bc(3, 0) = 1.0;
}

/// One step of the continuous-time bicycle model, integrated with fixed-step
/// RK4 using substeps of at most T/10. Inputs are saturated at the actuator box.
inline EgoState step_ego_nonlinear(const EgoState& state, const EgoInput& input,
                                   const VehicleParams& params, double T, double curvature) {
  const EgoInput uc = clamp_input(input, params);
  const Vec2 u = uc.vec();
  Vec4 x = state.vec();
  const int substeps = 10;
  const double h = T / substeps;
  for (int i = 0; i < substeps; ++i) {
    const Vec4 k1 = ego_dynamics(x, u, params.wheelbase, curvature);
    const Vec4 k2 = ego_dynamics(x + 0.5 * h * k1, u, params.wheelbase, curvature);
    const Vec4 k3 = ego_dynamics(x + 0.5 * h * k2, u, params.wheelbase, curvature);
    const Vec4 k4 = ego_dynamics(x + h * k3, u, params.wheelbase, curvature);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return EgoState::from_vec(x);
}

/// Discrete-time affine ego model around a linearization state:
///   xi_{k+1} = A (xi_k - xi_lin) + B u_k + c
struct LinearEgoModel {
  Mat4 A = Mat4::Identity();
  Mat42 B = Mat42::Zero();
  Vec4 c = Vec4::Zero();
  double T = 0.1;
  Vec4 lin_state = Vec4::Zero();
  bool degenerate = false;  // speed at the linearization point was clamped

  Vec4 step(const Vec4& xi, const Vec2& u) const { return A * (xi - lin_state) + B * u + c; }
};

namespace detail {

// exp([[A, I], [0, 0]] T) = [[e^{AT}, int_0^T e^{As} ds], [0, I]];
// evaluated by scaling-and-squaring on a truncated series (order 12).
inline void zoh_matrices(const Mat4& Ac, double T, Mat4& Ad, Mat4& Psi) {
  Eigen::Matrix<double, 8, 8> M = Eigen::Matrix<double, 8, 8>::Zero();
  M.topLeftCorner<4, 4>() = Ac * T;
  M.topRightCorner<4, 4>() = Mat4::Identity() * T;

  int squarings = 0;
  double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5 && squarings < 30) {
    M *= 0.5;
    norm *= 0.5;
    ++squarings;
  }
  Eigen::Matrix<double, 8, 8> E = Eigen::Matrix<double, 8, 8>::Identity();
  Eigen::Matrix<double, 8, 8> term = Eigen::Matrix<double, 8, 8>::Identity();
  for (int i = 1; i <= 12; ++i) {
    term = term * M / static_cast<double>(i);
    E += term;
  }
  for (int i = 0; i < squarings; ++i) E = E * E;

  Ad = E.topLeftCorner<4, 4>();
  Psi = E.topRightCorner<4, 4>();
}

}  // namespace detail

/// Linearize the bicycle model at (state0, u = 0) and discretize with zero-order
/// hold of sampling time T. The gain clamp applies to the Jacobians only; the
/// drift keeps the true state, so a vehicle at rest stays a fixed point.
inline LinearEgoModel linearize_discretize(const EgoState& state0, const VehicleParams& params,
                                           double T, double curvature) {
  LinearEgoModel m;
  m.T = T;
  m.lin_state = state0.vec();
  m.degenerate = state0.v < 0.1;

  Mat4 Ac;
  Mat42 Bc;
  ego_continuous_jacobians(state0, params, curvature, Ac, Bc);

  Mat4 Psi;
  detail::zoh_matrices(Ac, T, m.A, Psi);
  m.B = Psi * Bc;

  const Vec4 f0 = ego_dynamics(m.lin_state, Vec2::Zero(), params.wheelbase, curvature);
  m.c = m.lin_state + Psi * f0;
  return m;
}

/// Dynamic-obstacle state: longitudinal position/velocity, lateral position/velocity.
struct ObstacleState {
  double s = 0.0;
  double vs = 0.0;
  double d = 0.0;
  double vd = 0.0;

  Vec4 vec() const { return Vec4(s, vs, d, vd); }
  static ObstacleState from_vec(const Vec4& x) { return {x(0), x(1), x(2), x(3)}; }
};

/// Double-integrator obstacle with an LQR intention controller,
///   xi_{k+1} = A xi_k + B u_k,   u_k = clip(K (xi_k − ref_k) + w_k).
/// The tracked reference is a constant-velocity cruise line: the longitudinal
/// position is anchored at the state the rollout starts from and advances at
/// vs_ref; the lateral target d_ref is absolute.
struct ObstacleModel {
  Mat4 A = Mat4::Identity();
  Mat42 B = Mat42::Zero();
  Mat24 K = Mat24::Zero();
  Vec4 xi_ref = Vec4::Zero();  // [s: ignored (re-anchored), vs_ref, d_ref, vd_ref]
  Vec2 u_min = Vec2(-4.0, -1.0);
  Vec2 u_max = Vec2(4.0, 1.0);
  VehicleGeometry geometry{};
  double T = 0.1;

  Mat4 closed_loop() const { return A + B * K; }

  /// Reference k steps after a rollout anchored at `anchor`.
  Vec4 reference_at(const ObstacleState& anchor, int k) const {
    Vec4 r = xi_ref;
    r(0) = anchor.s + k * T * xi_ref(1);
    r(2) = xi_ref(2) + k * T * xi_ref(3);
    return r;
  }
};

/// Zero-order-hold double integrator (decoupled axes) for sampling time T.
inline void double_integrator_zoh(double T, Mat4& A, Mat42& B) {
  A = Mat4::Identity();
  A(0, 1) = T;
  A(2, 3) = T;
  B = Mat42::Zero();
  B(0, 0) = 0.5 * T * T;
  B(1, 0) = T;
  B(2, 1) = 0.5 * T * T;
  B(3, 1) = T;
}

/// Build an obstacle model with gain from LQR weights. The returned K is the
/// stabilizing feedback (u = K(xi − ref)), i.e. the negated textbook gain.
inline ObstacleModel make_obstacle_model(double T, const Vec4& xi_ref, const Vec4& lqr_q,
                                         const Vec2& lqr_r, const Vec2& u_min, const Vec2& u_max,
                                         const VehicleGeometry& geometry) {
  ObstacleModel m;
  m.T = T;
  double_integrator_zoh(T, m.A, m.B);
  m.K = -lqr_gain(m.A, m.B, lqr_q.asDiagonal(), lqr_r.asDiagonal());
  m.xi_ref = xi_ref;
  m.u_min = u_min;
  m.u_max = u_max;
  m.geometry = geometry;
  return m;
}

/// Feedback-plus-disturbance input after clipping to the input box.
inline Vec2 obstacle_input(const ObstacleState& state, const ObstacleModel& model,
                           const Vec2& w, const Vec4& reference) {
  Vec2 u = model.K * (state.vec() - reference) + w;
  return u.cwiseMax(model.u_min).cwiseMin(model.u_max);
}

inline ObstacleState step_obstacle(const ObstacleState& state, const ObstacleModel& model,
                                   const Vec2& w, const Vec4& reference) {
  const Vec2 u = obstacle_input(state, model, w, reference);
  return ObstacleState::from_vec(model.A * state.vec() + model.B * u);
}

/// Single-step convenience: the cruise reference is anchored at the current state.
inline ObstacleState step_obstacle(const ObstacleState& state, const ObstacleModel& model,
                                   const Vec2& w) {
  return step_obstacle(state, model, w, model.reference_at(state, 0));
}

}  // namespace cvpm
