#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "cvpm/gaussian.hpp"
#include "cvpm/world.hpp"

namespace cvpm {

enum class Side { front, rear, left, right };

inline const char* side_name(Side s) {
  switch (s) {
    case Side::front: return "front";
    case Side::rear: return "rear";
    case Side::left: return "left";
    default: return "right";
  }
}

/// Separating direction for an obstacle at relative position (ds, dd) =
/// obstacle − ego: the side with the largest nominal signed margin, ties broken
/// front > rear > left > right.
inline Side select_side(double ds, double dd, double infl_s, double infl_d) {
  const double margins[4] = {ds - infl_s, -ds - infl_s, dd - infl_d, -dd - infl_d};
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (margins[i] > margins[best]) best = i;
  }
  return static_cast<Side>(best);
}

/// Half-space on the ego state at one prediction step: normal·xi_k + offset <= 0.
struct Halfspace {
  Vec4 normal = Vec4::Zero();
  double offset = 0.0;
  int step = 0;  // k in 1..N
};

/// Half-space row plus its dependence on the generating obstacle: the offset is
/// c + g·p with p the obstacle (s, d) position at the row's step.
struct SafeRow {
  Halfspace h;           // offset evaluated at the nominal obstacle position
  int obstacle = 0;
  Side side = Side::front;
  double sigma = 0.0;    // variance of the random offset
  Vec2 g = Vec2::Zero(); // offset sensitivity to the obstacle position
  double c = 0.0;        // deterministic part (inflation)
  Vec2 p_nominal = Vec2::Zero();
};

/// Stacked half-space representation of the collision-free ego sequence set:
/// Q·Xi_N + q <= 0 with a Gaussian offset q ~ N(q_bar, sigma_q).
struct SafeSetSequence {
  Eigen::MatrixXd Q;       // n_q x 4N, block-sparse: row for step k touches block k only
  Eigen::VectorXd q_bar;   // n_q
  Eigen::MatrixXd sigma_q; // n_q x n_q, regularized
  std::vector<SafeRow> rows;
  int horizon = 0;

  int n_rows() const { return static_cast<int>(rows.size()); }
};

/// Axis-aligned interval bounds on an obstacle state over steps 0..N.
struct ReachTube {
  std::vector<Vec4> lo;  // N+1 entries
  std::vector<Vec4> hi;

  int steps() const { return static_cast<int>(lo.size()) - 1; }
};

namespace detail {

// y += M x for interval vectors, skipping zero coefficients so that infinite
// bounds do not produce NaNs.
template <int R, int C>
inline void interval_mat_add(const Eigen::Matrix<double, R, C>& M,
                             const Eigen::Matrix<double, C, 1>& xlo,
                             const Eigen::Matrix<double, C, 1>& xhi,
                             Eigen::Matrix<double, R, 1>& ylo,
                             Eigen::Matrix<double, R, 1>& yhi) {
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      const double m = M(i, j);
      if (m == 0.0) continue;
      if (m > 0.0) {
        ylo(i) += m * xlo(j);
        yhi(i) += m * xhi(j);
      } else {
        ylo(i) += m * xhi(j);
        yhi(i) += m * xlo(j);
      }
    }
  }
}

}  // namespace detail

/// Outer bound on the obstacle states reachable under the clipped feedback with
/// disturbance support [w_lo, w_hi], starting from the measured state inflated
/// by the measurement-noise support. Interval arithmetic over Eq.-(2)-style
/// dynamics; sound but not tight (state/input dependency is dropped).
inline ReachTube reach_tube(const ObstacleState& state, const ObstacleModel& model, int N,
                            const Vec2& w_lo, const Vec2& w_hi, const Vec4& noise_lo,
                            const Vec4& noise_hi) {
  if (N < 1) throw std::invalid_argument("reach_tube: N must be >= 1");
  ReachTube tube;
  tube.lo.resize(N + 1);
  tube.hi.resize(N + 1);
  tube.lo[0] = state.vec() + noise_lo;
  tube.hi[0] = state.vec() + noise_hi;
  for (int k = 0; k < N; ++k) {
    const Vec4 ref = model.reference_at(state, k);
    // Input interval: clip(K (xi - ref) + w) stays inside the input box.
    Vec2 ulo = w_lo, uhi = w_hi;
    Vec4 elo = tube.lo[k] - ref, ehi = tube.hi[k] - ref;
    detail::interval_mat_add<2, 4>(model.K, elo, ehi, ulo, uhi);
    ulo = ulo.cwiseMax(model.u_min).cwiseMin(model.u_max);
    uhi = uhi.cwiseMax(model.u_min).cwiseMin(model.u_max);
    Vec4 xlo = Vec4::Zero(), xhi = Vec4::Zero();
    detail::interval_mat_add<4, 4>(model.A, tube.lo[k], tube.hi[k], xlo, xhi);
    detail::interval_mat_add<4, 2>(model.B, ulo, uhi, xlo, xhi);
    tube.lo[k + 1] = xlo;
    tube.hi[k + 1] = xhi;
  }
  return tube;
}

inline ReachTube reach_tube(const Obstacle& o, int N) {
  return reach_tube(o.state, o.model, N, o.disturbance.lo.head<2>(), o.disturbance.hi.head<2>(),
                    o.noise.lo.head<4>(), o.noise.hi.head<4>());
}

/// One separating half-space per obstacle per step, sides selected at the
/// current relative position and frozen over the horizon. Bodies enter as
/// axis-aligned rectangles, Minkowski-inflated by half-dimensions plus margin.
inline SafeSetSequence build_safe_sequence(const EgoState& ego0,
                                           const std::vector<Obstacle>& obstacles, int N,
                                           const VehicleGeometry& ego_geom, double margin) {
  if (N < 1) throw std::invalid_argument("build_safe_sequence: N must be >= 1");
  SafeSetSequence seq;
  seq.horizon = N;
  const int n_obs = static_cast<int>(obstacles.size());
  const int n_q = n_obs * N;
  seq.Q = Eigen::MatrixXd::Zero(n_q, 4 * N);
  seq.q_bar = Eigen::VectorXd::Zero(n_q);
  seq.sigma_q = Eigen::MatrixXd::Zero(n_q, n_q);
  seq.rows.reserve(n_q);

  for (int o = 0; o < n_obs; ++o) {
    const Obstacle& obs = obstacles[o];
    const double infl_s = 0.5 * (ego_geom.length + obs.model.geometry.length) + margin;
    const double infl_d = 0.5 * (ego_geom.width + obs.model.geometry.width) + margin;
    const Side side =
        select_side(obs.state.s - ego0.s, obs.state.d - ego0.d, infl_s, infl_d);

    const SequenceDistribution dist = predict_obstacle_sequence(
        obs.state, obs.model, N, obs.disturbance.cov, obs.noise.cov);

    // Selector of the row offsets over the obstacle state sequence.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N, 4 * N);
    for (int k = 1; k <= N; ++k) {
      SafeRow row;
      row.obstacle = o;
      row.side = side;
      row.h.step = k;
      switch (side) {
        case Side::front:
          row.h.normal = Vec4(1, 0, 0, 0);
          row.g = Vec2(-1.0, 0.0);
          row.c = infl_s;
          break;
        case Side::rear:
          row.h.normal = Vec4(-1, 0, 0, 0);
          row.g = Vec2(1.0, 0.0);
          row.c = infl_s;
          break;
        case Side::left:
          row.h.normal = Vec4(0, 1, 0, 0);
          row.g = Vec2(0.0, -1.0);
          row.c = infl_d;
          break;
        case Side::right:
          row.h.normal = Vec4(0, -1, 0, 0);
          row.g = Vec2(0.0, 1.0);
          row.c = infl_d;
          break;
      }
      row.p_nominal =
          Vec2(dist.mean(4 * (k - 1) + 0), dist.mean(4 * (k - 1) + 2));
      row.h.offset = row.c + row.g.dot(row.p_nominal);

      const int r = o * N + (k - 1);
      seq.Q.block<1, 4>(r, 4 * (k - 1)) = row.h.normal.transpose();
      G(k - 1, 4 * (k - 1) + 0) = row.g(0);
      G(k - 1, 4 * (k - 1) + 2) = row.g(1);
      seq.q_bar(r) = row.h.offset;
      seq.rows.push_back(row);
    }

    const Eigen::MatrixXd sig = offset_covariance(G, dist);
    seq.sigma_q.block(o * N, o * N, N, N) = sig;
    for (int k = 0; k < N; ++k) seq.rows[o * N + k].sigma = sig(k, k);
  }
  return seq;
}

/// Chance tightening of a linear constraint with Gaussian offset: the offset is
/// shifted toward the safe side by the beta-quantile of the row's offset noise.
inline Halfspace tighten_chance(const Halfspace& h, double sigma_row, double beta) {
  if (!(beta >= 0.5 && beta < 1.0)) {
    throw std::invalid_argument("tighten_chance: beta must lie in [0.5, 1)");
  }
  if (sigma_row < 0.0) throw std::invalid_argument("tighten_chance: negative variance");
  Halfspace out = h;
  out.offset += normal_quantile(beta) * std::sqrt(sigma_row);
  return out;
}

/// Robust tightening: the offset becomes its worst case over the obstacle
/// positions in the reach tube at the row's step.
inline Halfspace tighten_robust(const SafeRow& row, const ReachTube& tube) {
  if (row.h.step > tube.steps()) {
    throw std::invalid_argument("tighten_robust: tube does not cover the row step");
  }
  const Vec4& lo = tube.lo[row.h.step];
  const Vec4& hi = tube.hi[row.h.step];
  const double ps[2] = {row.g(0) >= 0.0 ? hi(0) : lo(0), row.g(1) >= 0.0 ? hi(2) : lo(2)};
  Halfspace out = row.h;
  out.offset = row.c;
  for (int i = 0; i < 2; ++i) {
    if (row.g(i) != 0.0) out.offset += row.g(i) * ps[i];
  }
  return out;
}

}  // namespace cvpm
