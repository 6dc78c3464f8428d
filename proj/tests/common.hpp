#pragma once

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cvpm/planners.hpp"
#include "cvpm/world.hpp"

namespace cvpm::testing {

// Independent standard-normal quantile: bisection on erf. Deliberately kept
// apart from the library implementation so the two can cross-check each other.
inline double quantile_oracle(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
    (cdf < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline Obstacle make_cruise_obstacle(double s, double vs, double d, double w_std_s,
                                     double w_std_d, double w_support_s, double w_support_d,
                                     double T = 0.1) {
  Obstacle o;
  o.id = "obs";
  o.state = {s, vs, d, 0.0};
  o.model = make_obstacle_model(T, Vec4(0.0, vs, d, 0.0), Vec4(0.2, 1.0, 1.5, 2.0),
                                Vec2(1.0, 1.0), Vec2(-4.0, -1.0), Vec2(3.0, 1.0),
                                VehicleGeometry{4.5, 1.8});
  o.disturbance = TruncatedGaussian::diagonal(
      Vec2(w_std_s * w_std_s, w_std_d * w_std_d), Vec2(-w_support_s, -w_support_d),
      Vec2(w_support_s, w_support_d));
  o.noise = TruncatedGaussian::zero(4);
  return o;
}

inline PlannerConfig make_cfg(int N = 6, double v_ref = 20.0) {
  PlannerConfig cfg;
  cfg.N = N;
  cfg.T = 0.1;
  cfg.xi_ref = Vec4(0.0, 0.0, 0.0, v_ref);
  cfg.state_lo = Vec4(-std::numeric_limits<double>::infinity(), -1.75, -0.6, 0.0);
  cfg.state_hi = Vec4(std::numeric_limits<double>::infinity(), 8.75, 0.6, 60.0);
  cfg.solver.max_iter = 8000;
  return cfg;
}

inline WorldState lead_world(double gap, double v_ego, double v_lead, double w_std = 0.3,
                             double w_support = 1.0) {
  WorldState w;
  w.ego = {0.0, 0.0, 0.0, v_ego};
  w.obstacles.push_back(
      make_cruise_obstacle(gap, v_lead, 0.0, w_std, 0.3 * w_std, w_support, 0.3 * w_support));
  return w;
}

// Exhaustive search over a per-step input grid; reports whether any candidate
// satisfies all rows. Independent route to the feasibility verdict.
inline bool grid_feasible(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int N,
                          const VehicleParams& vp, int levels = 5) {
  std::vector<double> a_levels(levels), d_levels(levels);
  for (int i = 0; i < levels; ++i) {
    const double t = static_cast<double>(i) / (levels - 1);
    a_levels[i] = vp.a_min + t * (vp.a_max - vp.a_min);
    d_levels[i] = vp.delta_min + t * (vp.delta_max - vp.delta_min);
  }
  const int per_step = levels * levels;
  long total = 1;
  for (int k = 0; k < N; ++k) total *= per_step;
  Eigen::VectorXd U(2 * N);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int k = 0; k < N; ++k) {
      const int cell = rem % per_step;
      rem /= per_step;
      U(2 * k) = a_levels[cell % levels];
      U(2 * k + 1) = d_levels[cell / levels];
    }
    if (b.size() == 0 || (A * U - b).maxCoeff() <= 1e-9) return true;
  }
  return false;
}

inline std::string strip_timing_columns(const std::string& csv) {
  // Drop the wall-clock columns (smpc_ms, cvpm_ms) from a trace table.
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    int col = 0;
    std::string kept;
    while (std::getline(ls, cell, ',')) {
      if (col != 8 && col != 9) kept += cell + ",";
      ++col;
    }
    out += kept + "\n";
  }
  return out;
}

}  // namespace cvpm::testing
