#pragma once

#include <string>
#include <vector>

#include "cvpm/uncertainty.hpp"
#include "cvpm/vehicle_models.hpp"

namespace cvpm {

/// One traffic participant as the planner sees it: measured state, assumed
/// model, and the assumed disturbance/noise distributions.
struct Obstacle {
  std::string id;
  ObstacleState state;
  ObstacleModel model;
  TruncatedGaussian disturbance = TruncatedGaussian::zero(2);  // input disturbance w
  TruncatedGaussian noise = TruncatedGaussian::zero(4);        // state measurement noise
};

/// Snapshot of the environment at one replanning instant.
struct WorldState {
  EgoState ego;
  std::vector<Obstacle> obstacles;
  double time = 0.0;
};

}  // namespace cvpm
