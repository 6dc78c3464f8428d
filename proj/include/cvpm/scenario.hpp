#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvpm/planners.hpp"
#include "cvpm/world.hpp"

namespace cvpm {

using json = nlohmann::json;

/// Scenario file violations, one entry per offending field.
struct ScenarioError : std::runtime_error {
  std::vector<std::string> fields;

  explicit ScenarioError(std::vector<std::string> f)
      : std::runtime_error("scenario validation failed: " + join(f)), fields(std::move(f)) {}

  static std::string join(const std::vector<std::string>& f) {
    std::string out;
    for (size_t i = 0; i < f.size(); ++i) out += (i ? "; " : "") + f[i];
    return out;
  }
};

struct CurvatureSegment {
  double s_start = 0.0;
  double kappa = 0.0;
};

struct Road {
  int lane_count = 3;
  double lane_width = 3.5;
  std::vector<CurvatureSegment> curvature;  // sorted by s_start; empty = straight

  double curvature_at(double s) const {
    double k = 0.0;
    for (const auto& seg : curvature) {
      if (s >= seg.s_start) k = seg.kappa;
    }
    return k;
  }
  // Lane 0 is the rightmost lane, centered at d = 0; lanes grow to the left.
  double d_min() const { return -0.5 * lane_width; }
  double d_max() const { return (lane_count - 0.5) * lane_width; }
  double lane_center(int lane) const { return lane * lane_width; }
};

struct ObstacleBehavior {
  enum class Type { model, recorded, scripted };
  Type type = Type::model;
  std::vector<Vec4> waypoints;  // recorded: N_sim + 1 states
  std::vector<Vec2> inputs;     // scripted: N_sim inputs, applied without clipping
};

struct ScenarioObstacle {
  Obstacle obstacle;
  Vec4 lqr_q = Vec4(0.2, 1.0, 1.5, 2.0);
  Vec2 lqr_r = Vec2(1.0, 1.0);
  ObstacleBehavior behavior;
};

struct Scenario {
  int schema_version = 1;
  std::string id = "unnamed";
  double T = 0.1;
  int N_sim = 50;
  Road road;
  EgoState ego_init{};
  PlannerConfig planner{};
  std::vector<ScenarioObstacle> obstacles;

  WorldState initial_world() const {
    WorldState w;
    w.ego = ego_init;
    for (const auto& so : obstacles) w.obstacles.push_back(so.obstacle);
    w.time = 0.0;
    return w;
  }
};

namespace detail {

inline Vec4 parse_obstacle_state(const json& j) {
  return Vec4(j.value("s", 0.0), j.value("vs", 0.0), j.value("d", 0.0), j.value("vd", 0.0));
}

template <int n>
inline Eigen::Matrix<double, n, 1> parse_array(const json& j, const char* field,
                                               std::vector<std::string>& errors,
                                               const Eigen::Matrix<double, n, 1>& fallback) {
  if (!j.contains(field)) return fallback;
  const auto& a = j.at(field);
  if (!a.is_array() || a.size() != n) {
    errors.push_back(std::string(field) + ": expected array of " + std::to_string(n));
    return fallback;
  }
  Eigen::Matrix<double, n, 1> v;
  for (int i = 0; i < n; ++i) v(i) = a.at(i).get<double>();
  return v;
}

}  // namespace detail

/// Parse and validate a scenario document. Collects every violation before
/// throwing so the error names all offending fields at once.
inline Scenario parse_scenario(const json& j) {
  std::vector<std::string> errors;
  Scenario sc;

  if (!j.contains("schema_version")) {
    errors.push_back("schema_version: required");
  } else if (!j.at("schema_version").is_number_integer() ||
             j.at("schema_version").get<int>() != 1) {
    errors.push_back("schema_version: unknown version (supported: 1)");
  }
  if (!errors.empty()) throw ScenarioError(errors);

  sc.id = j.value("id", std::string("unnamed"));
  sc.T = j.value("T", 0.1);
  if (sc.T <= 0.0) errors.push_back("T: must be positive");
  sc.N_sim = j.value("N_sim", 50);
  if (sc.N_sim < 1) errors.push_back("N_sim: must be >= 1");

  if (j.contains("road")) {
    const auto& r = j.at("road");
    sc.road.lane_count = r.value("lane_count", 3);
    sc.road.lane_width = r.value("lane_width", 3.5);
    if (sc.road.lane_count < 1) errors.push_back("road.lane_count: must be >= 1");
    if (sc.road.lane_width <= 0.0) errors.push_back("road.lane_width: must be positive");
    if (r.contains("curvature")) {
      for (const auto& seg : r.at("curvature")) {
        sc.road.curvature.push_back({seg.value("s_start", 0.0), seg.value("kappa", 0.0)});
      }
    }
  }

  auto& vp = sc.planner.vehicle;
  if (j.contains("ego")) {
    const auto& e = j.at("ego");
    if (e.contains("init")) {
      const auto& i = e.at("init");
      sc.ego_init = {i.value("s", 0.0), i.value("d", 0.0), i.value("phi", 0.0),
                     i.value("v", 0.0)};
      if (sc.ego_init.v < 0.0) errors.push_back("ego.init.v: must be >= 0");
    }
    vp.wheelbase = e.value("wheelbase", 2.9);
    if (e.contains("geometry")) {
      vp.geometry.length = e.at("geometry").value("length", 4.5);
      vp.geometry.width = e.at("geometry").value("width", 1.8);
    }
    vp.a_min = e.value("a_min", -8.0);
    vp.a_max = e.value("a_max", 3.0);
    vp.delta_min = e.value("delta_min", -0.4);
    vp.delta_max = e.value("delta_max", 0.4);
    if (vp.a_min >= vp.a_max) errors.push_back("ego.a_min: must be < a_max");
    if (vp.delta_min >= vp.delta_max) errors.push_back("ego.delta_min: must be < delta_max");
  }
  if (sc.road.lane_width <= vp.geometry.width) {
    errors.push_back("road.lane_width: must exceed ego width");
  }

  sc.planner.T = sc.T;
  // Road edges, pulled in by the half body width, bound the lateral state.
  sc.planner.state_lo(1) = sc.road.d_min() + 0.5 * vp.geometry.width;
  sc.planner.state_hi(1) = sc.road.d_max() - 0.5 * vp.geometry.width;
  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    sc.planner.N = p.value("N", 10);
    if (sc.planner.N < 1) errors.push_back("planner.N: must be >= 1");
    sc.planner.beta = p.value("beta", 0.9);
    if (!(sc.planner.beta >= 0.5 && sc.planner.beta < 1.0)) {
      errors.push_back("planner.beta: must lie in [0.5, 1)");
    }
    sc.planner.Q_diag = detail::parse_array<4>(p, "Q", errors, sc.planner.Q_diag);
    sc.planner.R_diag = detail::parse_array<2>(p, "R", errors, sc.planner.R_diag);
    if ((sc.planner.R_diag.array() <= 0.0).any()) errors.push_back("planner.R: must be > 0");
    if ((sc.planner.Q_diag.array() < 0.0).any()) errors.push_back("planner.Q: must be >= 0");
    if (p.contains("P") && p.at("P").is_array()) {
      const Vec4 pd = detail::parse_array<4>(p, "P", errors, Vec4::Zero());
      sc.planner.P_override = Mat4(pd.asDiagonal());
    }
    if (p.contains("xi_ref")) {
      const auto& r = p.at("xi_ref");
      sc.planner.xi_ref = Vec4(r.value("s", 0.0), r.value("d", 0.0), r.value("phi", 0.0),
                               r.value("v", sc.ego_init.v));
    } else {
      sc.planner.xi_ref = Vec4(0.0, sc.ego_init.d, 0.0, sc.ego_init.v);
    }
    sc.planner.margin = p.value("margin", 0.5);
    if (p.contains("d_min")) sc.planner.state_lo(1) = p.at("d_min").get<double>();
    if (p.contains("d_max")) sc.planner.state_hi(1) = p.at("d_max").get<double>();
    sc.planner.state_hi(3) = p.value("v_max", 60.0);
    sc.planner.solver.max_iter = p.value("solver_max_iter", 4000);
  } else {
    sc.planner.xi_ref = Vec4(0.0, sc.ego_init.d, 0.0, sc.ego_init.v);
    sc.planner.solver.max_iter = 4000;
  }

  int idx = 0;
  for (const auto& o : j.value("obstacles", json::array())) {
    const std::string tag = "obstacles[" + std::to_string(idx) + "]";
    ScenarioObstacle so;
    so.obstacle.id = o.value("id", tag);
    so.obstacle.state = ObstacleState::from_vec(
        o.contains("init") ? detail::parse_obstacle_state(o.at("init")) : Vec4::Zero());

    VehicleGeometry geom;
    if (o.contains("geometry")) {
      geom.length = o.at("geometry").value("length", 4.5);
      geom.width = o.at("geometry").value("width", 1.8);
    }
    Vec4 xi_ref(0.0, so.obstacle.state.vs, so.obstacle.state.d, 0.0);
    Vec2 u_min(-4.0, -1.0), u_max(3.0, 1.0);
    if (o.contains("model")) {
      const auto& m = o.at("model");
      if (m.contains("xi_ref")) {
        const auto& r = m.at("xi_ref");
        xi_ref = Vec4(0.0, r.value("vs", so.obstacle.state.vs),
                      r.value("d", so.obstacle.state.d), r.value("vd", 0.0));
      }
      so.lqr_q = detail::parse_array<4>(m, "lqr_q", errors, so.lqr_q);
      so.lqr_r = detail::parse_array<2>(m, "lqr_r", errors, so.lqr_r);
      u_min = detail::parse_array<2>(m, "u_min", errors, u_min);
      u_max = detail::parse_array<2>(m, "u_max", errors, u_max);
      if ((u_min.array() >= u_max.array()).any()) {
        errors.push_back(tag + ".model.u_min: must be < u_max");
      }
    }
    so.obstacle.model =
        make_obstacle_model(sc.T, xi_ref, so.lqr_q, so.lqr_r, u_min, u_max, geom);

    const double inf = std::numeric_limits<double>::infinity();
    so.obstacle.disturbance = TruncatedGaussian::zero(2);
    if (o.contains("disturbance")) {
      const auto& d = o.at("disturbance");
      const Vec2 std_dev = detail::parse_array<2>(d, "std", errors, Vec2::Zero());
      const Vec2 support = detail::parse_array<2>(d, "support", errors,
                                                  Vec2::Constant(inf));
      so.obstacle.disturbance.cov = std_dev.cwiseProduct(std_dev).asDiagonal();
      so.obstacle.disturbance.lo = -support;
      so.obstacle.disturbance.hi = support;
      if ((std_dev.array() < 0.0).any()) errors.push_back(tag + ".disturbance.std: must be >= 0");
    }
    so.obstacle.noise = TruncatedGaussian::zero(4);
    if (o.contains("noise")) {
      const auto& nj = o.at("noise");
      const Vec4 std_dev = detail::parse_array<4>(nj, "std", errors, Vec4::Zero());
      const Vec4 support = detail::parse_array<4>(nj, "support", errors,
                                                  Vec4::Constant(inf));
      so.obstacle.noise.cov = std_dev.cwiseProduct(std_dev).asDiagonal();
      so.obstacle.noise.lo = -support;
      so.obstacle.noise.hi = support;
    }

    if (o.contains("behavior")) {
      const auto& b = o.at("behavior");
      const std::string type = b.value("type", std::string("model"));
      if (type == "model") {
        so.behavior.type = ObstacleBehavior::Type::model;
      } else if (type == "recorded") {
        so.behavior.type = ObstacleBehavior::Type::recorded;
        for (const auto& w : b.value("waypoints", json::array())) {
          so.behavior.waypoints.push_back(
              Vec4(w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(),
                   w.at(3).get<double>()));
        }
        if (static_cast<int>(so.behavior.waypoints.size()) != sc.N_sim + 1) {
          errors.push_back(tag + ".behavior.waypoints: " + so.obstacle.id + " needs exactly " +
                           std::to_string(sc.N_sim + 1) + " entries, got " +
                           std::to_string(so.behavior.waypoints.size()));
        }
      } else if (type == "scripted") {
        so.behavior.type = ObstacleBehavior::Type::scripted;
        for (const auto& u : b.value("inputs", json::array())) {
          so.behavior.inputs.push_back(Vec2(u.at(0).get<double>(), u.at(1).get<double>()));
        }
        if (static_cast<int>(so.behavior.inputs.size()) != sc.N_sim) {
          errors.push_back(tag + ".behavior.inputs: " + so.obstacle.id + " needs exactly " +
                           std::to_string(sc.N_sim) + " entries, got " +
                           std::to_string(so.behavior.inputs.size()));
        }
      } else {
        errors.push_back(tag + ".behavior.type: unknown type '" + type + "'");
      }
    }
    if (sc.road.lane_width <= geom.width) {
      errors.push_back(tag + ".geometry.width: must be below road.lane_width");
    }
    sc.obstacles.push_back(std::move(so));
    ++idx;
  }

  if (!errors.empty()) throw ScenarioError(errors);
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"file: cannot open " + path.string()});
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ScenarioError({"json: " + std::string(e.what())});
  }
  Scenario sc = parse_scenario(j);
  if (sc.id == "unnamed") sc.id = path.stem().string();
  return sc;
}

}  // namespace cvpm
