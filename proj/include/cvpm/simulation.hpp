#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cvpm/scenario.hpp"
#include "cvpm/scheme.hpp"

namespace cvpm {

enum class SchemeId { smpc_cvpm, smpc_ftp };

inline const char* scheme_name(SchemeId s) {
  return s == SchemeId::smpc_cvpm ? "smpc_cvpm" : "smpc_ftp";
}

struct StepRecord {
  double t = 0.0;
  EgoState ego;  // state at the decision instant
  std::vector<ObstacleState> obstacles;
  EgoInput input;
  DecisionTrace trace;
  double stage_cost = 0.0;
  bool collision = false;  // overlap after applying the input
};

struct TimingStats {
  double smpc_mean_ms = 0.0;
  double safety_check_mean_ms = 0.0;
  double cvpm_mean_ms = 0.0;
  double ftp_mean_ms = 0.0;
};

struct SimulationTrace {
  std::string scenario_id;
  std::string scheme;
  uint64_t seed = 0;
  bool supported = true;  // false: baseline could not bootstrap a backup
  std::vector<StepRecord> steps;
  EgoState final_ego;  // post-step state after the last input
  std::vector<ObstacleState> final_obstacles;
  double J_sim = 0.0;
  int collisions = 0;
  std::map<std::string, int> branch_counts;
  TimingStats timing;
};

/// Mean recorded stage cost (the closed-loop performance metric).
inline double average_stage_cost(const SimulationTrace& trace) {
  if (trace.steps.empty()) throw std::invalid_argument("average_stage_cost: empty trace");
  double sum = 0.0;
  for (const auto& st : trace.steps) sum += st.stage_cost;
  return sum / static_cast<double>(trace.steps.size());
}

/// Closed-rectangle overlap in (s, d); touching counts as collision.
inline bool collision_check(const EgoState& ego, const std::vector<Obstacle>& obstacles,
                            const VehicleGeometry& ego_geom) {
  for (const auto& o : obstacles) {
    const double gap_s =
        std::abs(ego.s - o.state.s) - 0.5 * (ego_geom.length + o.model.geometry.length);
    const double gap_d =
        std::abs(ego.d - o.state.d) - 0.5 * (ego_geom.width + o.model.geometry.width);
    if (gap_s <= 0.0 && gap_d <= 0.0) return true;
  }
  return false;
}

/// Deterministic rng for the disturbance stream of one model-driven obstacle.
inline std::mt19937_64 obstacle_rng(uint64_t seed, int index) {
  std::seed_seq seq{static_cast<uint32_t>(seed & 0xffffffffu),
                    static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index)};
  return std::mt19937_64(seq);
}

/// Run one scenario in closed loop under the selected scheme. Fully
/// deterministic given (scenario, scheme, seed) up to the wall-time fields.
inline SimulationTrace run_closed_loop(const Scenario& sc, SchemeId scheme, uint64_t seed,
                                       BranchMode mode = BranchMode::lazy) {
  SimulationTrace trace;
  trace.scenario_id = sc.id;
  trace.scheme = scheme_name(scheme);
  trace.seed = seed;
  trace.branch_counts = {{"smpc_safe", 0}, {"cvpm_robust", 0}, {"cvpm_prob", 0},
                         {"ftp_backup", 0}};

  WorldState world = sc.initial_world();
  const int n_obs = static_cast<int>(sc.obstacles.size());

  std::vector<std::mt19937_64> rngs;
  std::vector<ObstacleState> anchors;  // episode anchor of each cruise reference
  for (int i = 0; i < n_obs; ++i) {
    rngs.push_back(obstacle_rng(seed, i));
    anchors.push_back(sc.obstacles[i].obstacle.state);
  }

  FtpBackup backup;
  if (scheme == SchemeId::smpc_ftp) {
    PlannerConfig cfg = sc.planner;
    cfg.curvature = sc.road.curvature_at(world.ego.s);
    const PlanResult boot = solve_cvpm_robust(world, cfg);
    if (boot.status != SolveStatus::optimal) {
      trace.supported = false;
      return trace;
    }
    backup.inputs = boot.inputs.u;
    backup.valid_from = 0.0;
  }

  double smpc_sum = 0, safety_sum = 0, cvpm_sum = 0, ftp_sum = 0;
  for (int t = 0; t < sc.N_sim; ++t) {
    world.time = t * sc.T;
    PlannerConfig cfg = sc.planner;
    cfg.curvature = sc.road.curvature_at(world.ego.s);

    StepRecord rec;
    rec.t = world.time;
    rec.ego = world.ego;
    for (const auto& o : world.obstacles) rec.obstacles.push_back(o.state);

    EgoInput u;
    if (scheme == SchemeId::smpc_cvpm) {
      auto [input, dtrace] = smpc_cvpm_step(world, cfg, mode);
      u = input;
      rec.trace = dtrace;
    } else {
      auto [input, next_backup, dtrace] = smpc_ftp_step(world, backup, cfg);
      u = input;
      backup = next_backup;
      rec.trace = dtrace;
    }
    rec.input = u;

    world.ego = step_ego_nonlinear(world.ego, u, cfg.vehicle, sc.T, cfg.curvature);
    for (int i = 0; i < n_obs; ++i) {
      auto& obs = world.obstacles[i];
      const auto& beh = sc.obstacles[i].behavior;
      switch (beh.type) {
        case ObstacleBehavior::Type::model: {
          const Vec2 w = sample(sc.obstacles[i].obstacle.disturbance, rngs[i]).head<2>();
          obs.state =
              step_obstacle(obs.state, obs.model, w, obs.model.reference_at(anchors[i], t));
          break;
        }
        case ObstacleBehavior::Type::recorded:
          obs.state = ObstacleState::from_vec(beh.waypoints[t + 1]);
          break;
        case ObstacleBehavior::Type::scripted:
          // Unanticipated by construction: the scripted input bypasses the
          // feedback model and its input bounds entirely.
          obs.state = ObstacleState::from_vec(obs.model.A * obs.state.vec() +
                                              obs.model.B * beh.inputs[t]);
          break;
      }
    }

    rec.stage_cost = stage_cost(world.ego, u, cfg);
    rec.collision = collision_check(world.ego, world.obstacles, cfg.vehicle.geometry);

    trace.branch_counts[branch_name(rec.trace.branch)] += 1;
    if (rec.collision) ++trace.collisions;
    smpc_sum += rec.trace.smpc_ms;
    safety_sum += rec.trace.safety_ms;
    cvpm_sum += rec.trace.cvpm_ms;
    ftp_sum += rec.trace.ftp_ms;
    trace.steps.push_back(std::move(rec));
  }
  trace.final_ego = world.ego;
  for (const auto& o : world.obstacles) trace.final_obstacles.push_back(o.state);

  trace.J_sim = average_stage_cost(trace);
  const double n = static_cast<double>(sc.N_sim);
  trace.timing = {smpc_sum / n, safety_sum / n, cvpm_sum / n, ftp_sum / n};
  return trace;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string trace_csv(const SimulationTrace& trace) {
  std::string out = "t,s,d,phi,v,a,delta,branch,smpc_ms,cvpm_ms,safety_check,stage_cost,collision\n";
  for (const auto& st : trace.steps) {
    using detail::format_double;
    out += format_double(st.t) + "," + format_double(st.ego.s) + "," + format_double(st.ego.d) +
           "," + format_double(st.ego.phi) + "," + format_double(st.ego.v) + "," +
           format_double(st.input.a) + "," + format_double(st.input.delta) + "," +
           branch_name(st.trace.branch) + "," + format_double(st.trace.smpc_ms) + "," +
           format_double(st.trace.cvpm_ms) + "," + (st.trace.safety_check ? "1" : "0") + "," +
           format_double(st.stage_cost) + "," + (st.collision ? "1" : "0") + "\n";
  }
  return out;
}

inline json summary_json(const SimulationTrace& trace) {
  json j;
  j["scenario"] = trace.scenario_id;
  j["scheme"] = trace.scheme;
  j["seed"] = trace.seed;
  j["supported"] = trace.supported;
  j["J_sim"] = trace.J_sim;
  j["collisions"] = trace.collisions;
  j["branch_counts"] = trace.branch_counts;
  j["timing"] = {{"smpc_mean_ms", trace.timing.smpc_mean_ms},
                 {"safety_check_mean_ms", trace.timing.safety_check_mean_ms},
                 {"cvpm_mean_ms", trace.timing.cvpm_mean_ms},
                 {"ftp_mean_ms", trace.timing.ftp_mean_ms}};
  return j;
}

/// Persist trace.csv and summary.json under dir. Partial outputs are removed if
/// any write fails.
inline void save_trace(const SimulationTrace& trace, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path csv_path = dir / "trace.csv";
  const fs::path json_path = dir / "summary.json";
  try {
    {
      std::ofstream csv(csv_path, std::ios::trunc);
      if (!csv) throw std::runtime_error("save_trace: cannot write " + csv_path.string());
      csv << trace_csv(trace);
      if (!csv.good()) throw std::runtime_error("save_trace: write failed");
    }
    {
      std::ofstream js(json_path, std::ios::trunc);
      if (!js) throw std::runtime_error("save_trace: cannot write " + json_path.string());
      js << summary_json(trace).dump(2) << "\n";
      if (!js.good()) throw std::runtime_error("save_trace: write failed");
    }
  } catch (...) {
    std::error_code ec;
    fs::remove(csv_path, ec);
    fs::remove(json_path, ec);
    throw;
  }
}

}  // namespace cvpm
