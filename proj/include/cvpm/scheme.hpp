#pragma once

#include <chrono>
#include <future>
#include <utility>

#include "cvpm/planners.hpp"

namespace cvpm {

enum class Branch { smpc_safe, cvpm_robust, cvpm_prob, ftp_backup };

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::smpc_safe: return "smpc_safe";
    case Branch::cvpm_robust: return "cvpm_robust";
    case Branch::cvpm_prob: return "cvpm_prob";
    default: return "ftp_backup";
  }
}

/// Whether the constraint-check/solve pair of the fallback branch runs
/// alongside the SMPC solve or only once it is needed. Branch selection depends
/// only on solver statuses, so both modes produce the same applied inputs.
enum class BranchMode { eager, lazy };

/// Per-replan record of which branch fired, why, and what it cost.
struct DecisionTrace {
  Branch branch = Branch::smpc_safe;
  SolveStatus smpc_status = SolveStatus::max_iter;
  bool safety_check = false;
  // Availability of the robust case when the fallback branch was consulted;
  // reported true on steps where it was not needed.
  bool robust_case = true;
  double smpc_ms = 0.0;
  double safety_ms = 0.0;
  double cvpm_ms = 0.0;
  double ftp_ms = 0.0;
  EgoInput applied{};
  InputSequence planned{};
  bool degraded = false;
  double time = 0.0;  // simulated clock
};

/// Stored fail-safe input sequence of the baseline scheme.
struct FtpBackup {
  std::vector<EgoInput> inputs;
  double valid_from = 0.0;
  EgoInput last{-8.0, 0.0};

  bool empty() const { return inputs.empty(); }
};

/// Nominal one-step world prediction: nonlinear continuous-time ego model,
/// disturbance-free obstacle steps.
inline WorldState predict_next_world(const WorldState& x, const EgoInput& u,
                                     const PlannerConfig& cfg) {
  WorldState next = x;
  next.ego = step_ego_nonlinear(x.ego, u, cfg.vehicle, cfg.T, cfg.curvature);
  for (auto& o : next.obstacles) o.state = step_obstacle(o.state, o.model, Vec2::Zero());
  next.time = x.time + cfg.T;
  return next;
}

namespace detail {

inline double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct CvpmBranch {
  bool robust = false;
  PlanResult plan;
  double ms = 0.0;
};

inline CvpmBranch run_cvpm_branch(const WorldState& x, const PlannerConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  CvpmBranch out;
  out.robust = robust_case_exists(x, cfg, false);
  out.plan = out.robust ? solve_cvpm_robust(x, cfg) : solve_cvpm_prob(x, cfg);
  out.ms = ms_since(t0);
  return out;
}

}  // namespace detail

/// One replanning step of the certified-SMPC scheme: solve SMPC, certify its
/// first step with the robust-existence check at the predicted next state, and
/// fall back to the robust or probability-minimizing planner when the
/// certification fails. Always returns an input.
inline std::pair<EgoInput, DecisionTrace> smpc_cvpm_step(const WorldState& x,
                                                         const PlannerConfig& cfg,
                                                         BranchMode mode = BranchMode::lazy) {
  DecisionTrace trace;
  trace.time = x.time;

  std::future<detail::CvpmBranch> cvpm_future;
  if (mode == BranchMode::eager) {
    cvpm_future = std::async(std::launch::async,
                             [&x, &cfg] { return detail::run_cvpm_branch(x, cfg); });
  }

  const auto t0 = std::chrono::steady_clock::now();
  const PlanResult smpc = solve_smpc(x, cfg);
  trace.smpc_ms = detail::ms_since(t0);
  trace.smpc_status = smpc.status;

  bool applied_smpc = false;
  if (smpc.status == SolveStatus::optimal) {
    const EgoInput u0 = clamp_input(smpc.inputs.u.front(), cfg.vehicle);
    const WorldState x_plus = predict_next_world(x, u0, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    trace.safety_check = robust_case_exists(x_plus, cfg, true);
    trace.safety_ms = detail::ms_since(t1);
    if (trace.safety_check) {
      trace.branch = Branch::smpc_safe;
      trace.applied = u0;
      trace.planned = smpc.inputs;
      applied_smpc = true;
    }
  }

  if (!applied_smpc) {
    const detail::CvpmBranch cvpm = (mode == BranchMode::eager)
                                        ? cvpm_future.get()
                                        : detail::run_cvpm_branch(x, cfg);
    trace.cvpm_ms = cvpm.ms;
    trace.robust_case = cvpm.robust;
    trace.branch = cvpm.robust ? Branch::cvpm_robust : Branch::cvpm_prob;
    trace.applied = clamp_input(cvpm.plan.inputs.u.front(), cfg.vehicle);
    trace.planned = cvpm.plan.inputs;
  } else if (mode == BranchMode::eager) {
    const detail::CvpmBranch cvpm = cvpm_future.get();
    trace.cvpm_ms = cvpm.ms;  // computed but not consulted
  }
  return {trace.applied, trace};
}

/// One step of the baseline scheme: SMPC plus a freshly solved fail-safe plan
/// anchored at the predicted next state. On full success the SMPC input is
/// applied and the fail-safe plan becomes the stored backup; otherwise the head
/// of the stored backup is consumed. An exhausted backup degrades to maximal
/// braking holding the last steering value.
inline std::tuple<EgoInput, FtpBackup, DecisionTrace> smpc_ftp_step(const WorldState& x,
                                                                    const FtpBackup& backup,
                                                                    const PlannerConfig& cfg) {
  DecisionTrace trace;
  trace.time = x.time;

  const auto t0 = std::chrono::steady_clock::now();
  const PlanResult smpc = solve_smpc(x, cfg);
  trace.smpc_ms = detail::ms_since(t0);
  trace.smpc_status = smpc.status;

  FtpBackup next = backup;
  if (smpc.status == SolveStatus::optimal) {
    const EgoInput u0 = clamp_input(smpc.inputs.u.front(), cfg.vehicle);
    const WorldState x_plus = predict_next_world(x, u0, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    const PlanResult ftp = solve_cvpm_robust(x_plus, cfg);
    trace.ftp_ms = detail::ms_since(t1);
    trace.safety_check = ftp.status == SolveStatus::optimal;
    if (trace.safety_check) {
      trace.branch = Branch::smpc_safe;
      trace.applied = u0;
      trace.planned = smpc.inputs;
      next.inputs = ftp.inputs.u;
      next.valid_from = x.time + cfg.T;
      return {trace.applied, next, trace};
    }
  }

  trace.branch = Branch::ftp_backup;
  trace.robust_case = false;
  if (!next.empty()) {
    trace.applied = clamp_input(next.inputs.front(), cfg.vehicle);
    next.last = trace.applied;
    trace.planned.u = next.inputs;
    next.inputs.erase(next.inputs.begin());
  } else {
    trace.applied = EgoInput{cfg.vehicle.a_min, next.last.delta};
    trace.planned.u = {trace.applied};
    trace.degraded = true;
  }
  return {trace.applied, next, trace};
}

}  // namespace cvpm
