#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <vector>

#include "cvpm/qp.hpp"
#include "cvpm/riccati.hpp"
#include "cvpm/safe_sets.hpp"
#include "cvpm/world.hpp"

namespace cvpm {

struct PlannerConfig {
  int N = 10;
  double T = 0.1;
  Vec4 Q_diag = Vec4(0.0, 0.5, 2.0, 1.0);
  Vec2 R_diag = Vec2(0.3, 20.0);
  std::optional<Mat4> P_override;  // terminal weight; defaults to the DARE solution
  double beta = 0.9;
  Vec4 xi_ref = Vec4(0.0, 0.0, 0.0, 20.0);
  VehicleParams vehicle{};
  Vec4 state_lo = Vec4(-std::numeric_limits<double>::infinity(), -4.0, -0.6, 0.0);
  Vec4 state_hi = Vec4(std::numeric_limits<double>::infinity(), 8.0, 0.6, 60.0);
  double margin = 0.5;
  double curvature = 0.0;
  SolverOptions solver{};
  double prob_input_reg = 1e-6;  // keeps the probability surrogate strictly convex in U
};

/// Stacked input sequence U_N = [u_0, ..., u_{N-1}].
struct InputSequence {
  std::vector<EgoInput> u;

  int size() const { return static_cast<int>(u.size()); }

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd z(2 * u.size());
    for (size_t k = 0; k < u.size(); ++k) z.segment<2>(2 * k) = u[k].vec();
    return z;
  }
  static InputSequence from_stacked(const Eigen::VectorXd& z) {
    InputSequence seq;
    seq.u.resize(z.size() / 2);
    for (size_t k = 0; k < seq.u.size(); ++k) seq.u[k] = EgoInput::from_vec(z.segment<2>(2 * k));
    return seq;
  }
  static InputSequence zeros(int N) {
    InputSequence seq;
    seq.u.assign(N, EgoInput{});
    return seq;
  }
};

inline double stage_cost(const EgoState& xi, const EgoInput& u, const PlannerConfig& cfg) {
  const Vec4 dx = xi.vec() - cfg.xi_ref;
  return dx.dot(cfg.Q_diag.asDiagonal() * dx) + u.vec().dot(cfg.R_diag.asDiagonal() * u.vec());
}

namespace detail {

// Condensed prediction over the affine model: Xi = Phi_u U + phi_c,
// stacking xi_1..xi_N.
struct Prediction {
  Eigen::MatrixXd Phi_u;
  Eigen::VectorXd phi_c;
  int N = 0;

  Vec4 state_at(const Eigen::VectorXd& U, int k) const {  // k in 1..N
    return Phi_u.middleRows<4>(4 * (k - 1)) * U + phi_c.segment<4>(4 * (k - 1));
  }
};

inline Prediction build_prediction(const LinearEgoModel& m, const Vec4& xi0, int N) {
  Prediction p;
  p.N = N;
  p.Phi_u = Eigen::MatrixXd::Zero(4 * N, 2 * N);
  p.phi_c.resize(4 * N);
  const Vec4 c_hat = m.c - m.A * m.lin_state;
  Vec4 acc = Vec4::Zero();  // sum of A^i c_hat
  Mat4 Apow = Mat4::Identity();
  for (int k = 1; k <= N; ++k) {
    acc = m.A * acc + c_hat;
    Apow = m.A * Apow;  // A^k
    p.phi_c.segment<4>(4 * (k - 1)) = Apow * xi0 + acc;
    Mat4 coef = Mat4::Identity();
    for (int j = k - 1; j >= 0; --j) {
      p.Phi_u.block<4, 2>(4 * (k - 1), 2 * j) = coef * m.B;
      coef = m.A * coef;
    }
  }
  return p;
}

// Shared per-replan assembly. Longitudinal positions are translated so the ego
// starts at s = 0; conditioning of the condensed rows then no longer depends on
// where on the road the scenario happens.
struct PlannerContext {
  WorldState world;  // shifted
  double s_shift = 0.0;
  LinearEgoModel model;
  Prediction pred;
  SafeSetSequence safe;
  Vec4 xi_ref;  // shifted reference

  int N() const { return pred.N; }
};

inline PlannerContext build_context(const WorldState& x, const PlannerConfig& cfg) {
  PlannerContext ctx;
  ctx.s_shift = x.ego.s;
  ctx.world = x;
  ctx.world.ego.s = 0.0;
  for (auto& o : ctx.world.obstacles) o.state.s -= ctx.s_shift;
  ctx.xi_ref = cfg.xi_ref;
  ctx.xi_ref(0) -= ctx.s_shift;
  ctx.model = linearize_discretize(ctx.world.ego, cfg.vehicle, cfg.T, cfg.curvature);
  ctx.pred = build_prediction(ctx.model, ctx.world.ego.vec(), cfg.N);
  ctx.safe = build_safe_sequence(ctx.world.ego, ctx.world.obstacles, cfg.N,
                                 cfg.vehicle.geometry, cfg.margin);
  return ctx;
}

inline Mat4 terminal_weight(const PlannerContext& ctx, const PlannerConfig& cfg) {
  if (cfg.P_override) return *cfg.P_override;
  return solve_dare(ctx.model.A, ctx.model.B, Mat4(cfg.Q_diag.asDiagonal()),
                    Mat2(cfg.R_diag.asDiagonal()));
}

// Cost (terminal + stage terms over the linear prediction) and input box of the
// shared OCP; safety rows differ per planner and are appended by the callers.
inline QuadraticProgram assemble_base(const PlannerContext& ctx, const PlannerConfig& cfg) {
  const int N = ctx.N();
  QuadraticProgram qp = QuadraticProgram::zero(2 * N);

  Eigen::MatrixXd Qbar = Eigen::MatrixXd::Zero(4 * N, 4 * N);
  for (int k = 1; k < N; ++k) Qbar.block<4, 4>(4 * (k - 1), 4 * (k - 1)) = cfg.Q_diag.asDiagonal();
  Qbar.block<4, 4>(4 * (N - 1), 4 * (N - 1)) = terminal_weight(ctx, cfg);

  Eigen::VectorXd ref(4 * N);
  for (int k = 0; k < N; ++k) ref.segment<4>(4 * k) = ctx.xi_ref;

  qp.H = 2.0 * (ctx.pred.Phi_u.transpose() * Qbar * ctx.pred.Phi_u);
  for (int k = 0; k < N; ++k) {
    qp.H(2 * k, 2 * k) += 2.0 * cfg.R_diag(0);
    qp.H(2 * k + 1, 2 * k + 1) += 2.0 * cfg.R_diag(1);
  }
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
  qp.g = 2.0 * ctx.pred.Phi_u.transpose() * (Qbar * (ctx.pred.phi_c - ref));

  for (int k = 0; k < N; ++k) {
    qp.lb(2 * k) = cfg.vehicle.a_min;
    qp.ub(2 * k) = cfg.vehicle.a_max;
    qp.lb(2 * k + 1) = cfg.vehicle.delta_min;
    qp.ub(2 * k + 1) = cfg.vehicle.delta_max;
  }
  return qp;
}

struct RowSet {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

// State-box rows over the condensed inputs, finite bounds only.
inline RowSet state_box_rows(const PlannerContext& ctx, const PlannerConfig& cfg) {
  const int N = ctx.N();
  std::vector<int> comps;
  for (int i = 0; i < 4; ++i) {
    if (std::isfinite(cfg.state_lo(i)) || std::isfinite(cfg.state_hi(i))) comps.push_back(i);
  }
  Vec4 lo = cfg.state_lo, hi = cfg.state_hi;
  lo(0) -= ctx.s_shift;  // s bounds, if any, live in unshifted coordinates
  hi(0) -= ctx.s_shift;

  int count = 0;
  for (int i : comps) {
    if (std::isfinite(lo(i))) ++count;
    if (std::isfinite(hi(i))) ++count;
  }
  RowSet rows;
  rows.A = Eigen::MatrixXd::Zero(count * N, 2 * N);
  rows.b.resize(count * N);
  int r = 0;
  for (int k = 1; k <= N; ++k) {
    const auto blk = ctx.pred.Phi_u.middleRows<4>(4 * (k - 1));
    const Vec4 ck = ctx.pred.phi_c.segment<4>(4 * (k - 1));
    for (int i : comps) {
      if (std::isfinite(hi(i))) {
        rows.A.row(r) = blk.row(i);
        rows.b(r) = hi(i) - ck(i);
        ++r;
      }
      if (std::isfinite(lo(i))) {
        rows.A.row(r) = -blk.row(i);
        rows.b(r) = ck(i) - lo(i);
        ++r;
      }
    }
  }
  return rows;
}

// Safe-set rows (normal·xi_k + offset <= 0) condensed onto the inputs.
inline RowSet safety_rows(const PlannerContext& ctx, const std::vector<Halfspace>& hs) {
  RowSet rows;
  rows.A = Eigen::MatrixXd::Zero(hs.size(), 2 * ctx.N());
  rows.b.resize(hs.size());
  for (size_t i = 0; i < hs.size(); ++i) {
    const int k = hs[i].step;
    const auto blk = ctx.pred.Phi_u.middleRows<4>(4 * (k - 1));
    rows.A.row(i) = hs[i].normal.transpose() * blk;
    rows.b(i) = -hs[i].offset - hs[i].normal.dot(ctx.pred.phi_c.segment<4>(4 * (k - 1)));
  }
  return rows;
}

inline void append_rows(QuadraticProgram& qp, const RowSet& rows) {
  const int m0 = static_cast<int>(qp.b_in.size());
  const int m1 = static_cast<int>(rows.b.size());
  Eigen::MatrixXd A(m0 + m1, qp.n());
  Eigen::VectorXd b(m0 + m1);
  if (m0 > 0) {
    A.topRows(m0) = qp.A_in;
    b.head(m0) = qp.b_in;
  }
  A.bottomRows(m1) = rows.A;
  b.tail(m1) = rows.b;
  qp.A_in = std::move(A);
  qp.b_in = std::move(b);
}

inline std::vector<Halfspace> chance_rows(const PlannerContext& ctx, double beta) {
  std::vector<Halfspace> hs;
  hs.reserve(ctx.safe.rows.size());
  for (const auto& row : ctx.safe.rows) hs.push_back(tighten_chance(row.h, row.sigma, beta));
  return hs;
}

inline std::vector<ReachTube> obstacle_tubes(const PlannerContext& ctx) {
  std::vector<ReachTube> tubes;
  tubes.reserve(ctx.world.obstacles.size());
  for (const auto& o : ctx.world.obstacles) tubes.push_back(reach_tube(o, ctx.N()));
  return tubes;
}

inline std::vector<Halfspace> robust_rows(const PlannerContext& ctx,
                                          const std::vector<ReachTube>& tubes) {
  std::vector<Halfspace> hs;
  hs.reserve(ctx.safe.rows.size());
  for (const auto& row : ctx.safe.rows) hs.push_back(tighten_robust(row, tubes[row.obstacle]));
  return hs;
}

// Eq.-(4)-style cost of an input sequence over the linear prediction,
// including the constant initial-deviation term.
inline double horizon_cost(const PlannerContext& ctx, const PlannerConfig& cfg,
                           const Eigen::VectorXd& U) {
  const Mat4 P = terminal_weight(ctx, cfg);
  const Vec4 dx0 = ctx.world.ego.vec() - ctx.xi_ref;
  double J = dx0.dot(cfg.Q_diag.asDiagonal() * dx0);
  for (int k = 1; k <= ctx.N(); ++k) {
    const Vec4 dx = ctx.pred.state_at(U, k) - ctx.xi_ref;
    if (k < ctx.N()) {
      J += dx.dot(cfg.Q_diag.asDiagonal() * dx);
    } else {
      J += dx.dot(P * dx);
    }
  }
  for (int k = 0; k < ctx.N(); ++k) {
    const Vec2 u = U.segment<2>(2 * k);
    J += u.dot(cfg.R_diag.asDiagonal() * u);
  }
  return J;
}

}  // namespace detail

struct PlanResult {
  SolveStatus status = SolveStatus::max_iter;
  InputSequence inputs;
  double objective = 0.0;
  int iterations = 0;
};

/// SMPC optimal control problem: shared cost and boxes, safety rows tightened
/// per-row to the beta quantile of the Gaussian offset. Infeasibility is a
/// legitimate outcome and is propagated.
inline PlanResult solve_smpc(const WorldState& x, const PlannerConfig& cfg) {
  const auto ctx = detail::build_context(x, cfg);
  QuadraticProgram qp = detail::assemble_base(ctx, cfg);
  detail::append_rows(qp, detail::state_box_rows(ctx, cfg));
  detail::append_rows(qp, detail::safety_rows(ctx, detail::chance_rows(ctx, cfg.beta)));
  const SolveResult res = solve_qp(qp, cfg.solver);
  PlanResult out;
  out.status = res.status;
  out.inputs = InputSequence::from_stacked(res.z);
  out.objective = detail::horizon_cost(ctx, cfg, res.z);
  out.iterations = res.iterations;
  return out;
}

/// CVPM robust case: identical to the SMPC problem except that safety rows are
/// tightened against the worst case over the obstacle reach tubes.
inline PlanResult solve_cvpm_robust(const WorldState& x, const PlannerConfig& cfg) {
  const auto ctx = detail::build_context(x, cfg);
  QuadraticProgram qp = detail::assemble_base(ctx, cfg);
  detail::append_rows(qp, detail::state_box_rows(ctx, cfg));
  detail::append_rows(qp, detail::safety_rows(ctx, detail::robust_rows(ctx, detail::obstacle_tubes(ctx))));
  const SolveResult res = solve_qp(qp, cfg.solver);
  PlanResult out;
  out.status = res.status;
  out.inputs = InputSequence::from_stacked(res.z);
  out.objective = detail::horizon_cost(ctx, cfg, res.z);
  out.iterations = res.iterations;
  return out;
}

namespace detail {

// Robustified step-0 collision rows evaluated at the current ego position.
inline bool initial_state_safe(const PlannerContext& ctx, const PlannerConfig& cfg,
                               const std::vector<ReachTube>& tubes) {
  const EgoState& ego = ctx.world.ego;
  for (size_t o = 0; o < ctx.world.obstacles.size(); ++o) {
    const Obstacle& obs = ctx.world.obstacles[o];
    const double infl_s =
        0.5 * (cfg.vehicle.geometry.length + obs.model.geometry.length) + cfg.margin;
    const double infl_d =
        0.5 * (cfg.vehicle.geometry.width + obs.model.geometry.width) + cfg.margin;
    const Side side = select_side(obs.state.s - ego.s, obs.state.d - ego.d, infl_s, infl_d);
    SafeRow row;
    row.side = side;
    row.h.step = 0;
    switch (side) {
      case Side::front: row.h.normal = Vec4(1, 0, 0, 0); row.g = Vec2(-1, 0); row.c = infl_s; break;
      case Side::rear: row.h.normal = Vec4(-1, 0, 0, 0); row.g = Vec2(1, 0); row.c = infl_s; break;
      case Side::left: row.h.normal = Vec4(0, 1, 0, 0); row.g = Vec2(0, -1); row.c = infl_d; break;
      case Side::right: row.h.normal = Vec4(0, -1, 0, 0); row.g = Vec2(0, 1); row.c = infl_d; break;
    }
    const Halfspace h = tighten_robust(row, tubes[o]);
    if (h.normal.dot(ego.vec()) + h.offset > 0.0) return false;
  }
  return true;
}

// A handful of canonical input sequences; any of them satisfying all rows is a
// feasibility witness and saves the phase-1 solve.
inline bool probe_candidates(const PlannerContext& ctx, const PlannerConfig& cfg,
                             const RowSet& state_rows, const RowSet& safe_rows) {
  const int N = ctx.N();
  const auto& vp = cfg.vehicle;
  const double candidates[5][2] = {{0.0, 0.0},
                                   {vp.a_min, 0.0},
                                   {vp.a_min, vp.delta_max},
                                   {vp.a_min, vp.delta_min},
                                   {0.5 * vp.a_min, 0.0}};
  for (const auto& c : candidates) {
    Eigen::VectorXd U(2 * N);
    for (int k = 0; k < N; ++k) {
      U(2 * k) = c[0];
      U(2 * k + 1) = c[1];
    }
    const double tol = 1e-9;
    bool ok = true;
    if (state_rows.b.size() > 0 &&
        ((state_rows.A * U - state_rows.b).maxCoeff() > tol)) {
      ok = false;
    }
    if (ok && safe_rows.b.size() > 0 && ((safe_rows.A * U - safe_rows.b).maxCoeff() > tol)) {
      ok = false;
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace detail

/// Existence of a robustly collision-free input sequence (the constraint system
/// of the robust case, no cost). include_initial additionally requires the
/// current ego state to satisfy the robustified step-0 separating constraints;
/// that variant is the safety check applied at the predicted next state.
inline bool robust_case_exists(const WorldState& x, const PlannerConfig& cfg,
                               bool include_initial) {
  const auto ctx = detail::build_context(x, cfg);
  const auto tubes = detail::obstacle_tubes(ctx);
  if (include_initial && !detail::initial_state_safe(ctx, cfg, tubes)) return false;

  const auto state_rows = detail::state_box_rows(ctx, cfg);
  const auto safe_rows = detail::safety_rows(ctx, detail::robust_rows(ctx, tubes));
  if (detail::probe_candidates(ctx, cfg, state_rows, safe_rows)) return true;

  const int N = ctx.N();
  Eigen::MatrixXd A_in(state_rows.A.rows() + safe_rows.A.rows(), 2 * N);
  Eigen::VectorXd b_in(A_in.rows());
  A_in << state_rows.A, safe_rows.A;
  b_in << state_rows.b, safe_rows.b;
  Eigen::VectorXd lb(2 * N), ub(2 * N);
  for (int k = 0; k < N; ++k) {
    lb(2 * k) = cfg.vehicle.a_min;
    ub(2 * k) = cfg.vehicle.a_max;
    lb(2 * k + 1) = cfg.vehicle.delta_min;
    ub(2 * k + 1) = cfg.vehicle.delta_max;
  }
  return check_feasible(A_in, b_in, Eigen::MatrixXd(0, 2 * N), Eigen::VectorXd(0), lb, ub,
                        cfg.solver);
}

/// CVPM probabilistic case: minimize the covariance-weighted distance between
/// the non-positive slack and the row values mu = Q·Xi + q_bar. Hard rows keep
/// only the dynamics and boxes, so the problem stays feasible when no
/// collision-free plan exists.
inline PlanResult solve_cvpm_prob(const WorldState& x, const PlannerConfig& cfg) {
  const auto ctx = detail::build_context(x, cfg);
  const int N = ctx.N();
  const int n_q = ctx.safe.n_rows();
  const int n = 2 * N + n_q;

  QuadraticProgram qp = QuadraticProgram::zero(n);
  if (n_q > 0) {
    const Eigen::MatrixXd W =
        ctx.safe.sigma_q.ldlt().solve(Eigen::MatrixXd::Identity(n_q, n_q));
    const Eigen::MatrixXd M = ctx.safe.Q * ctx.pred.Phi_u;  // mu = M U + m0
    const Eigen::VectorXd m0 = ctx.safe.Q * ctx.pred.phi_c + ctx.safe.q_bar;
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n_q, n);
    D.leftCols(2 * N) = -M;
    D.rightCols(n_q).setIdentity();
    qp.H = 2.0 * D.transpose() * W * D;
    qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
    qp.g = -2.0 * D.transpose() * (W * m0);
  }
  for (int k = 0; k < 2 * N; ++k) qp.H(k, k) += 2.0 * cfg.prob_input_reg;

  for (int k = 0; k < N; ++k) {
    qp.lb(2 * k) = cfg.vehicle.a_min;
    qp.ub(2 * k) = cfg.vehicle.a_max;
    qp.lb(2 * k + 1) = cfg.vehicle.delta_min;
    qp.ub(2 * k + 1) = cfg.vehicle.delta_max;
  }
  for (int i = 0; i < n_q; ++i) qp.ub(2 * N + i) = 0.0;  // S_N <= 0

  const auto state_rows = detail::state_box_rows(ctx, cfg);
  if (state_rows.b.size() > 0) {
    QuadraticProgram padded = qp;
    padded.A_in = Eigen::MatrixXd::Zero(state_rows.A.rows(), n);
    padded.A_in.leftCols(2 * N) = state_rows.A;
    padded.b_in = state_rows.b;
    qp = std::move(padded);
  }

  const SolveResult res = solve_qp(qp, cfg.solver);
  PlanResult out;
  out.status = res.status == SolveStatus::infeasible ? SolveStatus::infeasible : res.status;
  out.inputs = InputSequence::from_stacked(res.z.head(2 * N));
  out.objective = res.objective;
  out.iterations = res.iterations;
  return out;
}

/// Monte-Carlo estimate of the probability that the ego sequence induced by U
/// violates any safe-set row, with the row offsets drawn from the untruncated
/// Gaussian N(q_bar, sigma_q). Validation oracle; not in the control path.
inline double violation_probability_mc(const InputSequence& U, const WorldState& x,
                                       const PlannerConfig& cfg, int samples,
                                       std::mt19937_64& rng) {
  if (samples < 1) throw std::invalid_argument("violation_probability_mc: samples >= 1");
  const auto ctx = detail::build_context(x, cfg);
  const int n_q = ctx.safe.n_rows();
  if (n_q == 0) return 0.0;

  const Eigen::VectorXd Xi = ctx.pred.Phi_u * U.stacked() + ctx.pred.phi_c;
  const Eigen::VectorXd r = ctx.safe.Q * Xi + ctx.safe.q_bar;
  const Eigen::MatrixXd L = detail::psd_sqrt(ctx.safe.sigma_q);

  std::normal_distribution<double> gauss(0.0, 1.0);
  int violations = 0;
  Eigen::VectorXd z(n_q);
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < n_q; ++i) z(i) = gauss(rng);
    const Eigen::VectorXd q = r + L * z;
    if ((q.array() > 0.0).any()) ++violations;
  }
  return static_cast<double>(violations) / samples;
}

}  // namespace cvpm
