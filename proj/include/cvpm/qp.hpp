#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cvpm {

/// Dense convex QP:
///   min ½ zᵀHz + gᵀz
///   s.t. A_eq z = b_eq, A_in z <= b_in, lb <= z <= ub.
/// H must be symmetric PSD. Empty blocks are allowed.
struct QuadraticProgram {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int n() const { return static_cast<int>(g.size()); }

  static QuadraticProgram zero(int n) {
    QuadraticProgram qp;
    qp.H = Eigen::MatrixXd::Zero(n, n);
    qp.g = Eigen::VectorXd::Zero(n);
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, n);
    qp.b_in.resize(0);
    const double inf = std::numeric_limits<double>::infinity();
    qp.lb = Eigen::VectorXd::Constant(n, -inf);
    qp.ub = Eigen::VectorXd::Constant(n, inf);
    return qp;
  }
};

enum class SolveStatus { optimal, infeasible, max_iter };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    default: return "max_iter";
  }
}

struct SolveResult {
  SolveStatus status = SolveStatus::max_iter;
  Eigen::VectorXd z;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
};

struct SolverOptions {
  int max_iter = 20000;
  double eps_abs = 1e-8;
  double eps_rel = 1e-6;
  double eps_infeas = 1e-7;
  double sigma = 1e-6;
  double alpha = 1.6;
  double rho0 = 0.1;
  int check_interval = 25;
};

namespace detail {

// Operator-splitting solver in the unified form
//   min ½ zᵀHz + gᵀz   s.t.  l <= Az <= u,
// with Ruiz equilibration, relaxed ADMM iterations, a fixed rho-update
// schedule, and OSQP-style infeasibility certificates.
class AdmmSolver {
 public:
  AdmmSolver(Eigen::MatrixXd H, Eigen::VectorXd g, Eigen::MatrixXd A, Eigen::VectorXd l,
             Eigen::VectorXd u, SolverOptions opts)
      : H_(std::move(H)), g_(std::move(g)), A_(std::move(A)), l_(std::move(l)),
        u_(std::move(u)), opts_(opts), n_(static_cast<int>(g_.size())),
        m_(static_cast<int>(l_.size())) {}

  // Optional early-exit predicate evaluated on unscaled iterates: returning
  // true stops the solve with status optimal (used by the phase-1 check once
  // a feasibility witness appears).
  template <typename EarlyExit>
  SolveResult solve(EarlyExit&& early_exit) {
    scale();
    const Eigen::VectorXd rho_mult = rho_multipliers();
    double rho0 = opts_.rho0;

    Eigen::VectorXd z = Eigen::VectorXd::Zero(n_);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m_);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
    Eigen::VectorXd y_prev = y, z_prev = z;

    Eigen::VectorXd rho = rho0 * rho_mult;
    Eigen::LDLT<Eigen::MatrixXd> kkt = factorize(rho);

    SolveResult res;
    int next_rho_update = 100;
    for (int it = 1; it <= opts_.max_iter; ++it) {
      y_prev = y;
      z_prev = z;

      Eigen::VectorXd rhs = opts_.sigma * z - gs_;
      if (m_ > 0) rhs.noalias() += As_.transpose() * (rho.cwiseProduct(w) - y);
      const Eigen::VectorXd z_tilde = kkt.solve(rhs);
      Eigen::VectorXd w_tilde;
      if (m_ > 0) w_tilde.noalias() = As_ * z_tilde;

      z = opts_.alpha * z_tilde + (1.0 - opts_.alpha) * z;
      if (m_ > 0) {
        const Eigen::VectorXd w_relax = opts_.alpha * w_tilde + (1.0 - opts_.alpha) * w;
        const Eigen::VectorXd w_arg = w_relax + y.cwiseQuotient(rho);
        w = w_arg.cwiseMax(ls_).cwiseMin(us_);
        y += rho.cwiseProduct(w_relax - w);
      }

      if (it % opts_.check_interval == 0 || it == opts_.max_iter) {
        const Eigen::VectorXd z_orig = D_.cwiseProduct(z);
        res.z = z_orig;
        res.iterations = it;
        compute_residuals(z, w, y, res);
        if (res.primal_residual <= eps_prim_ && res.dual_residual <= eps_dual_) {
          res.status = SolveStatus::optimal;
          finish(res);
          return res;
        }
        if (early_exit(z_orig)) {
          res.status = SolveStatus::optimal;
          finish(res);
          return res;
        }
        if (m_ > 0 && primal_infeasible(y - y_prev)) {
          res.status = SolveStatus::infeasible;
          finish(res);
          return res;
        }
        if (it >= next_rho_update && it + opts_.check_interval <= opts_.max_iter) {
          next_rho_update *= 2;
          const double ratio = std::sqrt((res.primal_residual / eps_prim_) /
                                         std::max(res.dual_residual / eps_dual_, 1e-12));
          const double factor = std::clamp(ratio, 1e-3, 1e3);
          if (factor > 5.0 || factor < 0.2) {
            rho0 = std::clamp(rho0 * factor, 1e-6, 1e6);
            rho = rho0 * rho_mult;
            kkt = factorize(rho);
          }
        }
      }
    }
    res.iterations = opts_.max_iter;
    res.z = D_.cwiseProduct(z);
    res.status = SolveStatus::max_iter;
    finish(res);
    return res;
  }

  SolveResult solve() {
    return solve([](const Eigen::VectorXd&) { return false; });
  }

 private:
  void scale() {
    D_ = Eigen::VectorXd::Ones(n_);
    E_ = Eigen::VectorXd::Ones(m_);
    Hs_ = H_;
    gs_ = g_;
    As_ = A_;
    ls_ = l_;
    us_ = u_;
    // Modified Ruiz equilibration on [[H Aᵀ];[A 0]].
    for (int pass = 0; pass < 10; ++pass) {
      Eigen::VectorXd dcol(n_);
      for (int j = 0; j < n_; ++j) {
        double nrm = Hs_.col(j).lpNorm<Eigen::Infinity>();
        if (m_ > 0) nrm = std::max(nrm, As_.col(j).lpNorm<Eigen::Infinity>());
        dcol(j) = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
      }
      Eigen::VectorXd erow(m_);
      for (int i = 0; i < m_; ++i) {
        const double nrm = As_.row(i).lpNorm<Eigen::Infinity>();
        erow(i) = nrm > 1e-12 ? 1.0 / std::sqrt(nrm) : 1.0;
      }
      Hs_ = dcol.asDiagonal() * Hs_ * dcol.asDiagonal();
      gs_ = dcol.cwiseProduct(gs_);
      if (m_ > 0) As_ = erow.asDiagonal() * As_ * dcol.asDiagonal();
      D_ = D_.cwiseProduct(dcol);
      E_ = E_.cwiseProduct(erow);
    }
    for (int i = 0; i < m_; ++i) {
      if (std::isfinite(ls_(i))) ls_(i) *= E_(i);
      if (std::isfinite(us_(i))) us_(i) *= E_(i);
    }
    // Cost normalization keeps iterates invariant under uniform cost scaling.
    double hnorm = 0.0;
    for (int j = 0; j < n_; ++j) hnorm += Hs_.col(j).lpNorm<Eigen::Infinity>();
    hnorm = n_ > 0 ? hnorm / n_ : 0.0;
    const double gnorm = gs_.lpNorm<Eigen::Infinity>();
    cost_scale_ = std::max(hnorm, gnorm);
    cost_scale_ = cost_scale_ > 1e-12 ? 1.0 / cost_scale_ : 1.0;
    Hs_ *= cost_scale_;
    gs_ *= cost_scale_;
  }

  Eigen::VectorXd rho_multipliers() const {
    Eigen::VectorXd mult = Eigen::VectorXd::Ones(m_);
    for (int i = 0; i < m_; ++i) {
      if (std::isfinite(l_(i)) && std::isfinite(u_(i)) && l_(i) == u_(i)) mult(i) = 1e3;
    }
    return mult;
  }

  Eigen::LDLT<Eigen::MatrixXd> factorize(const Eigen::VectorXd& rho) {
    Eigen::MatrixXd M = Hs_;
    M.diagonal().array() += opts_.sigma;
    if (m_ > 0) M.noalias() += As_.transpose() * rho.asDiagonal() * As_;
    return M.ldlt();
  }

  void compute_residuals(const Eigen::VectorXd& z, const Eigen::VectorXd& w,
                         const Eigen::VectorXd& y, SolveResult& res) {
    const Eigen::VectorXd Hz = Hs_ * z;
    Eigen::VectorXd dual = Hz + gs_;
    double prim = 0.0, prim_scale = 0.0;
    if (m_ > 0) {
      const Eigen::VectorXd Az = As_ * z;
      prim = (Az - w).cwiseQuotient(E_).lpNorm<Eigen::Infinity>();
      prim_scale = std::max(Az.cwiseQuotient(E_).lpNorm<Eigen::Infinity>(),
                            w.cwiseQuotient(E_).lpNorm<Eigen::Infinity>());
      dual.noalias() += As_.transpose() * y;
    }
    const double inv_c = 1.0 / cost_scale_;
    const double dual_res = dual.cwiseQuotient(D_).lpNorm<Eigen::Infinity>() * inv_c;
    double dual_scale = Hz.cwiseQuotient(D_).lpNorm<Eigen::Infinity>();
    dual_scale = std::max(dual_scale, gs_.cwiseQuotient(D_).lpNorm<Eigen::Infinity>());
    if (m_ > 0) {
      dual_scale = std::max(
          dual_scale, (As_.transpose() * y).cwiseQuotient(D_).lpNorm<Eigen::Infinity>());
    }
    dual_scale *= inv_c;
    res.primal_residual = prim;
    res.dual_residual = dual_res;
    eps_prim_ = opts_.eps_abs + opts_.eps_rel * prim_scale;
    eps_dual_ = opts_.eps_abs + opts_.eps_rel * dual_scale;
  }

  // Certificate of primal infeasibility from the dual increment.
  bool primal_infeasible(const Eigen::VectorXd& dy_scaled) const {
    Eigen::VectorXd dy = E_.cwiseProduct(dy_scaled) / cost_scale_;
    const double norm = dy.lpNorm<Eigen::Infinity>();
    if (norm <= 1e-14) return false;
    dy /= norm;
    const Eigen::VectorXd Atdy =
        (As_.transpose() * dy_scaled).cwiseQuotient(D_) / (cost_scale_ * norm);
    if (Atdy.lpNorm<Eigen::Infinity>() > opts_.eps_infeas) return false;
    double support = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double pos = std::max(dy(i), 0.0), neg = std::min(dy(i), 0.0);
      if (pos > opts_.eps_infeas && !std::isfinite(u_(i))) return false;
      if (-neg > opts_.eps_infeas && !std::isfinite(l_(i))) return false;
      if (std::isfinite(u_(i))) support += u_(i) * pos;
      if (std::isfinite(l_(i))) support += l_(i) * neg;
    }
    return support <= -opts_.eps_infeas;
  }

  void finish(SolveResult& res) const {
    res.objective = 0.5 * res.z.dot(H_ * res.z) + g_.dot(res.z);
  }

  Eigen::MatrixXd H_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd l_, u_;
  SolverOptions opts_;
  int n_, m_;

  Eigen::MatrixXd Hs_, As_;
  Eigen::VectorXd gs_, ls_, us_, D_, E_;
  double cost_scale_ = 1.0;
  double eps_prim_ = 0.0, eps_dual_ = 0.0;
};

inline void to_unified(const QuadraticProgram& qp, Eigen::MatrixXd& A, Eigen::VectorXd& l,
                       Eigen::VectorXd& u) {
  const int n = qp.n();
  const int m_eq = static_cast<int>(qp.b_eq.size());
  const int m_in = static_cast<int>(qp.b_in.size());
  const double inf = std::numeric_limits<double>::infinity();

  int n_bound = 0;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb(j)) || std::isfinite(qp.ub(j))) ++n_bound;
  }
  A = Eigen::MatrixXd::Zero(m_eq + m_in + n_bound, n);
  l.resize(A.rows());
  u.resize(A.rows());
  if (m_eq > 0) {
    A.topRows(m_eq) = qp.A_eq;
    l.head(m_eq) = qp.b_eq;
    u.head(m_eq) = qp.b_eq;
  }
  if (m_in > 0) {
    A.middleRows(m_eq, m_in) = qp.A_in;
    l.segment(m_eq, m_in).setConstant(-inf);
    u.segment(m_eq, m_in) = qp.b_in;
  }
  int r = m_eq + m_in;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb(j)) || std::isfinite(qp.ub(j))) {
      A(r, j) = 1.0;
      l(r) = qp.lb(j);
      u(r) = qp.ub(j);
      ++r;
    }
  }
}

}  // namespace detail

/// Solve a dense convex QP. Deterministic: identical inputs produce identical
/// iterate sequences. status == optimal guarantees scaled KKT residuals within
/// tolerance; max_iter returns the best iterate with its residuals.
inline SolveResult solve_qp(const QuadraticProgram& qp, const SolverOptions& opts = {}) {
  if (qp.H.rows() != qp.n() || qp.H.cols() != qp.n()) {
    throw std::invalid_argument("solve_qp: H/g dimension mismatch");
  }
  Eigen::MatrixXd A;
  Eigen::VectorXd l, u;
  detail::to_unified(qp, A, l, u);
  detail::AdmmSolver solver(qp.H, qp.g, std::move(A), std::move(l), std::move(u), opts);
  return solver.solve();
}

/// Phase-1 feasibility of {A_in z <= b_in, A_eq z = b_eq, lb <= z <= ub}:
/// minimizes the total constraint slack and reports true iff it reaches zero
/// (tolerance 1e-7, scaled). Exits early once any iterate is itself feasible.
/// A hit of the iteration cap counts as infeasible.
inline bool check_feasible(const Eigen::MatrixXd& A_in, const Eigen::VectorXd& b_in,
                           const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                           const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                           const SolverOptions& opts = {}) {
  const int n = static_cast<int>(lb.size());
  const int m_in = static_cast<int>(b_in.size());
  const int m_eq = static_cast<int>(b_eq.size());
  const int n_s = m_in + m_eq;
  const double inf = std::numeric_limits<double>::infinity();

  double bscale = 1.0;
  if (m_in > 0) bscale = std::max(bscale, b_in.lpNorm<Eigen::Infinity>());
  if (m_eq > 0) bscale = std::max(bscale, b_eq.lpNorm<Eigen::Infinity>());
  const double tol = 1e-7 * bscale;

  auto violation = [&](const Eigen::VectorXd& z) {
    double v = 0.0;
    if (m_in > 0) v = (A_in * z - b_in).cwiseMax(0.0).maxCoeff();
    if (m_eq > 0) v = std::max(v, (A_eq * z - b_eq).cwiseAbs().maxCoeff());
    v = std::max(v, (lb - z).cwiseMax(0.0).maxCoeff());
    v = std::max(v, (z - ub).cwiseMax(0.0).maxCoeff());
    return v;
  };

  // Variables [z; s]; rows: A_in z - s_in <= b_in, |A_eq z - b_eq| <= s_eq.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m_in + 2 * m_eq + n + n_s, n + n_s);
  Eigen::VectorXd l = Eigen::VectorXd::Constant(A.rows(), -inf);
  Eigen::VectorXd u = Eigen::VectorXd::Constant(A.rows(), inf);
  int r = 0;
  if (m_in > 0) {
    A.block(r, 0, m_in, n) = A_in;
    A.block(r, n, m_in, m_in) = -Eigen::MatrixXd::Identity(m_in, m_in);
    u.segment(r, m_in) = b_in;
    r += m_in;
  }
  if (m_eq > 0) {
    A.block(r, 0, m_eq, n) = A_eq;
    A.block(r, n + m_in, m_eq, m_eq) = -Eigen::MatrixXd::Identity(m_eq, m_eq);
    u.segment(r, m_eq) = b_eq;
    r += m_eq;
    A.block(r, 0, m_eq, n) = A_eq;
    A.block(r, n + m_in, m_eq, m_eq) = Eigen::MatrixXd::Identity(m_eq, m_eq);
    l.segment(r, m_eq) = b_eq;
    r += m_eq;
  }
  A.block(r, 0, n, n) = Eigen::MatrixXd::Identity(n, n);
  l.segment(r, n) = lb;
  u.segment(r, n) = ub;
  r += n;
  A.block(r, n, n_s, n_s) = Eigen::MatrixXd::Identity(n_s, n_s);
  l.segment(r, n_s).setZero();

  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + n_s);
  g.tail(n_s).setOnes();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n + n_s, n + n_s);

  detail::AdmmSolver solver(std::move(H), std::move(g), std::move(A), std::move(l),
                            std::move(u), opts);
  const SolveResult res =
      solver.solve([&](const Eigen::VectorXd& zfull) { return violation(zfull.head(n)) <= tol; });
  if (res.status == SolveStatus::max_iter) return false;  // conservative
  if (res.status == SolveStatus::infeasible) return false;
  if (violation(res.z.head(n)) <= tol) return true;
  return res.z.tail(n_s).cwiseMax(0.0).sum() <= tol;
}

}  // namespace cvpm
