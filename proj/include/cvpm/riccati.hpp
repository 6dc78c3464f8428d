#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace cvpm {

/// Fixed point of the discrete algebraic Riccati equation
///   P = Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA
/// via the Riccati recursion started at P = Q. Converges for stabilizable
/// (A, B) with R ≻ 0; throws after the iteration cap otherwise.
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                  const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                  double tol = 1e-12, int max_iter = 10000) {
  const auto n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw std::invalid_argument("solve_dare: inconsistent dimensions");
  }
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = R + BtP * B;
    const Eigen::MatrixXd K = S.ldlt().solve(BtP * A);
    Eigen::MatrixXd P_next = Q + A.transpose() * P * (A - B * K);
    P_next = 0.5 * (P_next + P_next.transpose());
    const double delta = (P_next - P).norm();
    P = P_next;
    if (delta <= tol * std::max(1.0, P.norm())) return P;
  }
  throw std::runtime_error("solve_dare: no convergence within iteration cap");
}

/// LQR gain K for u = −K x from the DARE solution:
///   K = (R + BᵀPB)⁻¹ BᵀPA.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd P = solve_dare(A, B, Q, R);
  const Eigen::MatrixXd BtP = B.transpose() * P;
  return (R + BtP * B).ldlt().solve(BtP * A);
}

}  // namespace cvpm
