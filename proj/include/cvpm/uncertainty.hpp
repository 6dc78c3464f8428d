#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>

#include "cvpm/vehicle_models.hpp"

namespace cvpm {

/// Gaussian with axis-aligned box support (entries may be ±inf).
struct TruncatedGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(mean.size()); }

  static TruncatedGaussian zero(int n) {
    TruncatedGaussian tg;
    tg.mean = Eigen::VectorXd::Zero(n);
    tg.cov = Eigen::MatrixXd::Zero(n, n);
    const double inf = std::numeric_limits<double>::infinity();
    tg.lo = Eigen::VectorXd::Constant(n, -inf);
    tg.hi = Eigen::VectorXd::Constant(n, inf);
    return tg;
  }

  static TruncatedGaussian diagonal(const Eigen::VectorXd& variances,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    TruncatedGaussian tg;
    tg.mean = Eigen::VectorXd::Zero(variances.size());
    tg.cov = variances.asDiagonal();
    tg.lo = lo;
    tg.hi = hi;
    return tg;
  }
};

namespace detail {

// Square root of a PSD matrix through LDLT with clamped negative pivots.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

}  // namespace detail

/// Rejection-sampled draw from a truncated Gaussian. Axes with a zero-width
/// support are deterministic. Throws when the support lies so far in the tail
/// that the rejection cap is exhausted.
inline Eigen::VectorXd sample(const TruncatedGaussian& tg, std::mt19937_64& rng,
                              int max_rejections = 100000) {
  const int n = tg.dim();
  const Eigen::MatrixXd L = detail::psd_sqrt(tg.cov);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < max_rejections; ++attempt) {
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = gauss(rng);
    Eigen::VectorXd x = tg.mean + L * z;
    bool inside = true;
    for (int i = 0; i < n; ++i) {
      if (tg.hi(i) - tg.lo(i) <= 0.0) {
        x(i) = 0.5 * (tg.lo(i) + tg.hi(i));
        continue;
      }
      if (x(i) < tg.lo(i) || x(i) > tg.hi(i)) {
        inside = false;
        break;
      }
    }
    if (inside) return x;
  }
  throw std::runtime_error("TruncatedGaussian::sample: rejection cap exceeded");
}

/// Distribution of the stacked obstacle state sequence [xi_1; ...; xi_N].
struct SequenceDistribution {
  Eigen::VectorXd mean;  // 4N
  Eigen::MatrixXd cov;   // 4N x 4N
  int steps = 0;
};

/// Mean and covariance of the obstacle state sequence over N steps under the
/// closed-loop model. The mean is the nominal rollout (w = 0, no clipping,
/// untruncated disturbance); the covariance stacks the input-to-sequence map of
/// the closed loop over the per-step disturbance covariance, plus the propagated
/// initial measurement-noise covariance.
inline SequenceDistribution predict_obstacle_sequence(const ObstacleState& state,
                                                      const ObstacleModel& model, int N,
                                                      const Eigen::MatrixXd& w_cov,
                                                      const Mat4& init_cov = Mat4::Zero()) {
  if (N < 1) throw std::invalid_argument("predict_obstacle_sequence: N must be >= 1");
  SequenceDistribution out;
  out.steps = N;
  out.mean.resize(4 * N);
  out.cov = Eigen::MatrixXd::Zero(4 * N, 4 * N);

  const Mat4 Acl = model.closed_loop();

  Vec4 x = state.vec();
  for (int k = 0; k < N; ++k) {
    const Vec4 ref = model.reference_at(state, k);
    x = model.A * x + model.B * (model.K * (x - ref));
    out.mean.segment<4>(4 * k) = x;
  }

  // Phi(k, j) = Acl^{k-1-j} B maps w_j into xi_k; Lambda(k) = Acl^k carries
  // the initial covariance.
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(4 * N, 2 * N);
  Eigen::MatrixXd Lambda(4 * N, 4);
  for (int k = 1; k <= N; ++k) {
    Mat4 coef = Mat4::Identity();
    for (int j = k - 1; j >= 0; --j) {
      Phi.block<4, 2>(4 * (k - 1), 2 * j) = coef * model.B;
      coef = Acl * coef;
    }
    Lambda.middleRows<4>(4 * (k - 1)) = coef;  // coef = Acl^k after the loop
  }

  Eigen::MatrixXd Sigma_W = Eigen::MatrixXd::Zero(2 * N, 2 * N);
  for (int j = 0; j < N; ++j) Sigma_W.block<2, 2>(2 * j, 2 * j) = w_cov;
  out.cov = Phi * Sigma_W * Phi.transpose() + Lambda * init_cov * Lambda.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

/// Covariance of the half-space offsets induced by the uncertain obstacle
/// sequence: Q Σ Qᵀ, symmetrized and regularized for invertibility.
inline Eigen::MatrixXd offset_covariance(const Eigen::MatrixXd& Q,
                                         const SequenceDistribution& seq) {
  if (Q.cols() != seq.cov.rows()) {
    throw std::invalid_argument("offset_covariance: incompatible shapes");
  }
  Eigen::MatrixXd S = Q * seq.cov * Q.transpose();
  S = 0.5 * (S + S.transpose()).eval();
  const double scale = std::max(S.diagonal().maxCoeff(), 1.0);
  S.diagonal().array() += 1e-9 * scale;
  return S;
}

}  // namespace cvpm
