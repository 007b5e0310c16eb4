#pragma once

#include <Eigen/Dense>

#include "convlab/rng.hpp"

namespace convlab {

/// Relative eigenvalue cutoff: eigenvalues of a PSD matrix are allowed to dip
/// to -eps with eps = kPsdClampRel * ||Q||_2 before the matrix is rejected;
/// anything in [-eps, 0) is clamped to zero.
inline constexpr double kPsdClampRel = 1e-10;

/// Relative residual threshold for deciding Z in Im(Q) in the generalized norm.
inline constexpr double kImageResidualRel = 1e-8;

/// Symmetric positive-semidefinite matrix, flattened with the
/// (site i, input mu) -> k = i*P + mu convention used throughout.
/// Construction symmetrizes; the eigenvalue clamp is applied by the
/// factorization paths and by validated().
class PsdMatrix {
 public:
  PsdMatrix() = default;
  explicit PsdMatrix(const Eigen::MatrixXd& a);

  static PsdMatrix Zero(int dim);
  static PsdMatrix Identity(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Eigen::MatrixXd& mat() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  double frobenius_norm() const { return m_.norm(); }

  /// Checks the eigenvalue invariant. Throws if an eigenvalue sits below
  /// -kPsdClampRel*||Q||_2; clamps eigenvalues in the tolerated negative band
  /// to zero (and leaves the matrix untouched when none are negative).
  PsdMatrix validated() const;

  double min_eigenvalue() const;

 private:
  Eigen::MatrixXd m_;
};

/// Symmetric square root via eigendecomposition. Eigenvalues in the tolerated
/// negative band are treated as zero; below the band the input is rejected as
/// not PSD. Guarantees ||S*S - Q||_F <= 1e-8 * (1 + ||Q||_F).
PsdMatrix psd_sqrt(const PsdMatrix& q);

/// ||Z||_Q^2 = V^T Q V for any V with Q V = Z, computed as Z^T Q^+ Z with the
/// relative rank cutoff; +infinity when the residual of projecting Z onto
/// Im(Q) exceeds kImageResidualRel * ||Z||_2.
double generalized_q_norm(const PsdMatrix& q, const Eigen::VectorXd& z);

/// C x D sample array: row c is (sqrt(K) z_c)^T with independent standard
/// normal z_c, i.e. one conditional layer of C independent channels.
Eigen::MatrixXd sample_conditional_layer(const PsdMatrix& k, int channels, RngStream stream);

}  // namespace convlab
