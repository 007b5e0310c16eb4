#include "convlab/psd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace convlab {
namespace {

bool is_diagonal(const Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      if (r != c && m(r, c) != 0.0) return false;
  return true;
}

}  // namespace

PsdMatrix::PsdMatrix(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("PsdMatrix: matrix must be square");
  m_ = 0.5 * (a + a.transpose());
}

PsdMatrix PsdMatrix::Zero(int dim) { return PsdMatrix(Eigen::MatrixXd::Zero(dim, dim)); }

PsdMatrix PsdMatrix::Identity(int dim) { return PsdMatrix(Eigen::MatrixXd::Identity(dim, dim)); }

double PsdMatrix::min_eigenvalue() const {
  if (dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

PsdMatrix PsdMatrix::validated() const {
  if (dim() == 0) return *this;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_);
  const Eigen::VectorXd& eval = es.eigenvalues();
  double clamp = kPsdClampRel * std::max(eval.maxCoeff(), -eval.minCoeff());
  if (eval.minCoeff() < -clamp)
    throw std::domain_error("PsdMatrix: not PSD (eigenvalue below clamp tolerance)");
  if (eval.minCoeff() >= 0.0) return *this;
  Eigen::VectorXd clamped = eval.cwiseMax(0.0);
  return PsdMatrix(es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose());
}

PsdMatrix psd_sqrt(const PsdMatrix& q) {
  const Eigen::MatrixXd& m = q.mat();
  if (is_diagonal(m)) {
    // Diagonal inputs (including 0 and I) take the exact elementwise route.
    Eigen::VectorXd d = m.diagonal();
    double clamp = kPsdClampRel * d.cwiseAbs().maxCoeff();
    if (d.minCoeff() < -clamp) throw std::domain_error("psd_sqrt: not PSD");
    return PsdMatrix(d.cwiseMax(0.0).cwiseSqrt().asDiagonal().toDenseMatrix());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd& eval = es.eigenvalues();
  double clamp = kPsdClampRel * std::max(eval.maxCoeff(), -eval.minCoeff());
  if (eval.minCoeff() < -clamp) throw std::domain_error("psd_sqrt: not PSD");
  Eigen::VectorXd root = eval.cwiseMax(0.0).cwiseSqrt();
  return PsdMatrix(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
}

double generalized_q_norm(const PsdMatrix& q, const Eigen::VectorXd& z) {
  if (z.size() != q.dim()) throw std::invalid_argument("generalized_q_norm: dimension mismatch");
  if (z.size() == 0) return 0.0;
  double znorm = z.norm();
  if (znorm == 0.0) return 0.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.mat());
  const Eigen::VectorXd& eval = es.eigenvalues();
  double cutoff = kPsdClampRel * std::max(eval.maxCoeff(), 0.0);
  Eigen::VectorXd coeff = es.eigenvectors().transpose() * z;

  double residual_sq = 0.0;
  double value = 0.0;
  for (int i = 0; i < eval.size(); ++i) {
    if (eval(i) > cutoff) {
      value += coeff(i) * coeff(i) / eval(i);
    } else {
      residual_sq += coeff(i) * coeff(i);
    }
  }
  if (std::sqrt(residual_sq) > kImageResidualRel * znorm)
    return std::numeric_limits<double>::infinity();
  return value;
}

Eigen::MatrixXd sample_conditional_layer(const PsdMatrix& k, int channels, RngStream stream) {
  if (channels < 1) throw std::invalid_argument("sample_conditional_layer: channels must be >= 1");
  PsdMatrix root = psd_sqrt(k);
  const int d = k.dim();
  Eigen::MatrixXd out(channels, d);
  Eigen::VectorXd z(d);
  const bool identity_root = root.mat().isIdentity(0.0);
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < d; ++i) z(i) = stream.next_normal();
    if (identity_root) {
      out.row(c) = z.transpose();
    } else {
      out.row(c) = (root.mat() * z).transpose();
    }
  }
  return out;
}

}  // namespace convlab
