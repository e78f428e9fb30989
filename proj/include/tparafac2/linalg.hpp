#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "tparafac2/errors.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2::linalg {

/// Cholesky factor of a symmetric positive definite normal matrix.
///
/// Throws NumericalError when the matrix is not numerically positive definite, so
/// rank deficiency surfaces instead of being silently regularized.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& G, const char* what) {
  Eigen::LLT<Matrix> llt(G);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const auto d = llt.matrixLLT().diagonal().cwiseAbs();
    const double lo = d.minCoeff();
    const double hi = d.maxCoeff();
    ok = hi > 0.0 && std::isfinite(hi) && lo > 1e-8 * hi;
  }
  if (!ok) throw NumericalError(std::string(what) + ": normal matrix is singular");
  return llt;
}

/// Solves X * G = rhs for X (G symmetric), i.e. X = rhs * G^{-1}.
inline Matrix solve_right(const Eigen::LLT<Matrix>& G, const Matrix& rhs) {
  return G.solve(rhs.transpose()).transpose();
}

/// Orthonormal polar factor U V^T of the thin SVD of M (the orthogonal Procrustes solution).
inline Matrix procrustes(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Symmetric positive semidefinite square root.
inline Matrix psd_sqrt(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace tparafac2::linalg
