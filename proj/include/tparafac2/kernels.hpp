#pragma once

// Closed-form block solves shared by the full-matrix and row-wise fitters.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>

#include "tparafac2/linalg.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2::kernels {

inline constexpr double rho_floor = 1e-12;

/// Diagonal weight on B_k in its normal matrix: rho per active auxiliary pair
/// (rho/2 each for Y and, when temporal, Z) plus an optional plain ridge.
inline double b_diagonal(double rho, bool temporal, double ridge) {
  return (temporal ? rho : 0.5 * rho) + ridge;
}

/// rho_{B_k} = trace(D_k A^T A D_k) / R + 2 lambda_B.
inline double rho_B(const Matrix& AtA, const Eigen::Ref<const Vector>& c, double lambda_B = 0.0) {
  const double t =
      (AtA.diagonal().array() * c.array().square()).sum() / static_cast<double>(c.size()) + 2.0 * lambda_B;
  return std::max(t, rho_floor);
}

/// rho_{D_k} = trace(A^T A .* B_k^T B_k) / R.
inline double rho_D(const Matrix& G) { return std::max(G.trace() / static_cast<double>(G.rows()), rho_floor); }

/// sum_i w_i a_i^T a_i, i.e. A^T diag(w) A.
template <typename W>
inline Matrix weighted_gram(const Matrix& A, const W& w) {
  return A.transpose() * (w.asDiagonal() * A);
}

/// Primal D_k row: (G + (lambda_D + rho/2) I) d = rhs + (rho/2)(z - mu).
inline Vector d_primal(const Eigen::LLT<Matrix>& lhs, const Vector& rhs, const Vector& z, const Vector& mu,
                       double rho) {
  return lhs.solve(rhs + 0.5 * rho * (z - mu));
}

inline Eigen::LLT<Matrix> d_lhs(const Matrix& G, double lambda_D, double rho) {
  Matrix L = G;
  L.diagonal().array() += lambda_D + 0.5 * rho;
  return linalg::spd_factor(L, "update_D");
}

/// diag(A^T X B) without forming the R x R product.
template <typename X>
inline Vector diag_AtXB(const Matrix& A, const X& x, const Matrix& B) {
  Matrix XB = x * B;
  return (A.array() * XB.array()).colwise().sum().transpose();
}

}  // namespace tparafac2::kernels
