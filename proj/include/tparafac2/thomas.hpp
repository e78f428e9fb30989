#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "tparafac2/errors.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// Scalar-coefficient tridiagonal system T z = d applied to many right-hand sides.
///
/// sub[k] multiplies z_{k-1}, diag[k] multiplies z_k, super[k] multiplies z_{k+1}
/// (sub[0] and super[K-1] are ignored). Each right-hand side is a matrix, and the same
/// scalar sweep is applied to all of its entries at once.
struct Tridiagonal {
  std::vector<double> sub, diag, super;

  std::size_t size() const { return diag.size(); }

  /// T * z, used for residual checks.
  std::vector<Matrix> apply(const std::vector<Matrix>& z) const {
    const auto n = size();
    std::vector<Matrix> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      out[k] = diag[k] * z[k];
      if (k > 0) out[k] += sub[k] * z[k - 1];
      if (k + 1 < n) out[k] += super[k] * z[k + 1];
    }
    return out;
  }
};

/// Thomas algorithm. Requires a non-singular system without pivoting, which holds for
/// the diagonally dominant systems arising from the temporal auxiliary update.
inline std::vector<Matrix> thomas_solve(const Tridiagonal& T, std::vector<Matrix> rhs) {
  const auto n = T.size();
  detail::require(n >= 1 && rhs.size() == n && T.sub.size() == n && T.super.size() == n,
                  "thomas_solve: coefficient and right-hand side lengths differ");
  std::vector<double> cp(n);
  double denom = T.diag[0];
  if (denom == 0.0) throw NumericalError("thomas_solve: zero pivot");
  cp[0] = n > 1 ? T.super[0] / denom : 0.0;
  rhs[0] /= denom;
  for (std::size_t k = 1; k < n; ++k) {
    denom = T.diag[k] - T.sub[k] * cp[k - 1];
    if (denom == 0.0) throw NumericalError("thomas_solve: zero pivot");
    cp[k] = k + 1 < n ? T.super[k] / denom : 0.0;
    rhs[k] = (rhs[k] - T.sub[k] * rhs[k - 1]) / denom;
  }
  for (std::size_t k = n - 1; k-- > 0;) rhs[k] -= cp[k] * rhs[k + 1];
  return rhs;
}

/// System for the temporal auxiliaries Z_{B_k}:
///   (2l + rho_1) Z_1 - 2l Z_2 = rho_1 (B_1 + mu_1)
///   (4l + rho_k) Z_k - 2l (Z_{k-1} + Z_{k+1}) = rho_k (B_k + mu_k)
///   (2l + rho_K) Z_K - 2l Z_{K-1} = rho_K (B_K + mu_K)
inline Tridiagonal temporal_system(std::span<const double> rho, double lambda_B) {
  const auto K = rho.size();
  Tridiagonal T;
  T.sub.assign(K, -2.0 * lambda_B);
  T.super.assign(K, -2.0 * lambda_B);
  T.diag.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const bool edge = (k == 0 || k + 1 == K);
    T.diag[k] = (K == 1 ? 0.0 : (edge ? 2.0 : 4.0) * lambda_B) + rho[k];
  }
  T.sub[0] = 0.0;
  T.super[K - 1] = 0.0;
  return T;
}

/// Solves the temporal-smoothness stationarity system for all Z_{B_k} at once.
inline std::vector<Matrix> solve_Z_tridiagonal(const std::vector<Matrix>& B, const std::vector<Matrix>& mu,
                                               std::span<const double> rho, double lambda_B) {
  const auto K = B.size();
  detail::require(K >= 1 && mu.size() == K && rho.size() == K, "solve_Z_tridiagonal: list lengths differ");
  detail::require(lambda_B >= 0.0, "solve_Z_tridiagonal: lambda_B must be non-negative");
  for (std::size_t k = 0; k < K; ++k) {
    detail::require(rho[k] > 0.0, "solve_Z_tridiagonal: step sizes must be positive");
    detail::require(mu[k].rows() == B[k].rows() && mu[k].cols() == B[k].cols(),
                    "solve_Z_tridiagonal: dual shape differs from B_k");
    if (lambda_B > 0.0)
      detail::require(B[k].rows() == B[0].rows() && B[k].cols() == B[0].cols(),
                      "solve_Z_tridiagonal: temporal smoothness requires equal J_k");
  }
  std::vector<Matrix> rhs(K);
  for (std::size_t k = 0; k < K; ++k) rhs[k] = rho[k] * (B[k] + mu[k]);
  if (lambda_B == 0.0) {
    for (std::size_t k = 0; k < K; ++k) rhs[k] = B[k] + mu[k];
    return rhs;
  }
  return thomas_solve(temporal_system(rho, lambda_B), std::move(rhs));
}

}  // namespace tparafac2
