#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "tparafac2/errors.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// Warm-start state of the approximate projection: Y_k = P_k * delta_B.
struct ProjectionState {
  std::vector<Matrix> P;  // J_k x R, orthonormal columns
  Matrix delta_B;         // R x R common coordinates
  bool initialized = false;
};

/// sum_k rho_k ||M_k - Y_k||^2, the quantity the projection decreases.
inline double projection_objective(const std::vector<Matrix>& M, const std::vector<Matrix>& Y,
                                   std::span<const double> rho) {
  double s = 0.0;
  for (std::size_t k = 0; k < M.size(); ++k) s += rho[k] * (M[k] - Y[k]).squaredNorm();
  return s;
}

/// Approximate projection of the targets M_k = B_k + mu_k onto the set of
/// PARAFAC2-feasible sequences {P_k delta_B}.
///
/// Alternates orthogonal Procrustes solves for each P_k with the closed-form weighted
/// average for delta_B. On a cold start delta_B is the square root of the rho-weighted
/// mean cross product of the targets, which is invariant to per-slice rotations of M_k.
/// Returns the feasible Y_k; state carries P_k and delta_B to the next call.
inline std::vector<Matrix> project_P(const std::vector<Matrix>& B, const std::vector<Matrix>& mu,
                                     std::span<const double> rho, ProjectionState& state, int max_sweeps = 10,
                                     double tol = 1e-5) {
  const auto K = B.size();
  detail::require(K >= 1 && mu.size() == K && rho.size() == K, "project_P: list lengths differ");
  const auto R = B.front().cols();
  for (std::size_t k = 0; k < K; ++k) {
    detail::require(B[k].cols() == R && mu[k].rows() == B[k].rows() && mu[k].cols() == R,
                    "project_P: inconsistent shapes");
    detail::require(R <= B[k].rows(), "project_P: R exceeds J_k, projection undefined");
    detail::require(rho[k] > 0.0, "project_P: step sizes must be positive");
  }

  std::vector<Matrix> M(K);
  double rho_sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    M[k] = B[k] + mu[k];
    rho_sum += rho[k];
  }

  if (!state.initialized || state.delta_B.rows() != R) {
    Matrix gram = Matrix::Zero(R, R);
    for (std::size_t k = 0; k < K; ++k) gram.noalias() += rho[k] * M[k].transpose() * M[k];
    state.delta_B = linalg::psd_sqrt(gram / rho_sum);
    state.initialized = true;
  }
  state.P.resize(K);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Matrix next = Matrix::Zero(R, R);
    for (std::size_t k = 0; k < K; ++k) {
      state.P[k] = linalg::procrustes(M[k] * state.delta_B.transpose());
      next.noalias() += rho[k] * state.P[k].transpose() * M[k];
    }
    next /= rho_sum;
    const double scale = next.norm();
    const double change = (next - state.delta_B).norm();
    state.delta_B = std::move(next);
    if (scale == 0.0 || change < tol * scale) break;
  }

  std::vector<Matrix> Y(K);
  for (std::size_t k = 0; k < K; ++k) Y[k] = state.P[k] * state.delta_B;
  return Y;
}

}  // namespace tparafac2
