#pragma once

#include <Eigen/Dense>

#include <cstddef>

#include "tparafac2/aoadmm.hpp"
#include "tparafac2/kernels.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// Row i of A fitted to the observed entries only:
///   A(i,:) = (sum_k Xw_k(i,:) B_k D_k + p t)(sum_k D_k B_k^T diag(W_k(i,:)) B_k D_k + p I)^{-1}
/// where Xw is the data with missing entries zeroed. With p = lambda_A and no target
/// this is the ridge update; with p = rho/2 and t = Z_A(i,:) - mu_A(i,:) it is the ADMM
/// form.
inline Vector update_A_row(std::size_t i, const SliceStack& x, const MaskStack& w, const Parafac2Factors& f,
                           double prior_weight, const Vector* target = nullptr) {
  w.require_congruent(x);
  detail::require(f.dims() == x.dims(), "update_A_row: factor shapes do not match the data");
  const auto R = f.A.cols();
  const auto ii = static_cast<Eigen::Index>(i);
  Matrix G = Matrix::Zero(R, R);
  Vector rhs = Vector::Zero(R);
  for (std::size_t k = 0; k < x.K(); ++k) {
    const Matrix BD = f.B[k] * f.C.row(static_cast<Eigen::Index>(k)).asDiagonal();
    const Vector wi = w[k].row(ii).transpose();
    G.noalias() += kernels::weighted_gram(BD, wi);
    rhs.noalias() += BD.transpose() * x[k].row(ii).transpose().cwiseProduct(wi);
  }
  G.diagonal().array() += prior_weight;
  if (target) rhs += prior_weight * *target;
  return linalg::spd_factor(G, "update_A_row").solve(rhs);
}

/// Row j of B_k fitted to the observed entries of column j of slice k.
inline Vector update_Bk_row(std::size_t j, std::size_t k, const SliceStack& x, const MaskStack& w,
                            const Parafac2Factors& f, const AdmmState& state, bool temporal = true,
                            double ridge = 0.0) {
  w.require_congruent(x);
  const double rho = state.rho_B.at(k);
  detail::require(rho > 0.0, "update_Bk_row: rho must be positive");
  const auto jj = static_cast<Eigen::Index>(j);
  const Matrix AD = f.A * f.C.row(static_cast<Eigen::Index>(k)).asDiagonal();
  const Vector wj = w[k].col(jj);
  Matrix G = kernels::weighted_gram(AD, wj);
  G.diagonal().array() += kernels::b_diagonal(rho, temporal, ridge);
  const Vector M = detail::b_target(state, k, temporal).row(jj).transpose();
  const Vector rhs = AD.transpose() * x[k].col(jj).cwiseProduct(wj) + 0.5 * rho * M;
  return linalg::spd_factor(G, "update_Bk_row").solve(rhs);
}

/// Primal C(k,:) fitted to the observed entries of slice k.
inline Vector update_C_row(std::size_t k, const SliceStack& x, const MaskStack& w, const Parafac2Factors& f,
                           const AdmmState& state, double lambda_D) {
  w.require_congruent(x);
  const auto R = f.A.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  const double rho = state.rho_D.at(k);
  Matrix G = Matrix::Zero(R, R);
  for (Eigen::Index r = 0; r < R; ++r)
    for (Eigen::Index s = r; s < R; ++s)
      G(r, s) = G(s, r) =
          f.A.col(r).cwiseProduct(f.A.col(s)).dot(w[k] * f.B[k].col(r).cwiseProduct(f.B[k].col(s)));
  const SliceMatrix xw = x[k].cwiseProduct(w[k]);
  const Vector rhs = kernels::diag_AtXB(f.A, xw, f.B[k]);
  return kernels::d_primal(kernels::d_lhs(G, lambda_D, rho), rhs, state.Z_D.row(kk).transpose(),
                           state.mu_D.row(kk).transpose(), rho);
}

/// AO-ADMM on the observed entries only, with row-wise primal updates for A, B_k and C.
inline FitResult fit_rw(const SliceStack& x, const MaskStack& w, const SolverConfig& cfg,
                        const Parafac2Factors& init, const IterationObserver& observe = {}) {
  AoAdmmEngine engine(x, cfg, init, &w, FidelityMode::row_wise);
  return detail::run_outer_loop(engine, &w, [](AoAdmmEngine&) {}, observe);
}

inline FitResult fit_rw(const SliceStack& x, const MaskStack& w, const SolverConfig& cfg) {
  return fit_rw(x, w, cfg, random_init(x.dims(), cfg.R, cfg.seed));
}

}  // namespace tparafac2
