#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tparafac2/aoadmm.hpp"
#include "tparafac2/config.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/missing_em.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

struct AlsConfig {
  int R = 3;
  double tol = 1e-8;
  int max_iter = 10000;
  bool nonneg_A = false;  // projected least squares (clamp after the solve)
  bool nonneg_C = false;
  std::uint64_t seed = 0;
};

/// Direct-fitting parametrization B_k = P_k * B.
struct AlsState {
  std::vector<Matrix> P;  // J_k x R, orthonormal columns
  Matrix B;               // R x R
};

/// PARAFAC2 by direct-fitting ALS. With a mask, missing entries start at the slice means
/// of the observed data and are re-imputed from the reconstruction after every sweep.
inline FitResult fit_als(const SliceStack& x, const AlsConfig& cfg, const MaskStack* mask,
                         const Parafac2Factors& init) {
  detail::require(cfg.R >= 1 && cfg.tol > 0.0 && cfg.max_iter >= 1, "fit_als: invalid configuration");
  init.validate();
  detail::require(init.dims() == x.dims() && init.R() == cfg.R, "fit_als: initialization does not match data");
  const auto dims = x.dims();
  detail::require(static_cast<std::size_t>(cfg.R) <= dims.I, "fit_als: R exceeds I");
  for (auto j : dims.J) detail::require(static_cast<std::size_t>(cfg.R) <= j, "fit_als: R exceeds J_k");
  if (mask) mask->require_fittable(x);

  const auto t0 = std::chrono::steady_clock::now();
  const auto K = x.K();
  const auto R = static_cast<Eigen::Index>(cfg.R);
  SliceStack work = mask ? impute_slice_means(x, *mask) : x;

  Matrix A = init.A;
  Matrix C = init.C;
  AlsState st;
  {
    Matrix gram = Matrix::Zero(R, R);
    for (const auto& b : init.B) gram += b.transpose() * b;
    st.B = linalg::psd_sqrt(gram / static_cast<double>(K));
  }
  st.P.resize(K);

  auto factors = [&] {
    Parafac2Factors f{A, {}, C};
    for (std::size_t k = 0; k < K; ++k) f.B.push_back(st.P[k] * st.B);
    return f;
  };
  FitReport rep;
  rep.exit_reason = ExitReason::max_iter;
  rep.loss_trace.push_back(fidelity(init, x, mask));
  std::vector<Matrix> Y(K);
  for (int n = 1; n <= cfg.max_iter; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      st.P[k] = linalg::procrustes(work[k].transpose() * (A * C.row(kk).asDiagonal()) * st.B.transpose());
      Y[k] = work[k] * st.P[k];
    }
    // CP-ALS sweep on the projected I x R x K array Y_k ~ A D_k B^T.
    {
      Matrix rhs = Matrix::Zero(A.rows(), R);
      for (std::size_t k = 0; k < K; ++k) rhs += Y[k] * st.B * C.row(static_cast<Eigen::Index>(k)).asDiagonal();
      const Matrix G = (st.B.transpose() * st.B).cwiseProduct(C.transpose() * C);
      A = linalg::solve_right(linalg::spd_factor(G, "fit_als(A)"), rhs);
      if (cfg.nonneg_A) A = A.cwiseMax(0.0);
    }
    {
      Matrix rhs = Matrix::Zero(R, R);
      for (std::size_t k = 0; k < K; ++k) rhs += Y[k].transpose() * A * C.row(static_cast<Eigen::Index>(k)).asDiagonal();
      const Matrix G = (A.transpose() * A).cwiseProduct(C.transpose() * C);
      st.B = linalg::solve_right(linalg::spd_factor(G, "fit_als(B)"), rhs);
    }
    {
      const auto lhs = linalg::spd_factor((A.transpose() * A).cwiseProduct(st.B.transpose() * st.B), "fit_als(C)");
      for (std::size_t k = 0; k < K; ++k) {
        Vector c = lhs.solve(kernels::diag_AtXB(A, Y[k], st.B));
        if (cfg.nonneg_C) c = c.cwiseMax(0.0);
        C.row(static_cast<Eigen::Index>(k)) = c.transpose();
      }
    }
    const auto f = factors();
    if (mask) em_impute(work, *mask, f);
    const double l = fidelity(f, x, mask);
    if (!std::isfinite(l)) throw NumericalError("fit_als: objective became non-finite");
    if (n > 1 && l > rep.loss_trace.back() * (1.0 + 1e-6)) ++rep.monotonicity_violations;
    rep.loss_trace.push_back(l);
    rep.n_outer = n;
    if (n > 1) {
      const double prev = rep.loss_trace[rep.loss_trace.size() - 2];
      const double diff = std::abs(l - prev);
      if (diff == 0.0 || (prev != 0.0 && diff / prev < cfg.tol)) {
        rep.exit_reason = ExitReason::rel_tol;
        break;
      }
    }
  }
  rep.aux_loss_trace = rep.loss_trace;
  FitResult out{factors(), {}, std::move(rep)};
  out.primal = out.factors;
  out.report.constraint = check_constraint(out.factors);
  out.report.feasible = out.factors.all_finite();
  out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline FitResult fit_als(const SliceStack& x, const AlsConfig& cfg, const MaskStack* mask = nullptr) {
  return fit_als(x, cfg, mask, random_init(x.dims(), cfg.R, cfg.seed));
}

}  // namespace tparafac2
