#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "tparafac2/config.hpp"
#include "tparafac2/errors.hpp"
#include "tparafac2/kernels.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/projection.hpp"
#include "tparafac2/tensor.hpp"
#include "tparafac2/thomas.hpp"

namespace tparafac2 {

/// Auxiliary variables, scaled duals and step sizes of the AO-ADMM iteration.
struct AdmmState {
  std::vector<Matrix> Z_B;    // temporal-smoothness auxiliaries
  std::vector<Matrix> mu_ZB;
  std::vector<Matrix> Y_B;    // PARAFAC2-feasible auxiliaries, Y_k = P_k * delta_B
  std::vector<Matrix> mu_DB;
  Matrix Z_D;                 // K x R, non-negative auxiliaries of the C rows
  Matrix mu_D;
  std::vector<double> rho_B;
  std::vector<double> rho_D;
  ProjectionState projection;

  /// Auxiliaries copy the primal factors, duals start at zero, step sizes at one.
  static AdmmState from_factors(const Parafac2Factors& f) {
    AdmmState s;
    s.Z_B = f.B;
    s.Y_B = f.B;
    for (const auto& b : f.B) {
      s.mu_ZB.push_back(Matrix::Zero(b.rows(), b.cols()));
      s.mu_DB.push_back(Matrix::Zero(b.rows(), b.cols()));
    }
    s.Z_D = f.C;
    s.mu_D = Matrix::Zero(f.C.rows(), f.C.cols());
    s.rho_B.assign(f.K(), 1.0);
    s.rho_D.assign(f.K(), 1.0);
    return s;
  }
};

/// A and B_k uniform(0,1), C all ones.
inline Parafac2Factors random_init(const DimSpec& dims, int R, std::uint64_t seed) {
  dims.validate();
  detail::require(R >= 1, "random_init: R must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto fill = [&](Eigen::Index rows) {
    Matrix m(rows, R);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index r = 0; r < R; ++r) m(i, r) = unif(rng);
    return m;
  };
  Parafac2Factors f;
  f.A = fill(static_cast<Eigen::Index>(dims.I));
  for (auto j : dims.J) f.B.push_back(fill(static_cast<Eigen::Index>(j)));
  f.C = Matrix::Ones(static_cast<Eigen::Index>(dims.K), R);
  return f;
}

namespace detail {

inline double stack_norm(const std::vector<Matrix>& a) {
  double s = 0.0;
  for (const auto& m : a) s += m.squaredNorm();
  return std::sqrt(s);
}

inline double stack_diff_norm(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]).squaredNorm();
  return std::sqrt(s);
}

inline double relative(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : INFINITY;
}

/// Prior target M of the B_k normal equations: (Z - mu_Z) + (Y - mu_Delta).
inline Matrix b_target(const AdmmState& s, std::size_t k, bool temporal) {
  Matrix M = s.Y_B[k] - s.mu_DB[k];
  if (temporal) M += s.Z_B[k] - s.mu_ZB[k];
  return M;
}

}  // namespace detail

/// Exact ridge least-squares update of A given B_k and C:
/// A = (sum_k X_k B_k D_k)(sum_k D_k B_k^T B_k D_k + lambda_A I)^{-1}.
inline Matrix update_A(const SliceStack& x, const Parafac2Factors& f, double lambda_A) {
  detail::require(lambda_A >= 0.0, "update_A: lambda_A must be non-negative");
  detail::require(f.dims().J == x.dims().J && f.K() == x.K(), "update_A: factor shapes do not match the data");
  const auto R = f.C.cols();
  Matrix rhs = Matrix::Zero(static_cast<Eigen::Index>(x.I()), R);
  Matrix G = Matrix::Zero(R, R);
  for (std::size_t k = 0; k < x.K(); ++k) {
    Matrix BD = f.B[k] * f.C.row(static_cast<Eigen::Index>(k)).asDiagonal();
    rhs.noalias() += x[k] * BD;
    G.noalias() += BD.transpose() * BD;
  }
  G.diagonal().array() += lambda_A;
  return linalg::solve_right(linalg::spd_factor(G, "update_A"), rhs);
}

/// Primal update of one evolving factor:
/// B_k = (X_k^T A D_k + (rho/2) M)(D_k A^T A D_k + rho I)^{-1} with
/// M = Z_{B_k} - mu_Z + Y_{B_k} - mu_Delta. Without the temporal auxiliary M drops the Z
/// terms and the diagonal weight becomes rho/2. ridge adds a plain penalty on B_k.
inline Matrix update_Bk_primal(const SliceMatrix& xk, const Matrix& A, const Vector& dk, const AdmmState& state,
                               std::size_t k, bool temporal = true, double ridge = 0.0) {
  const double rho = state.rho_B.at(k);
  detail::require(rho > 0.0, "update_Bk_primal: rho must be positive");
  detail::require(xk.rows() == A.rows() && dk.size() == A.cols(), "update_Bk_primal: shape mismatch");
  Matrix AD = A * dk.asDiagonal();
  Matrix G = AD.transpose() * AD;
  G.diagonal().array() += kernels::b_diagonal(rho, temporal, ridge);
  Matrix rhs = xk.transpose() * AD + 0.5 * rho * detail::b_target(state, k, temporal);
  return linalg::solve_right(linalg::spd_factor(G, "update_Bk_primal"), rhs);
}

/// Mode-3 ADMM: per slice, ridge-regularized primal solve for the C row, then the
/// (optionally non-negative) auxiliary and scaled dual updates. Step sizes are reset
/// to trace(A^T A .* B_k^T B_k)/R. Returns the updated C.
inline Matrix update_D_admm(const SliceStack& x, const Parafac2Factors& f, AdmmState& state, double lambda_D,
                            bool nonneg, int max_inner = 5, double tol = 1e-5) {
  detail::require(lambda_D >= 0.0, "update_D_admm: lambda_D must be non-negative");
  const Matrix AtA = f.A.transpose() * f.A;
  Matrix C = f.C;
  state.rho_D.resize(x.K());
  for (std::size_t k = 0; k < x.K(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Matrix G = AtA.cwiseProduct(f.B[k].transpose() * f.B[k]);
    const Vector rhs = kernels::diag_AtXB(f.A, x[k], f.B[k]);
    const double rho = state.rho_D[k] = kernels::rho_D(G);
    const auto lhs = kernels::d_lhs(G, lambda_D, rho);
    Vector z = state.Z_D.row(kk).transpose();
    Vector mu = state.mu_D.row(kk).transpose();
    Vector d;
    for (int it = 0; it < max_inner; ++it) {
      d = kernels::d_primal(lhs, rhs, z, mu, rho);
      Vector z_prev = z;
      z = nonneg ? Vector((d + mu).cwiseMax(0.0)) : Vector(d + mu);
      mu += d - z;
      if (detail::relative((d - z).norm(), d.norm()) < tol && detail::relative((z - z_prev).norm(), mu.norm()) < tol)
        break;
    }
    C.row(kk) = d.transpose();
    state.Z_D.row(kk) = z.transpose();
    state.mu_D.row(kk) = mu.transpose();
  }
  return C;
}

/// Stop iff the objective change is small (absolute OR relative) AND every
/// feasibility gap is below eps_feas.
inline std::optional<ExitReason> check_stop(std::span<const double> trace, const FeasibilityGaps& gaps,
                                            const SolverConfig& cfg) {
  if (trace.size() < 2) return std::nullopt;
  if (!(gaps.max() < cfg.eps_feas)) return std::nullopt;
  const double prev = trace[trace.size() - 2];
  const double diff = std::abs(trace.back() - prev);
  if (diff < cfg.eps_abs) return ExitReason::abs_tol;
  if (prev != 0.0 && diff / std::abs(prev) < cfg.eps_rel) return ExitReason::rel_tol;
  return std::nullopt;
}

enum class FidelityMode { full, row_wise };

/// One AO-ADMM fit in progress: owns the working data, primal factors and ADMM state.
///
/// In full mode every primal update is the closed-form full-matrix solve. In row-wise
/// mode the fidelity term only counts observed entries and A, B_k and C are solved one
/// row at a time; the auxiliary and dual updates are shared by both modes.
class AoAdmmEngine {
 public:
  AoAdmmEngine(SliceStack x, const SolverConfig& cfg, Parafac2Factors init, const MaskStack* mask = nullptr,
               FidelityMode mode = FidelityMode::full)
      : x_(std::move(x)), cfg_(cfg), f_(std::move(init)), mode_(mode) {
    cfg_.validate();
    f_.validate();
    detail::require(f_.dims() == x_.dims(), "AoAdmm: initialization shapes do not match the data");
    detail::require(f_.R() == cfg_.R, "AoAdmm: initialization rank differs from R");
    const auto dims = x_.dims();
    if (cfg_.temporal()) detail::require(!dims.ragged(), "AoAdmm: temporal smoothness requires equal J_k");
    for (auto j : dims.J) detail::require(static_cast<std::size_t>(cfg_.R) <= j, "AoAdmm: R exceeds J_k");
    if (mode_ == FidelityMode::row_wise) {
      detail::require(mask != nullptr, "AoAdmm: row-wise mode needs a mask");
      mask->require_fittable(x_);
      mask_ = *mask;
      for (std::size_t k = 0; k < x_.K(); ++k) x_[k].array() *= mask_[k].array();
    }
    if (cfg_.nonneg_C) f_.C = f_.C.cwiseMax(0.0);
    s_ = AdmmState::from_factors(f_);
  }

  void outer_iteration() {
    update_mode2();
    update_mode3();
    update_mode1();
  }

  /// Algorithm-1 style inner ADMM for the evolving factors.
  void update_mode2() {
    const auto K = x_.K();
    const bool temporal = cfg_.temporal();
    const Matrix AtA = f_.A.transpose() * f_.A;
    std::vector<Matrix> rhs0(K);
    std::vector<Eigen::LLT<Matrix>> lhs(K);
    std::vector<std::vector<Eigen::LLT<Matrix>>> row_lhs;
    if (mode_ == FidelityMode::row_wise) row_lhs.resize(K);

    for (std::size_t k = 0; k < K; ++k) {
      const Vector c = f_.C.row(static_cast<Eigen::Index>(k)).transpose();
      const double rho = s_.rho_B[k] = kernels::rho_B(AtA, c, cfg_.lambda_B);
      const double diag = kernels::b_diagonal(rho, temporal, cfg_.lambda_B_ridge);
      Matrix AD = f_.A * c.asDiagonal();
      rhs0[k] = x_[k].transpose() * AD;
      Matrix G = c.asDiagonal() * AtA * c.asDiagonal();
      G.diagonal().array() += diag;
      lhs[k] = linalg::spd_factor(G, "update_B");
      if (mode_ == FidelityMode::row_wise) row_lhs[k] = row_factors_B(k, AD, diag, lhs[k]);
    }

    for (int it = 0; it < cfg_.max_inner; ++it) {
      const auto Y_prev = s_.Y_B;
      const auto Z_prev = s_.Z_B;
      for (std::size_t k = 0; k < K; ++k) {
        Matrix rhs = rhs0[k] + 0.5 * s_.rho_B[k] * detail::b_target(s_, k, temporal);
        if (mode_ == FidelityMode::full) {
          f_.B[k] = linalg::solve_right(lhs[k], rhs);
        } else {
          for (Eigen::Index j = 0; j < rhs.rows(); ++j)
            f_.B[k].row(j) = row_lhs[k][static_cast<std::size_t>(j)].solve(rhs.row(j).transpose()).transpose();
        }
      }
      if (temporal) s_.Z_B = solve_Z_tridiagonal(f_.B, s_.mu_ZB, s_.rho_B, cfg_.lambda_B);
      s_.Y_B = project_P(f_.B, s_.mu_DB, s_.rho_B, s_.projection, cfg_.projection_sweeps, cfg_.inner_tol);
      for (std::size_t k = 0; k < K; ++k) {
        if (temporal) s_.mu_ZB[k] += f_.B[k] - s_.Z_B[k];
        s_.mu_DB[k] += f_.B[k] - s_.Y_B[k];
      }

      const double bnorm = detail::stack_norm(f_.B);
      double primal = detail::relative(detail::stack_diff_norm(f_.B, s_.Y_B), bnorm);
      double dual = detail::relative(detail::stack_diff_norm(s_.Y_B, Y_prev), detail::stack_norm(s_.mu_DB));
      if (temporal) {
        primal = std::max(primal, detail::relative(detail::stack_diff_norm(f_.B, s_.Z_B), bnorm));
        dual = std::max(dual, detail::relative(detail::stack_diff_norm(s_.Z_B, Z_prev), detail::stack_norm(s_.mu_ZB)));
      }
      if (primal < cfg_.inner_tol && dual < cfg_.inner_tol) break;
    }
  }

  /// ADMM for the C rows with ridge and optional non-negativity.
  void update_mode3() {
    if (mode_ == FidelityMode::full) {
      f_.C = update_D_admm(x_, f_, s_, cfg_.lambda_D, cfg_.nonneg_C, cfg_.max_inner, cfg_.inner_tol);
      return;
    }
    const Matrix AtA = f_.A.transpose() * f_.A;
    for (std::size_t k = 0; k < x_.K(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Matrix G = masked_gram_C(k);
      const Vector rhs = kernels::diag_AtXB(f_.A, x_[k], f_.B[k]);
      const double rho = s_.rho_D[k] = kernels::rho_D(AtA.cwiseProduct(f_.B[k].transpose() * f_.B[k]));
      const auto lhs = kernels::d_lhs(G, cfg_.lambda_D, rho);
      Vector z = s_.Z_D.row(kk).transpose();
      Vector mu = s_.mu_D.row(kk).transpose();
      Vector d;
      for (int it = 0; it < cfg_.max_inner; ++it) {
        d = kernels::d_primal(lhs, rhs, z, mu, rho);
        Vector z_prev = z;
        z = cfg_.nonneg_C ? Vector((d + mu).cwiseMax(0.0)) : Vector(d + mu);
        mu += d - z;
        if (detail::relative((d - z).norm(), d.norm()) < cfg_.inner_tol &&
            detail::relative((z - z_prev).norm(), mu.norm()) < cfg_.inner_tol)
          break;
      }
      f_.C.row(kk) = d.transpose();
      s_.Z_D.row(kk) = z.transpose();
      s_.mu_D.row(kk) = mu.transpose();
    }
  }

  /// Exact ridge update of A (full matrix or row by row).
  void update_mode1() {
    if (mode_ == FidelityMode::full) {
      f_.A = update_A(x_, f_, cfg_.lambda_A);
      return;
    }
    const auto R = f_.C.cols();
    const auto I = static_cast<Eigen::Index>(x_.I());
    Matrix rhs = Matrix::Zero(I, R);
    std::vector<Matrix> BD(x_.K());
    Matrix full_gram = Matrix::Zero(R, R);
    for (std::size_t k = 0; k < x_.K(); ++k) {
      BD[k] = f_.B[k] * f_.C.row(static_cast<Eigen::Index>(k)).asDiagonal();
      rhs.noalias() += x_[k] * BD[k];
      full_gram.noalias() += BD[k].transpose() * BD[k];
    }
    // Gram entries (r, s) for every row i at once: sum_k W_k (BD_k(:,r) .* BD_k(:,s)).
    std::vector<Vector> pair(static_cast<std::size_t>(R * R));
    for (Eigen::Index r = 0; r < R; ++r)
      for (Eigen::Index s = r; s < R; ++s) {
        Vector acc = Vector::Zero(I);
        for (std::size_t k = 0; k < x_.K(); ++k) acc.noalias() += mask_[k] * BD[k].col(r).cwiseProduct(BD[k].col(s));
        pair[static_cast<std::size_t>(r * R + s)] = std::move(acc);
      }
    for (Eigen::Index i = 0; i < I; ++i) {
      Matrix G(R, R);
      for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index s = r; s < R; ++s) G(r, s) = G(s, r) = pair[static_cast<std::size_t>(r * R + s)](i);
      G.diagonal().array() += cfg_.lambda_A;
      f_.A.row(i) = linalg::spd_factor(G, "update_A_row").solve(rhs.row(i).transpose()).transpose();
    }
  }

  /// Objective on the primal factors (observed entries only when a mask is given).
  double objective(const MaskStack* mask = nullptr) const { return loss(f_, x_, cfg_, mask); }

  /// Same objective with B_k replaced by Y_{B_k}.
  double aux_objective(const MaskStack* mask = nullptr) const { return loss(feasible(), x_, cfg_, mask); }

  FeasibilityGaps gaps() const {
    FeasibilityGaps g;
    const double bnorm = detail::stack_norm(f_.B);
    g.B_vs_YB = detail::relative(detail::stack_diff_norm(f_.B, s_.Y_B), bnorm);
    if (cfg_.temporal()) g.B_vs_ZB = detail::relative(detail::stack_diff_norm(f_.B, s_.Z_B), bnorm);
    g.D_vs_ZD = detail::relative((f_.C - s_.Z_D).norm(), f_.C.norm());
    return g;
  }

  const Parafac2Factors& primal() const { return f_; }

  /// Primal A, the PARAFAC2-feasible Y_{B_k}, and C projected onto its constraint set.
  Parafac2Factors feasible() const {
    Parafac2Factors out{f_.A, s_.Y_B, f_.C};
    if (cfg_.nonneg_C) out.C = s_.Z_D;
    return out;
  }

  const AdmmState& state() const { return s_; }
  const SolverConfig& config() const { return cfg_; }
  SliceStack& data() { return x_; }
  const SliceStack& data() const { return x_; }

  /// Replaces the working data (EM imputation); observed-entry handling is the caller's job.
  void set_slice(std::size_t k, const SliceMatrix& v) { x_[k] = v; }

 private:
  std::vector<Eigen::LLT<Matrix>> row_factors_B(std::size_t k, const Matrix& AD, double diag,
                                                const Eigen::LLT<Matrix>& shared) const {
    const auto R = AD.cols();
    const auto& W = mask_[k];
    const auto J = W.cols();
    // Column j of pair(r, s) holds sum_i W(i,j) AD(i,r) AD(i,s).
    std::vector<Vector> pair(static_cast<std::size_t>(R * R));
    for (Eigen::Index r = 0; r < R; ++r)
      for (Eigen::Index s = r; s < R; ++s)
        pair[static_cast<std::size_t>(r * R + s)] = W.transpose() * AD.col(r).cwiseProduct(AD.col(s));
    std::vector<Eigen::LLT<Matrix>> out(static_cast<std::size_t>(J));
    for (Eigen::Index j = 0; j < J; ++j) {
      if ((W.col(j).array() != 0.0).all()) {
        out[static_cast<std::size_t>(j)] = shared;
        continue;
      }
      Matrix G(R, R);
      for (Eigen::Index r = 0; r < R; ++r)
        for (Eigen::Index s = r; s < R; ++s) G(r, s) = G(s, r) = pair[static_cast<std::size_t>(r * R + s)](j);
      G.diagonal().array() += diag;
      out[static_cast<std::size_t>(j)] = linalg::spd_factor(G, "update_B_row");
    }
    return out;
  }

  /// sum over observed (i, j) of (A(i,:)^T A(i,:)) .* (B_k(j,:)^T B_k(j,:)).
  Matrix masked_gram_C(std::size_t k) const {
    const auto R = f_.A.cols();
    Matrix G(R, R);
    for (Eigen::Index r = 0; r < R; ++r)
      for (Eigen::Index s = r; s < R; ++s) {
        const Vector bb = f_.B[k].col(r).cwiseProduct(f_.B[k].col(s));
        G(r, s) = G(s, r) = f_.A.col(r).cwiseProduct(f_.A.col(s)).dot(mask_[k] * bb);
      }
    return G;
  }

  SliceStack x_;
  SolverConfig cfg_;
  Parafac2Factors f_;
  FidelityMode mode_;
  MaskStack mask_;
  AdmmState s_;
};

struct FitResult {
  Parafac2Factors factors;  // constraint-satisfying model (B_k = Y_{B_k})
  Parafac2Factors primal;
  FitReport report;
};

/// Called after every outer iteration with the iteration number, primal factors and
/// recorded objective value.
using IterationObserver = std::function<void(int, const Parafac2Factors&, double)>;

namespace detail {

/// Outer AO loop shared by the full, EM and row-wise fitters. after_outer runs between
/// the factor updates and the objective evaluation (the EM E-step hooks in there).
template <typename AfterOuter>
FitResult run_outer_loop(AoAdmmEngine& engine, const MaskStack* loss_mask, AfterOuter&& after_outer,
                         const IterationObserver& observe) {
  const auto& cfg = engine.config();
  const auto t0 = std::chrono::steady_clock::now();
  FitReport rep;
  rep.loss_trace.push_back(engine.objective(loss_mask));
  rep.aux_loss_trace.push_back(engine.aux_objective(loss_mask));
  const double f0 = rep.loss_trace.front();
  bool stopped = false;
  for (int n = 1; n <= cfg.max_outer; ++n) {
    engine.outer_iteration();
    after_outer(engine);
    const double f = engine.objective(loss_mask);
    if (!std::isfinite(f)) throw NumericalError("fit: objective became non-finite");
    if (f > rep.loss_trace.back() + 1e-6 * f0) ++rep.monotonicity_violations;
    rep.loss_trace.push_back(f);
    rep.aux_loss_trace.push_back(engine.aux_objective(loss_mask));
    rep.n_outer = n;
    if (observe) observe(n, engine.primal(), f);
    if (auto why = check_stop(rep.loss_trace, engine.gaps(), cfg)) {
      rep.exit_reason = *why;
      stopped = true;
      break;
    }
  }
  if (!stopped) rep.exit_reason = ExitReason::max_iter;
  const auto gaps = engine.gaps();
  FitResult out{engine.feasible(), engine.primal(), std::move(rep)};
  out.report.feasible = gaps.max() < cfg.eps_feas && out.factors.all_finite();
  out.report.constraint = check_constraint(out.factors);
  out.report.constraint.feasibility_gaps = gaps;
  out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace detail

/// Fits (t)PARAFAC2 to fully observed data by AO-ADMM from the given initialization.
/// The temporal auxiliary Z_B is active only when cfg.lambda_B > 0.
inline FitResult fit(const SliceStack& x, const SolverConfig& cfg, const Parafac2Factors& init,
                     const IterationObserver& observe = {}) {
  AoAdmmEngine engine(x, cfg, init);
  return detail::run_outer_loop(engine, nullptr, [](AoAdmmEngine&) {}, observe);
}

/// As above, initialized by random_init with cfg.seed.
inline FitResult fit(const SliceStack& x, const SolverConfig& cfg) {
  return fit(x, cfg, random_init(x.dims(), cfg.R, cfg.seed));
}

}  // namespace tparafac2
