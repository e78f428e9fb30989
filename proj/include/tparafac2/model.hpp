#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tparafac2/config.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// PARAFAC2 factors: X_k ~ A diag(C(k,:)) B_k^T.
struct Parafac2Factors {
  Matrix A;               // I x R
  std::vector<Matrix> B;  // K matrices, J_k x R
  Matrix C;               // K x R; row k is the diagonal of D_k

  int R() const { return static_cast<int>(A.cols()); }
  std::size_t K() const { return B.size(); }

  DimSpec dims() const {
    DimSpec d{static_cast<std::size_t>(A.rows()), B.size(), {}};
    for (const auto& b : B) d.J.push_back(static_cast<std::size_t>(b.rows()));
    return d;
  }

  void validate() const {
    detail::require(A.cols() >= 1, "Parafac2Factors: R must be positive");
    detail::require(!B.empty(), "Parafac2Factors: at least one B_k required");
    detail::require(C.rows() == static_cast<Eigen::Index>(B.size()), "Parafac2Factors: C must have K rows");
    detail::require(C.cols() == A.cols(), "Parafac2Factors: C column count differs from R");
    for (const auto& b : B) detail::require(b.cols() == A.cols(), "Parafac2Factors: B_k column count differs from R");
  }

  bool all_finite() const {
    if (!A.allFinite() || !C.allFinite()) return false;
    for (const auto& b : B)
      if (!b.allFinite()) return false;
    return true;
  }

  /// Column r of all B_k stacked into one vector.
  Vector stacked_B_column(int r) const {
    Eigen::Index n = 0;
    for (const auto& b : B) n += b.rows();
    Vector v(n);
    Eigen::Index off = 0;
    for (const auto& b : B) {
      v.segment(off, b.rows()) = b.col(r);
      off += b.rows();
    }
    return v;
  }
};

/// A * diag(c) * B^T, the model estimate of one slice.
inline SliceMatrix reconstruct_slice(const Matrix& A, const Eigen::Ref<const Vector>& c, const Matrix& Bk) {
  return (A * c.asDiagonal()) * Bk.transpose();
}

inline SliceStack reconstruct(const Parafac2Factors& f) {
  f.validate();
  std::vector<SliceMatrix> out;
  out.reserve(f.K());
  for (std::size_t k = 0; k < f.K(); ++k) out.push_back(reconstruct_slice(f.A, f.C.row(k).transpose(), f.B[k]));
  return SliceStack(std::move(out));
}

/// Data-fit term sum_k ||W_k .* (X_k - A D_k B_k^T)||^2.
inline double fidelity(const Parafac2Factors& f, const SliceStack& x, const MaskStack* mask = nullptr) {
  detail::require(f.dims() == x.dims(), "loss: factor shapes do not match the data");
  if (mask) mask->require_congruent(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < x.K(); ++k) {
    SliceMatrix r = x[k] - reconstruct_slice(f.A, f.C.row(k).transpose(), f.B[k]);
    if (mask) r.array() *= (*mask)[k].array();
    sum += r.squaredNorm();
  }
  return sum;
}

inline double penalty(const Parafac2Factors& f, const SolverConfig& cfg) {
  detail::require(cfg.lambda_A >= 0 && cfg.lambda_B >= 0 && cfg.lambda_D >= 0 && cfg.lambda_B_ridge >= 0,
                  "loss: penalties must be non-negative");
  double p = cfg.lambda_A * f.A.squaredNorm() + cfg.lambda_D * f.C.squaredNorm();
  if (cfg.lambda_B_ridge > 0)
    for (const auto& b : f.B) p += cfg.lambda_B_ridge * b.squaredNorm();
  if (cfg.lambda_B > 0) {
    detail::require(!f.dims().ragged(), "loss: temporal smoothness requires equal J_k");
    double t = 0.0;
    for (std::size_t k = 1; k < f.K(); ++k) t += (f.B[k] - f.B[k - 1]).squaredNorm();
    p += cfg.lambda_B * t;
  }
  return p;
}

/// Regularized (optionally masked) objective evaluated at the given factors.
inline double loss(const Parafac2Factors& f, const SliceStack& x, const SolverConfig& cfg,
                   const MaskStack* mask = nullptr) {
  const double p = penalty(f, cfg);
  return fidelity(f, x, mask) + p;
}

/// Deviation of the cross products B_k^T B_k from their mean, relative to ||B_1^T B_1||.
///
/// Reported as max_k ||G_k - G_mean|| / ||G_1||. This is zero exactly when all pairwise
/// deviations are zero and bounds the pairwise maximum within a factor of two.
inline double crossprod_deviation(const std::vector<Matrix>& B) {
  if (B.size() <= 1) return 0.0;
  std::vector<Matrix> grams;
  grams.reserve(B.size());
  Matrix mean = Matrix::Zero(B.front().cols(), B.front().cols());
  for (const auto& b : B) {
    grams.push_back(b.transpose() * b);
    mean += grams.back();
  }
  mean /= static_cast<double>(B.size());
  const double ref = grams.front().norm();
  double dev = 0.0;
  for (const auto& g : grams) dev = std::max(dev, (g - mean).norm());
  if (ref == 0.0) return dev == 0.0 ? 0.0 : INFINITY;
  return dev / ref;
}

inline ConstraintReport check_constraint(const Parafac2Factors& f) {
  ConstraintReport r;
  r.max_crossprod_deviation = crossprod_deviation(f.B);
  return r;
}

}  // namespace tparafac2
