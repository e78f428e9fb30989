#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "tparafac2/tparafac2.hpp"

namespace tp = tparafac2;

namespace testing_support {

using tp::Matrix;
using tp::SliceMatrix;
using tp::Vector;

inline Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector gaussian_vec(std::mt19937_64& rng, Eigen::Index n) { return gaussian(rng, n, 1).col(0); }

inline tp::SliceStack random_stack(std::mt19937_64& rng, const tp::DimSpec& d) {
  std::vector<SliceMatrix> s;
  for (auto j : d.J) s.push_back(gaussian(rng, static_cast<Eigen::Index>(d.I), static_cast<Eigen::Index>(j)));
  return tp::SliceStack(std::move(s));
}

inline tp::Parafac2Factors random_factors(std::mt19937_64& rng, const tp::DimSpec& d, int R) {
  tp::Parafac2Factors f;
  f.A = gaussian(rng, static_cast<Eigen::Index>(d.I), R);
  for (auto j : d.J) f.B.push_back(gaussian(rng, static_cast<Eigen::Index>(j), R));
  f.C = gaussian(rng, static_cast<Eigen::Index>(d.K), R);
  return f;
}

/// Bernoulli(p_observed) mask with at least one observed entry per column.
inline tp::MaskStack random_mask(std::mt19937_64& rng, const tp::DimSpec& d, double p_observed) {
  std::bernoulli_distribution keep(p_observed);
  std::vector<SliceMatrix> s;
  for (auto j : d.J) {
    SliceMatrix w(static_cast<Eigen::Index>(d.I), static_cast<Eigen::Index>(j));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = keep(rng) ? 1.0 : 0.0;
      if (w.col(c).sum() == 0.0) w(std::uniform_int_distribution<Eigen::Index>(0, w.rows() - 1)(rng), c) = 1.0;
    }
    s.push_back(std::move(w));
  }
  return tp::MaskStack(std::move(s));
}

inline Matrix random_orthonormal(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, rows, cols));
  return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Solves X G = rhs through a full-pivoting LU of the transposed system.
inline Matrix dense_right_solve(const Matrix& G, const Matrix& rhs) {
  return G.transpose().fullPivLu().solve(rhs.transpose()).transpose();
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

}  // namespace testing_support
