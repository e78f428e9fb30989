#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tparafac2/errors.hpp"

namespace tparafac2 {

/// Frontal slices are stored row-major, one independent matrix per slice.
using SliceMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Factor matrices (A, B_k, C) and small R x R systems.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dimensions of a (possibly ragged) three-way array.
struct DimSpec {
  std::size_t I = 0;
  std::size_t K = 0;
  std::vector<std::size_t> J;

  static DimSpec uniform(std::size_t i, std::size_t j, std::size_t k) {
    return DimSpec{i, k, std::vector<std::size_t>(k, j)};
  }

  void validate() const {
    detail::require(I >= 1 && K >= 1, "DimSpec: I and K must be positive");
    detail::require(J.size() == K, "DimSpec: J must list one width per slice");
    for (auto j : J) detail::require(j >= 1, "DimSpec: every J_k must be positive");
  }

  bool ragged() const {
    for (auto j : J)
      if (j != J.front()) return true;
    return false;
  }

  std::size_t total() const {
    std::size_t n = 0;
    for (auto j : J) n += I * j;
    return n;
  }

  bool operator==(const DimSpec&) const = default;
};

/// An ordered list of K frontal slices X_k, each I x J_k.
class SliceStack {
 public:
  SliceStack() = default;

  explicit SliceStack(std::vector<SliceMatrix> slices) : slices_(std::move(slices)) { validate(); }

  static SliceStack zeros(const DimSpec& dims) {
    dims.validate();
    std::vector<SliceMatrix> s;
    s.reserve(dims.K);
    for (auto j : dims.J) s.push_back(SliceMatrix::Zero(dims.I, j));
    return SliceStack(std::move(s));
  }

  static SliceStack constant(const DimSpec& dims, double value) {
    auto out = zeros(dims);
    for (auto& s : out.slices_) s.setConstant(value);
    return out;
  }

  std::size_t I() const { return slices_.empty() ? 0 : static_cast<std::size_t>(slices_.front().rows()); }
  std::size_t K() const { return slices_.size(); }
  std::size_t J(std::size_t k) const { return static_cast<std::size_t>(slices_[k].cols()); }

  DimSpec dims() const {
    DimSpec d{I(), K(), {}};
    for (const auto& s : slices_) d.J.push_back(static_cast<std::size_t>(s.cols()));
    return d;
  }

  const SliceMatrix& operator[](std::size_t k) const { return slices_[k]; }
  SliceMatrix& operator[](std::size_t k) { return slices_[k]; }

  const std::vector<SliceMatrix>& slices() const { return slices_; }
  auto begin() const { return slices_.begin(); }
  auto end() const { return slices_.end(); }

  bool congruent(const SliceStack& other) const { return dims() == other.dims(); }

  bool all_finite() const {
    for (const auto& s : slices_)
      if (!s.allFinite()) return false;
    return true;
  }

  void validate() const {
    detail::require(!slices_.empty(), "SliceStack: at least one slice required");
    const auto rows = slices_.front().rows();
    detail::require(rows >= 1, "SliceStack: I must be positive");
    for (const auto& s : slices_) {
      detail::require(s.rows() == rows, "SliceStack: all slices must share the row count I");
      detail::require(s.cols() >= 1, "SliceStack: every J_k must be positive");
    }
    detail::require(all_finite(), "SliceStack: non-finite value");
  }

 private:
  std::vector<SliceMatrix> slices_;
};

/// Binary observation indicator (1 = observed, 0 = missing) congruent to a SliceStack.
/// Construction checks shape and binary values; the mode-1 fiber rule is checked by
/// require_fittable() before any fit.
class MaskStack {
 public:
  MaskStack() = default;

  explicit MaskStack(std::vector<SliceMatrix> slices) : slices_(std::move(slices)) { validate(); }

  static MaskStack ones(const DimSpec& dims) {
    dims.validate();
    std::vector<SliceMatrix> s;
    for (auto j : dims.J) s.push_back(SliceMatrix::Ones(dims.I, j));
    return MaskStack(std::move(s));
  }

  std::size_t I() const { return slices_.empty() ? 0 : static_cast<std::size_t>(slices_.front().rows()); }
  std::size_t K() const { return slices_.size(); }
  std::size_t J(std::size_t k) const { return static_cast<std::size_t>(slices_[k].cols()); }

  DimSpec dims() const {
    DimSpec d{I(), K(), {}};
    for (const auto& s : slices_) d.J.push_back(static_cast<std::size_t>(s.cols()));
    return d;
  }

  const SliceMatrix& operator[](std::size_t k) const { return slices_[k]; }
  const std::vector<SliceMatrix>& slices() const { return slices_; }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (const auto& s : slices_) n += static_cast<std::size_t>((s.array() == 0.0).count());
    return n;
  }

  bool all_observed() const { return missing_count() == 0; }

  /// Index of the first mode-1 fiber (column j of slice k) with no observed entry.
  std::optional<std::pair<std::size_t, std::size_t>> empty_mode1_fiber() const {
    for (std::size_t k = 0; k < slices_.size(); ++k)
      for (Eigen::Index j = 0; j < slices_[k].cols(); ++j)
        if ((slices_[k].col(j).array() != 0.0).count() == 0) return std::pair{static_cast<std::size_t>(j), k};
    return std::nullopt;
  }

  void validate() const {
    detail::require(!slices_.empty(), "MaskStack: at least one slice required");
    const auto rows = slices_.front().rows();
    for (const auto& s : slices_) {
      detail::require(s.rows() == rows && s.cols() >= 1, "MaskStack: inconsistent slice shapes");
      detail::require(((s.array() == 0.0) || (s.array() == 1.0)).all(), "MaskStack: entries must be 0 or 1");
    }
  }

  /// Fitting requires every mode-1 fiber and every slice to keep at least one observed entry.
  void require_fittable(const SliceStack& x) const {
    require_congruent(x);
    if (auto f = empty_mode1_fiber())
      throw InvalidInput("MaskStack: mode-1 fiber (j=" + std::to_string(f->first) + ", k=" +
                         std::to_string(f->second) + ") is entirely missing");
  }

  void require_congruent(const SliceStack& x) const {
    detail::require(dims() == x.dims(), "MaskStack: shape does not match the data");
  }

 private:
  std::vector<SliceMatrix> slices_;
};

/// Frobenius norm over all entries, or over the observed entries when a mask is given.
inline double frobenius_norm(const SliceStack& x, const MaskStack* mask = nullptr) {
  if (mask) mask->require_congruent(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < x.K(); ++k) {
    if (mask)
      sum += x[k].cwiseProduct((*mask)[k]).squaredNorm();
    else
      sum += x[k].squaredNorm();
  }
  return std::sqrt(sum);
}

/// Elementwise x - xhat, zeroed where the mask is 0.
inline SliceStack hadamard_residual(const SliceStack& x, const SliceStack& xhat, const MaskStack* mask = nullptr) {
  detail::require(x.congruent(xhat), "hadamard_residual: data and estimate shapes differ");
  if (mask) mask->require_congruent(x);
  std::vector<SliceMatrix> out;
  out.reserve(x.K());
  for (std::size_t k = 0; k < x.K(); ++k) {
    SliceMatrix r = x[k] - xhat[k];
    if (mask) r.array() *= (*mask)[k].array();
    out.push_back(std::move(r));
  }
  return SliceStack(std::move(out));
}

}  // namespace tparafac2
