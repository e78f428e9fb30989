#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "tparafac2/aoadmm.hpp"
#include "tparafac2/errors.hpp"
#include "tparafac2/hungarian.hpp"
#include "tparafac2/model.hpp"

namespace tparafac2 {

struct ComponentScore {
  double A = 0.0;
  double B = 0.0;  // stacked over all K blocks
  double C = 0.0;
  double product() const { return A * B * C; }
};

struct FmsReport {
  double total = 0.0;                         // mean matched triple product, in [0, 1]
  std::vector<ComponentScore> per_component;  // indexed by the truth component
  std::vector<int> permutation;               // estimated component matched to truth component r
  bool zero_norm_column = false;
};

namespace detail {

/// Signed cosine; zero when either vector vanishes.
inline double cosine(const Vector& a, const Vector& b, bool* zero = nullptr) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    if (zero) *zero = true;
    return 0.0;
  }
  return a.dot(b) / (na * nb);
}

}  // namespace detail

/// Factor match score between an estimate and a reference model, components matched by
/// the assignment that maximizes the summed triple products.
inline FmsReport fms(const Parafac2Factors& est, const Parafac2Factors& truth) {
  est.validate();
  truth.validate();
  detail::require(est.R() == truth.R(), "fms: component counts differ");
  detail::require(est.dims() == truth.dims(), "fms: factor shapes differ");
  const int R = truth.R();
  FmsReport rep;
  std::vector<ComponentScore> pair(static_cast<std::size_t>(R * R));
  Eigen::MatrixXd score(R, R);
  std::vector<Vector> sb_t, sb_e;
  for (int r = 0; r < R; ++r) {
    sb_t.push_back(truth.stacked_B_column(r));
    sb_e.push_back(est.stacked_B_column(r));
  }
  for (int t = 0; t < R; ++t)
    for (int e = 0; e < R; ++e) {
      bool zero = false;
      ComponentScore s;
      s.A = std::abs(detail::cosine(truth.A.col(t), est.A.col(e), &zero));
      s.B = std::abs(detail::cosine(sb_t[static_cast<std::size_t>(t)], sb_e[static_cast<std::size_t>(e)], &zero));
      s.C = std::abs(detail::cosine(truth.C.col(t), est.C.col(e), &zero));
      rep.zero_norm_column = rep.zero_norm_column || zero;
      pair[static_cast<std::size_t>(t * R + e)] = s;
      score(t, e) = s.product();
    }
  rep.permutation = max_weight_assignment(score);
  double sum = 0.0;
  for (int t = 0; t < R; ++t) {
    const auto& s = pair[static_cast<std::size_t>(t * R + rep.permutation[static_cast<std::size_t>(t)])];
    rep.per_component.push_back(s);
    sum += s.product();
  }
  rep.total = sum / R;
  return rep;
}

/// Two-factor degeneracy: some component pair whose signed congruence product over A,
/// stacked B and C is below -threshold.
inline bool detect_degenerate(const Parafac2Factors& f, double threshold = 0.85) {
  const int R = f.R();
  if (R < 2) return false;
  std::vector<Vector> sb;
  for (int r = 0; r < R; ++r) sb.push_back(f.stacked_B_column(r));
  for (int r = 0; r < R; ++r)
    for (int s = r + 1; s < R; ++s) {
      const double p = detail::cosine(f.A.col(r), f.A.col(s)) *
                       detail::cosine(sb[static_cast<std::size_t>(r)], sb[static_cast<std::size_t>(s)]) *
                       detail::cosine(f.C.col(r), f.C.col(s));
      if (p < -threshold) return true;
    }
  return false;
}

/// Index of the lowest final loss among feasible, non-degenerate runs.
inline std::size_t best_run(std::span<const FitResult> runs, double degeneracy_threshold = 0.85) {
  detail::require(!runs.empty(), "best_run: no runs given");
  std::size_t best = runs.size();
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    if (!r.report.feasible || detect_degenerate(r.factors, degeneracy_threshold)) continue;
    const double l = r.report.final_loss();
    if (best == runs.size() || l < best_loss) {
      best = i;
      best_loss = l;
    }
  }
  if (best == runs.size()) throw NoFeasibleRun("best_run: no feasible, non-degenerate run");
  return best;
}

}  // namespace tparafac2
