#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tparafac2/errors.hpp"

namespace tparafac2 {

/// Hyperparameters and tolerances shared by every AO-ADMM fitter.
///
/// lambda_B weights the temporal smoothness term sum_k ||B_k - B_{k-1}||^2; setting it
/// to zero gives (ridge) PARAFAC2. lambda_B_ridge is a plain ridge on every B_k, used by
/// the "ridge on all modes" baseline.
struct SolverConfig {
  int R = 3;
  double lambda_A = 0.0;
  double lambda_B = 0.0;
  double lambda_D = 0.0;
  double lambda_B_ridge = 0.0;
  bool nonneg_C = true;
  double eps_abs = 1e-10;
  double eps_rel = 1e-8;
  double eps_feas = 1e-5;
  double inner_tol = 1e-5;
  int max_outer = 10000;
  int max_inner = 5;
  int projection_sweeps = 10;
  std::uint64_t seed = 0;

  bool temporal() const { return lambda_B > 0.0; }

  void validate() const {
    detail::require(R >= 1, "SolverConfig: R must be positive");
    detail::require(lambda_A >= 0.0 && lambda_B >= 0.0 && lambda_D >= 0.0 && lambda_B_ridge >= 0.0,
                    "SolverConfig: penalties must be non-negative");
    detail::require(eps_abs > 0.0 && eps_rel > 0.0 && eps_feas > 0.0 && inner_tol > 0.0,
                    "SolverConfig: tolerances must be positive");
    detail::require(max_outer >= 1 && max_inner >= 1 && projection_sweeps >= 1,
                    "SolverConfig: iteration caps must be at least 1");
  }
};

enum class ExitReason { abs_tol, rel_tol, max_iter };

inline std::string to_string(ExitReason r) {
  switch (r) {
    case ExitReason::abs_tol: return "abs_tol";
    case ExitReason::rel_tol: return "rel_tol";
    case ExitReason::max_iter: return "max_iter";
  }
  return "unknown";
}

/// Relative distances between primal factors and their ADMM auxiliaries.
struct FeasibilityGaps {
  double B_vs_ZB = 0.0;  // temporal auxiliary; zero when the temporal term is off
  double B_vs_YB = 0.0;  // PARAFAC2-feasible auxiliary
  double D_vs_ZD = 0.0;  // non-negative auxiliary of the C rows

  double max() const {
    double m = B_vs_ZB;
    if (B_vs_YB > m) m = B_vs_YB;
    if (D_vs_ZD > m) m = D_vs_ZD;
    return m;
  }
};

struct ConstraintReport {
  double max_crossprod_deviation = 0.0;
  FeasibilityGaps feasibility_gaps;
};

struct FitReport {
  /// Objective on the primal factors, entry 0 is the initialization.
  std::vector<double> loss_trace;
  /// Same objective with B_k replaced by the PARAFAC2-feasible auxiliary Y_{B_k}.
  std::vector<double> aux_loss_trace;
  int n_outer = 0;
  ExitReason exit_reason = ExitReason::max_iter;
  bool feasible = false;
  ConstraintReport constraint;
  int monotonicity_violations = 0;
  double wall_time = 0.0;

  double final_loss() const { return loss_trace.back(); }
};

}  // namespace tparafac2
