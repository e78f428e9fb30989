#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tparafac2/aoadmm.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// Copy of x with every missing entry replaced by the mean of the observed entries of
/// its frontal slice.
inline SliceStack impute_slice_means(const SliceStack& x, const MaskStack& w) {
  w.require_congruent(x);
  SliceStack out = x;
  for (std::size_t k = 0; k < x.K(); ++k) {
    const double n = w[k].sum();
    if (n == 0.0) throw InvalidInput("fit_em: frontal slice " + std::to_string(k) + " has no observed entries");
    const double mean = x[k].cwiseProduct(w[k]).sum() / n;
    out[k] = (w[k].array() == 0.0).select(mean, x[k]);
  }
  return out;
}

/// E-step: overwrite the missing entries of the working slices with the model estimate.
/// Observed entries are left untouched bit for bit.
inline void em_impute(SliceStack& working, const MaskStack& w, const Parafac2Factors& f) {
  for (std::size_t k = 0; k < working.K(); ++k) {
    if ((w[k].array() != 0.0).all()) continue;
    const SliceMatrix xhat = reconstruct_slice(f.A, f.C.row(static_cast<Eigen::Index>(k)).transpose(), f.B[k]);
    working[k] = (w[k].array() == 0.0).select(xhat, working[k]);
  }
}

struct EmFitResult : FitResult {
  SliceStack completed;  // working tensor after the last E-step
};

/// EM-imputation wrapper around the AO-ADMM solver: one outer AO pass on the completed
/// tensor, then an E-step, until the stopping conditions hold for the objective on the
/// observed entries.
inline EmFitResult fit_em(const SliceStack& x, const MaskStack& w, const SolverConfig& cfg,
                          const Parafac2Factors& init, const IterationObserver& observe = {}) {
  w.require_fittable(x);
  AoAdmmEngine engine(impute_slice_means(x, w), cfg, init);
  auto e_step = [&w](AoAdmmEngine& eng) {
    SliceStack& working = eng.data();
    em_impute(working, w, eng.primal());
  };
  EmFitResult out{detail::run_outer_loop(engine, &w, e_step, observe), {}};
  out.completed = engine.data();
  return out;
}

inline EmFitResult fit_em(const SliceStack& x, const MaskStack& w, const SolverConfig& cfg) {
  return fit_em(x, w, cfg, random_init(x.dims(), cfg.R, cfg.seed));
}

}  // namespace tparafac2
