#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "support.hpp"

using namespace testing_support;

namespace {

tp::Parafac2Factors permute_columns(const tp::Parafac2Factors& f, const std::vector<int>& perm) {
  Eigen::PermutationMatrix<Eigen::Dynamic> P(static_cast<Eigen::Index>(perm.size()));
  for (std::size_t r = 0; r < perm.size(); ++r) P.indices()(static_cast<Eigen::Index>(r)) = perm[r];
  tp::Parafac2Factors out{f.A * P, {}, f.C * P};
  for (const auto& b : f.B) out.B.push_back(b * P);
  return out;
}

double stack_rel_diff(const tp::SliceStack& a, const tp::SliceStack& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.K(); ++k) {
    num += (a[k] - b[k]).squaredNorm();
    den += b[k].squaredNorm();
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Fit, RecoversFeasibleTruth) {
  const auto gen = tp::generate_feasible(tp::DimSpec::uniform(30, 20, 10), 3, 11);
  tp::SolverConfig cfg;
  cfg.lambda_A = cfg.lambda_D = 1e-12;
  std::vector<tp::FitResult> runs;
  for (std::uint64_t s = 0; s < 5; ++s) runs.push_back(tp::fit(gen.data, cfg, tp::random_init(gen.data.dims(), 3, s)));
  const auto best = tp::best_run(runs);
  EXPECT_GE(tp::fms(runs[best].factors, gen.truth).total, 0.99);
}

TEST(Fit, HugeSmoothnessPenaltyFlattensB) {
  tp::ConceptSpec spec;
  spec.dims = tp::DimSpec::uniform(20, 16, 8);
  const auto gen = tp::generate(spec, 3);
  tp::SolverConfig cfg;
  cfg.lambda_A = cfg.lambda_D = 1.0;
  cfg.lambda_B = 1e12;
  cfg.max_outer = 500;
  const auto r = tp::fit(gen.data, cfg, tp::random_init(gen.data.dims(), 3, 1));
  for (std::size_t k = 1; k < r.factors.K(); ++k)
    EXPECT_LE((r.factors.B[k] - r.factors.B[k - 1]).norm() / r.factors.B[k].norm(), 1e-3);
}

TEST(Fit, RecordedTraceMatchesIndependentLoss) {
  tp::ConceptSpec spec;
  spec.dims = tp::DimSpec::uniform(20, 16, 8);
  const auto gen = tp::generate(spec, 4);
  const auto x = tp::add_noise(gen.data, 0.5, 5);
  tp::SolverConfig cfg;
  cfg.lambda_A = cfg.lambda_D = 0.5;
  cfg.lambda_B = 20.0;
  cfg.max_outer = 200;
  std::vector<double> recomputed;
  const auto r = tp::fit(x, cfg, tp::random_init(x.dims(), 3, 2),
                         [&](int, const tp::Parafac2Factors& f, double) { recomputed.push_back(tp::loss(f, x, cfg)); });
  ASSERT_EQ(recomputed.size() + 1, r.report.loss_trace.size());
  for (std::size_t n = 0; n < recomputed.size(); ++n)
    EXPECT_NEAR(recomputed[n], r.report.loss_trace[n + 1], 1e-9 * recomputed[n]);
  auto init = tp::random_init(x.dims(), 3, 2);
  init.C = init.C.cwiseMax(0.0);
  EXPECT_NEAR(tp::loss(init, x, cfg), r.report.loss_trace.front(), 1e-9 * r.report.loss_trace.front());
  EXPECT_NEAR(tp::loss(r.primal, x, cfg), r.report.final_loss(), 1e-12 * r.report.final_loss());
}

TEST(Fit, DeterministicAndSmoothingOffMeansRidgeModel) {
  const auto gen = tp::generate_feasible(tp::DimSpec::uniform(15, 10, 6), 2, 5);
  const auto x = tp::add_noise(gen.data, 0.2, 1);
  tp::SolverConfig cfg;
  cfg.R = 2;
  cfg.lambda_A = cfg.lambda_D = 0.3;
  cfg.max_outer = 100;
  const auto init = tp::random_init(x.dims(), 2, 9);
  const auto a = tp::fit(x, cfg, init);
  const auto b = tp::fit(x, cfg, init);
  EXPECT_EQ(a.report.loss_trace, b.report.loss_trace);
  EXPECT_TRUE(a.factors.A == b.factors.A);
  EXPECT_EQ(a.report.constraint.feasibility_gaps.B_vs_ZB, 0.0);
}

TEST(Fit, PermutedInitializationGivesSameModel) {
  const auto gen = tp::generate_feasible(tp::DimSpec::uniform(20, 12, 8), 3, 21);
  const auto x = tp::add_noise(gen.data, 0.1, 2);
  tp::SolverConfig cfg;
  const auto init = tp::random_init(x.dims(), 3, 5);
  const auto a = tp::fit(x, cfg, init);
  const auto b = tp::fit(x, cfg, permute_columns(init, {2, 0, 1}));
  ASSERT_TRUE(a.report.feasible && b.report.feasible);
  const double dl = std::abs(a.report.final_loss() - b.report.final_loss()) / a.report.final_loss();
  ASSERT_LE(dl, 1e-9);
  EXPECT_LE(stack_rel_diff(tp::reconstruct(a.factors), tp::reconstruct(b.factors)), 1e-6);
}

TEST(Fit, RaggedSlices) {
  std::mt19937_64 rng(6);
  tp::DimSpec d;
  d.I = 12;
  d.K = 4;
  d.J = {6, 8, 7, 9};
  auto truth = random_factors(rng, d, 2);
  truth.C = truth.C.cwiseAbs();
  const Matrix dB = gaussian(rng, 2, 2);
  for (std::size_t k = 0; k < d.K; ++k) truth.B[k] = random_orthonormal(rng, static_cast<Eigen::Index>(d.J[k]), 2) * dB;
  const auto x = tp::reconstruct(truth);
  tp::SolverConfig cfg;
  cfg.R = 2;
  cfg.lambda_A = cfg.lambda_D = 1e-12;
  std::vector<tp::FitResult> runs;
  for (std::uint64_t s = 0; s < 3; ++s) runs.push_back(tp::fit(x, cfg, tp::random_init(d, 2, s)));
  EXPECT_GE(tp::fms(runs[tp::best_run(runs)].factors, truth).total, 0.99);
  cfg.lambda_B = 1.0;
  EXPECT_THROW(tp::fit(x, cfg, tp::random_init(d, 2, 0)), tp::InvalidInput);
}

TEST(Fit, InvalidInputs) {
  const auto gen = tp::generate_feasible(tp::DimSpec::uniform(6, 3, 4), 2, 1);
  tp::SolverConfig cfg;
  cfg.R = 4;
  EXPECT_THROW(tp::fit(gen.data, cfg), tp::InvalidInput);
  cfg.R = 2;
  EXPECT_THROW(tp::fit(gen.data, cfg, tp::random_init(gen.data.dims(), 3, 0)), tp::InvalidInput);
  EXPECT_THROW(tp::fit(gen.data, cfg, tp::random_init(tp::DimSpec::uniform(6, 3, 5), 2, 0)), tp::InvalidInput);
  cfg.lambda_A = -1.0;
  EXPECT_THROW(tp::fit(gen.data, cfg), tp::InvalidInput);
}

TEST(Fit, FeasibleReportsImplyGapsAndConstraint) {
  tp::ConceptSpec spec;
  spec.dims = tp::DimSpec::uniform(20, 16, 8);
  int feasible = 0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto gen = tp::generate(spec, 100 + s);
    tp::SolverConfig cfg;
    cfg.lambda_A = cfg.lambda_D = s % 2 ? 1.0 : 0.0;
    cfg.lambda_B = s % 3 ? 10.0 * static_cast<double>(s) : 0.0;
    cfg.max_outer = 1500;
    const auto r = tp::fit(tp::add_noise(gen.data, 0.5, s), cfg, tp::random_init(gen.data.dims(), 3, s));
    if (!r.report.feasible) continue;
    ++feasible;
    EXPECT_LT(r.report.constraint.feasibility_gaps.max(), 1e-5);
    EXPECT_LE(tp::check_constraint(r.factors).max_crossprod_deviation, 1e-5);
    EXPECT_TRUE((r.factors.C.array() >= 0.0).all());
  }
  EXPECT_GT(feasible, 0);
}
