#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"

using namespace testing_support;

TEST(Reconstruct, RankOneOuterProduct) {
  tp::Parafac2Factors f;
  f.A = Matrix::Ones(2, 1);
  f.B = {Matrix::Ones(2, 1)};
  f.C = Matrix::Constant(1, 1, 2.0);
  const auto x = tp::reconstruct(f);
  EXPECT_TRUE(x[0] == SliceMatrix::Constant(2, 2, 2.0));
}

TEST(Reconstruct, ZeroScalingRowGivesZeroSlice) {
  std::mt19937_64 rng(1);
  auto f = random_factors(rng, tp::DimSpec::uniform(3, 2, 2), 2);
  f.C.row(1).setZero();
  EXPECT_EQ(tp::reconstruct(f)[1].norm(), 0.0);
}

TEST(Reconstruct, MatchesTripleSumOracle) {
  std::mt19937_64 rng(2);
  const auto f = random_factors(rng, tp::DimSpec::uniform(3, 2, 2), 2);
  const auto x = tp::reconstruct(f);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double v = 0.0;
        for (int r = 0; r < 2; ++r) v += f.C(k, r) * f.A(i, r) * f.B[k](j, r);
        EXPECT_NEAR(x[k](i, j), v, 1e-14);
      }
}

TEST(Reconstruct, PermutationAndScalingInvariance) {
  std::mt19937_64 rng(3);
  const auto f = random_factors(rng, tp::DimSpec{5, 3, {4, 6, 5}}, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(3);
  p.indices() << 2, 0, 1;
  tp::Parafac2Factors g{f.A * p, {}, f.C * p};
  for (const auto& b : f.B) g.B.push_back(b * p);
  const Vector g1 = Vector::LinSpaced(3, 0.5, 2.0), g2 = Vector::LinSpaced(3, 3.0, -1.5);
  const Vector g3 = (g1.cwiseProduct(g2)).cwiseInverse();
  tp::Parafac2Factors h{f.A * g1.asDiagonal(), {}, f.C * g3.asDiagonal()};
  for (const auto& b : f.B) h.B.push_back(b * g2.asDiagonal());
  const auto x = tp::reconstruct(f), xp = tp::reconstruct(g), xs = tp::reconstruct(h);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LT(rel_diff(x[k], xp[k]), 1e-14);
    EXPECT_LT(rel_diff(x[k], xs[k]), 1e-14);
  }
}

TEST(Reconstruct, ShapeMismatchThrows) {
  std::mt19937_64 rng(4);
  auto f = random_factors(rng, tp::DimSpec::uniform(3, 2, 2), 2);
  f.C = Matrix::Ones(2, 3);
  EXPECT_THROW(tp::reconstruct(f), tp::InvalidInput);
}

TEST(Loss, ExactFactorsGiveZero) {
  std::mt19937_64 rng(5);
  const auto f = random_factors(rng, tp::DimSpec::uniform(4, 3, 3), 2);
  EXPECT_NEAR(tp::loss(f, tp::reconstruct(f), tp::SolverConfig{}), 0.0, 1e-20);
}

TEST(Loss, ZeroFactorsGiveDataNorm) {
  std::mt19937_64 rng(6);
  const auto d = tp::DimSpec::uniform(4, 3, 3);
  const auto x = random_stack(rng, d);
  auto f = random_factors(rng, d, 2);
  f.A.setZero();
  for (auto& b : f.B) b.setZero();
  f.C.setZero();
  EXPECT_NEAR(tp::loss(f, x, tp::SolverConfig{}), std::pow(tp::frobenius_norm(x), 2), 1e-12);
}

TEST(Loss, MatchesTermSumOracle) {
  std::mt19937_64 rng(7);
  const auto d = tp::DimSpec::uniform(4, 3, 4);
  const auto x = random_stack(rng, d);
  const auto f = random_factors(rng, d, 2);
  const auto w = random_mask(rng, d, 0.6);
  tp::SolverConfig cfg;
  cfg.R = 2;
  cfg.lambda_A = 0.3;
  cfg.lambda_D = 0.7;
  cfg.lambda_B = 1.9;
  cfg.lambda_B_ridge = 0.25;
  const double fid = std::pow(tp::frobenius_norm(tp::hadamard_residual(x, tp::reconstruct(f), &w)), 2);
  double temporal = 0.0, bsq = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    bsq += f.B[k].squaredNorm();
    if (k > 0) temporal += (f.B[k] - f.B[k - 1]).squaredNorm();
  }
  const double oracle =
      fid + 0.3 * f.A.squaredNorm() + 0.7 * f.C.squaredNorm() + 1.9 * temporal + 0.25 * bsq;
  EXPECT_NEAR(tp::loss(f, x, cfg, &w), oracle, 1e-12 * oracle);
}

TEST(Loss, OnesMaskEqualsNoMask) {
  std::mt19937_64 rng(8);
  const auto d = tp::DimSpec::uniform(5, 4, 3);
  const auto x = random_stack(rng, d);
  const auto f = random_factors(rng, d, 2);
  const auto ones = tp::MaskStack::ones(d);
  EXPECT_EQ(tp::loss(f, x, tp::SolverConfig{}, &ones), tp::loss(f, x, tp::SolverConfig{}));
}

TEST(Loss, Errors) {
  std::mt19937_64 rng(9);
  const tp::DimSpec d{3, 2, {2, 3}};
  const auto x = random_stack(rng, d);
  const auto f = random_factors(rng, d, 2);
  tp::SolverConfig cfg;
  cfg.lambda_B = 1.0;
  EXPECT_THROW(tp::loss(f, x, cfg), tp::InvalidInput);
  cfg.lambda_B = 0.0;
  cfg.lambda_A = -1.0;
  EXPECT_THROW(tp::loss(f, x, cfg), tp::InvalidInput);
}

namespace {

double pairwise_deviation(const std::vector<Matrix>& B) {
  const double ref = (B[0].transpose() * B[0]).norm();
  double worst = 0.0;
  for (std::size_t a = 0; a < B.size(); ++a)
    for (std::size_t b = a + 1; b < B.size(); ++b)
      worst = std::max(worst, (B[a].transpose() * B[a] - B[b].transpose() * B[b]).norm());
  return worst / ref;
}

}  // namespace

TEST(CheckConstraint, FeasibleByConstruction) {
  std::mt19937_64 rng(10);
  const Matrix B = gaussian(rng, 3, 3);
  tp::Parafac2Factors f{gaussian(rng, 4, 3), {}, gaussian(rng, 5, 3)};
  for (int k = 0; k < 5; ++k) f.B.push_back(random_orthonormal(rng, 7 + k, 3) * B);
  EXPECT_LE(tp::check_constraint(f).max_crossprod_deviation, 1e-12);
}

TEST(CheckConstraint, SingleSliceIsZero) {
  std::mt19937_64 rng(11);
  EXPECT_EQ(tp::check_constraint(random_factors(rng, tp::DimSpec::uniform(3, 4, 1), 2)).max_crossprod_deviation,
            0.0);
}

TEST(CheckConstraint, PerturbationMatchesPairwiseOracle) {
  std::mt19937_64 rng(12);
  for (int K : {2, 3, 6}) {
    const Matrix B = gaussian(rng, 2, 2);
    std::vector<Matrix> Bs;
    for (int k = 0; k < K; ++k) Bs.push_back(random_orthonormal(rng, 5, 2) * B);
    Bs[static_cast<std::size_t>(K - 1)](1, 0) += 1e-3;
    const double ours = tp::crossprod_deviation(Bs);
    const double pair = pairwise_deviation(Bs);
    EXPECT_GT(ours, 0.0);
    // a single perturbed slice sits (K-1)/K of the pairwise distance from the mean
    EXPECT_NEAR(ours, pair * (K - 1) / K, 1e-9 * pair);
  }
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r2(100 + seed);
    std::vector<Matrix> Bs;
    for (int k = 0; k < 4; ++k) Bs.push_back(gaussian(r2, 6, 3));
    const double ours = tp::crossprod_deviation(Bs), pair = pairwise_deviation(Bs);
    EXPECT_LE(ours, pair * (1 + 1e-12));
    EXPECT_GE(ours, pair / 2 * (1 - 1e-12));
  }
}
