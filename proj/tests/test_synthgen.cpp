#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "support.hpp"

using namespace testing_support;

namespace {

tp::ConceptSpec desk_spec() {
  tp::ConceptSpec s;
  s.dims = tp::DimSpec::uniform(50, 40, 15);
  return s;
}

double stack_diff(const tp::SliceStack& a, const tp::SliceStack& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.K(); ++k) s += (a[k] - b[k]).squaredNorm();
  return std::sqrt(s);
}

double max_congruence(const Matrix& C) {
  double worst = -1.0;
  for (Eigen::Index r = 0; r < C.cols(); ++r)
    for (Eigen::Index s = r + 1; s < C.cols(); ++s)
      worst = std::max(worst, C.col(r).dot(C.col(s)) / (C.col(r).norm() * C.col(s).norm()));
  return worst;
}

}  // namespace

TEST(Generate, DataIsExactReconstruction) {
  const auto g = tp::generate(tp::ConceptSpec{}, 1);
  EXPECT_EQ(g.data.dims(), tp::DimSpec::uniform(100, 80, 25));
  EXPECT_LE(stack_diff(tp::reconstruct(g.truth), g.data), 1e-12 * tp::frobenius_norm(g.data));
}

TEST(Generate, Deterministic) {
  const auto a = tp::generate(desk_spec(), 5);
  const auto b = tp::generate(desk_spec(), 5);
  const auto c = tp::generate(desk_spec(), 6);
  EXPECT_EQ(stack_diff(a.data, b.data), 0.0);
  EXPECT_GT(stack_diff(a.data, c.data), 0.0);
}

TEST(Generate, SharedWordsStayActive) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = tp::generate(tp::ConceptSpec{}, seed);
    const auto K = g.truth.K();
    for (int r = 0; r < 3; ++r) {
      const Vector first = g.truth.B.front().col(r), last = g.truth.B[K - 1].col(r);
      int initial = 0, kept = 0;
      for (Eigen::Index j = 0; j < first.size(); ++j) {
        if (first(j) == 0.0) continue;
        ++initial;
        kept += last(j) != 0.0;
      }
      ASSERT_GT(initial, 0);
      EXPECT_GE(static_cast<double>(kept), 0.3 * initial);
    }
  }
}

TEST(Generate, SupportsAndStrengths) {
  const auto g = tp::generate(tp::ConceptSpec{}, 3);
  for (int r = 0; r < 3; ++r) EXPECT_EQ((g.truth.A.col(r).array() != 0.0).count(), 20);
  EXPECT_EQ((g.truth.B.front().col(0).array() != 0.0).count(), 20);
  EXPECT_TRUE((g.truth.C.array() >= 1.0).all() && (g.truth.C.array() <= 15.0).all());
}

TEST(Generate, StrengthCongruenceBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_LE(max_congruence(tp::generate(desk_spec(), seed).truth.C), 0.8);
}

TEST(Generate, InvalidSpecs) {
  auto s = desk_spec();
  s.transition_prob = 1.5;
  EXPECT_THROW(tp::generate(s, 0), tp::InvalidInput);
  s = desk_spec();
  s.strength_lo = 20.0;
  EXPECT_THROW(tp::generate(s, 0), tp::InvalidInput);
  s = desk_spec();
  s.n_concepts = 60;
  EXPECT_THROW(tp::generate(s, 0), tp::InvalidInput);
  s = desk_spec();
  s.dims.J[3] = 41;
  EXPECT_THROW(tp::generate(s, 0), tp::InvalidInput);
}

TEST(GenerateFeasible, SatisfiesConstraint) {
  const auto g = tp::generate_feasible(tp::DimSpec::uniform(30, 20, 10), 3, 4);
  EXPECT_LE(tp::check_constraint(g.truth).max_crossprod_deviation, 1e-12);
  EXPECT_LE(stack_diff(tp::reconstruct(g.truth), g.data), 1e-12 * tp::frobenius_norm(g.data));
}

TEST(AddNoise, Identity) {
  const auto g = tp::generate(desk_spec(), 2);
  EXPECT_EQ(stack_diff(tp::add_noise(g.data, 0.0, 1), g.data), 0.0);
  const double xn = tp::frobenius_norm(g.data);
  for (double eta : {0.5, 0.75, 1.0, 1.5, 2.0})
    EXPECT_NEAR(stack_diff(tp::add_noise(g.data, eta, 9), g.data) / xn, eta, 1e-12);
  EXPECT_THROW(tp::add_noise(g.data, -0.1, 1), tp::InvalidInput);
  EXPECT_THROW(tp::add_noise(tp::SliceStack::zeros(tp::DimSpec::uniform(3, 3, 2)), 0.5, 1), tp::InvalidInput);
}

TEST(MakeMask, CountsAndKinds) {
  const auto full = tp::DimSpec::uniform(100, 80, 25);
  EXPECT_TRUE(tp::make_mask(full, tp::MaskKind::random, 0.0, 1).all_observed());
  EXPECT_EQ(tp::make_mask(full, tp::MaskKind::random, 0.25, 1).missing_count(), 50000u);

  const auto d = tp::DimSpec::uniform(50, 40, 15);
  const auto f2 = tp::make_mask(d, tp::MaskKind::fiber2, 0.10, 2);
  std::size_t fibers = 0;
  for (std::size_t k = 0; k < 15; ++k)
    for (Eigen::Index i = 0; i < 50; ++i) {
      const double obs = f2[k].row(i).sum();
      EXPECT_TRUE(obs == 0.0 || obs == 40.0);
      fibers += obs == 0.0;
    }
  EXPECT_EQ(fibers, 75u);
  EXPECT_EQ(f2.missing_count(), 75u * 40u);

  const auto f3 = tp::make_mask(d, tp::MaskKind::fiber3, 0.10, 3);
  for (Eigen::Index i = 0; i < 50; ++i)
    for (Eigen::Index j = 0; j < 40; ++j) {
      double obs = 0.0;
      for (std::size_t k = 0; k < 15; ++k) obs += f3[k](i, j);
      EXPECT_TRUE(obs == 0.0 || obs == 15.0);
    }
  EXPECT_EQ(f3.missing_count(), 200u * 15u);

  const auto mixed = tp::make_mask(d, tp::MaskKind::mixed, 0.4, 4);
  EXPECT_EQ(mixed.missing_count(), 12000u);
  std::size_t in_fibers = 0;
  for (std::size_t k = 0; k < 15; ++k)
    for (Eigen::Index i = 0; i < 50; ++i) in_fibers += mixed[k].row(i).sum() == 0.0 ? 40 : 0;
  EXPECT_GE(in_fibers, 6000u - 40u);
}

TEST(MakeMask, NeverEmptiesModeOneFibersOrSlices) {
  const auto d = tp::DimSpec::uniform(50, 40, 15);
  const tp::MaskKind kinds[] = {tp::MaskKind::random, tp::MaskKind::fiber2, tp::MaskKind::fiber3, tp::MaskKind::mixed};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto kind = kinds[seed % 4];
    const double frac = kind == tp::MaskKind::random || kind == tp::MaskKind::mixed ? 0.75 : 0.5;
    const auto w = tp::make_mask(d, kind, frac, seed);
    ASSERT_FALSE(w.empty_mode1_fiber().has_value()) << "seed " << seed;
    for (std::size_t k = 0; k < 15; ++k) ASSERT_GT(w[k].sum(), 0.0);
  }
}

TEST(MakeMask, DeterministicAndErrors) {
  const auto d = tp::DimSpec::uniform(20, 10, 5);
  const auto a = tp::make_mask(d, tp::MaskKind::mixed, 0.3, 7);
  const auto b = tp::make_mask(d, tp::MaskKind::mixed, 0.3, 7);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_TRUE(a[k] == b[k]);
  EXPECT_THROW(tp::make_mask(d, tp::MaskKind::random, 1.0, 0), tp::InvalidInput);
  EXPECT_THROW(tp::make_mask(d, tp::MaskKind::random, 0.99, 0), tp::InvalidInput);
  EXPECT_THROW(tp::make_mask(d, tp::MaskKind::fiber2, 0.99, 0), tp::InvalidInput);
  EXPECT_THROW(tp::parse_mask_kind("fiber4"), tp::InvalidInput);
  EXPECT_EQ(tp::parse_mask_kind(tp::to_string(tp::MaskKind::fiber3)), tp::MaskKind::fiber3);
}
