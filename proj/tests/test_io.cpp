#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "support.hpp"

using namespace testing_support;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("tparafac2_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<unsigned char> bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Io, SlicesRoundTripRagged) {
  TempDir tmp;
  std::mt19937_64 rng(1);
  tp::DimSpec d;
  d.I = 4;
  d.K = 3;
  d.J = {2, 5, 3};
  const auto x = random_stack(rng, d);
  tp::io::write_slices(tmp.path(), x, {{"seed", 7}});
  const auto y = tp::io::read_slices(tmp.path());
  ASSERT_EQ(y.dims(), d);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(x[k] == y[k]);
  EXPECT_EQ(tp::io::read_kind(tmp.path()), "slices");
}

TEST(Io, MaskAndFactorsRoundTrip) {
  TempDir tmp;
  std::mt19937_64 rng(2);
  const auto d = tp::DimSpec::uniform(5, 4, 3);
  const auto w = random_mask(rng, d, 0.5);
  tp::io::write_mask(tmp.path() / "mask", w);
  const auto w2 = tp::io::read_mask(tmp.path() / "mask");
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(w[k] == w2[k]);
  const auto f = random_factors(rng, d, 2);
  tp::io::write_factors(tmp.path() / "f", f);
  const auto g = tp::io::read_factors(tmp.path() / "f");
  EXPECT_TRUE(f.A == g.A && f.C == g.C);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(f.B[k] == g.B[k]);
  EXPECT_EQ(tp::io::read_kind(tmp.path() / "f"), "factors");
}

TEST(Io, LittleEndianRowMajorLayout) {
  TempDir tmp;
  SliceMatrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  tp::io::write_slices(tmp.path(), tp::SliceStack({m}));
  const auto b = bytes(tmp.path() / "slice_000.bin");
  ASSERT_EQ(b.size(), 48u);
  for (int e = 0; e < 6; ++e) {
    std::uint64_t bits = 0;
    for (int t = 0; t < 8; ++t) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(8 * e + t)]) << (8 * t);
    double v;
    std::memcpy(&v, &bits, 8);
    EXPECT_EQ(v, static_cast<double>(e + 1));
  }
}

TEST(Io, CorruptBundlesRejected) {
  TempDir tmp;
  std::mt19937_64 rng(3);
  const auto x = random_stack(rng, tp::DimSpec::uniform(3, 2, 2));
  tp::io::write_slices(tmp.path(), x);
  fs::resize_file(tmp.path() / "slice_001.bin", 40);
  EXPECT_THROW(tp::io::read_slices(tmp.path()), tp::IoError);
  tp::io::write_slices(tmp.path(), x);
  {
    std::ofstream out(tmp.path() / "slice_000.bin", std::ios::app | std::ios::binary);
    out.put('x');
  }
  EXPECT_THROW(tp::io::read_slices(tmp.path()), tp::IoError);
  EXPECT_THROW(tp::io::read_slices(tmp.path() / "missing"), tp::IoError);
  tp::io::write_slices(tmp.path(), x);
  {
    std::ofstream out(tmp.path() / "manifest.json");
    out << R"({"I": 3, "K": 2, "J": [2, 2], "dtype": "f32", "kind": "slices"})";
  }
  EXPECT_ANY_THROW(tp::io::read_slices(tmp.path()));
  {
    std::ofstream out(tmp.path() / "manifest.json");
    out << "{ not json";
  }
  EXPECT_ANY_THROW(tp::io::read_slices(tmp.path()));
}

TEST(Io, ConfigJson) {
  tp::SolverConfig c;
  c.R = 4;
  c.lambda_A = 2.5;
  c.lambda_B = 100.0;
  c.max_outer = 77;
  c.seed = 123456789012345ull;
  const auto j = tp::io::config_to_json(c);
  for (const char* key : {"R", "lambda_A", "lambda_B", "lambda_D", "nonneg_C", "eps_abs", "eps_rel", "eps_feas",
                          "inner_tol", "max_outer", "max_inner", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  const auto back = tp::io::config_from_json(j);
  EXPECT_EQ(back.R, 4);
  EXPECT_EQ(back.lambda_A, 2.5);
  EXPECT_EQ(back.lambda_B, 100.0);
  EXPECT_EQ(back.max_outer, 77);
  EXPECT_EQ(back.seed, c.seed);

  const auto partial = tp::io::config_from_json(tp::io::json{{"lambda_D", 3.0}}, c);
  EXPECT_EQ(partial.lambda_D, 3.0);
  EXPECT_EQ(partial.R, 4);

  EXPECT_THROW(tp::io::config_from_json(tp::io::json{{"lamda_A", 1.0}}), tp::InvalidInput);
  EXPECT_THROW(tp::io::config_from_json(tp::io::json{{"R", "three"}}), tp::InvalidInput);
  EXPECT_THROW(tp::io::config_from_json(tp::io::json{{"R", 0}}), tp::InvalidInput);
  EXPECT_THROW(tp::io::config_from_json(tp::io::json::array()), tp::InvalidInput);
}

TEST(Io, ReportJson) {
  tp::FitReport r;
  r.loss_trace = {3.0, 2.0};
  r.aux_loss_trace = {3.0, 2.5};
  r.n_outer = 1;
  r.exit_reason = tp::ExitReason::rel_tol;
  r.feasible = true;
  const auto j = tp::io::report_to_json(r);
  EXPECT_EQ(j["exit_reason"], "rel_tol");
  EXPECT_EQ(j["loss_trace"].size(), 2u);
  EXPECT_TRUE(j["feasible"].get<bool>());
}
