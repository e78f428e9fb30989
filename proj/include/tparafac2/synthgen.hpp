#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tparafac2/errors.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2 {

/// Parameters of the evolving-concepts generator (authors x words x time).
struct ConceptSpec {
  int n_concepts = 3;
  DimSpec dims = DimSpec::uniform(100, 80, 25);
  double overlap_keep_fraction = 0.3;  // share of each word set active at every time step
  double drift_std = 0.1;
  double transition_prob = 0.3;
  double strength_lo = 1.0;
  double strength_hi = 15.0;
  double max_congruence = 0.8;
  double author_fraction = 0.2;  // author support size as a fraction of I
  double word_fraction = 0.25;   // initial/final word set size as a fraction of J
  int fade_steps = 3;            // steps a fading word takes to reach zero
  int max_retries = 10000;

  void validate() const {
    dims.validate();
    detail::require(!dims.ragged(), "ConceptSpec: the generator needs equal J_k");
    detail::require(n_concepts >= 1, "ConceptSpec: need at least one concept");
    const auto n = static_cast<std::size_t>(n_concepts);
    detail::require(n <= dims.I && n <= dims.J.front() && n <= dims.K, "ConceptSpec: more concepts than a dimension");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    detail::require(prob(overlap_keep_fraction) && prob(transition_prob) && prob(author_fraction) &&
                        prob(word_fraction) && prob(max_congruence),
                    "ConceptSpec: probabilities and fractions must lie in [0, 1]");
    detail::require(strength_lo <= strength_hi && drift_std >= 0.0, "ConceptSpec: ranges must be ordered");
    detail::require(fade_steps >= 1 && max_retries >= 1, "ConceptSpec: fade_steps and max_retries must be positive");
  }
};

struct GeneratedData {
  SliceStack data;
  Parafac2Factors truth;
};

namespace detail {

inline std::vector<std::size_t> random_subset(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

inline double max_column_congruence(const Matrix& M) {
  double worst = -1.0;
  for (Eigen::Index r = 0; r < M.cols(); ++r)
    for (Eigen::Index s = r + 1; s < M.cols(); ++s)
      worst = std::max(worst, M.col(r).dot(M.col(s)) / (M.col(r).norm() * M.col(s).norm()));
  return worst;
}

inline std::size_t at_least_one(double v) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(v))); }

}  // namespace detail

/// Concept strengths: K x n draws from U(lo, hi), redrawn until every pair of columns has
/// congruence (cosine) at most max_congruence.
inline Matrix draw_strengths(const ConceptSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(spec.strength_lo, spec.strength_hi);
  const auto K = static_cast<Eigen::Index>(spec.dims.K);
  Matrix C(K, spec.n_concepts);
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    for (Eigen::Index k = 0; k < K; ++k)
      for (int r = 0; r < spec.n_concepts; ++r) C(k, r) = unif(rng);
    if (spec.n_concepts < 2 || detail::max_column_congruence(C) <= spec.max_congruence) return C;
  }
  throw InvalidInput("generate: no strength matrix met the congruence bound within max_retries draws");
}

/// Evolving-concepts dataset: sparse author loadings, word patterns drifting from an
/// initial to a final word set, and screened strengths. X_k = A D_k B_k^T exactly.
inline GeneratedData generate(const ConceptSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::normal_distribution<double> drift(0.0, spec.drift_std);
  std::uniform_real_distribution<double> unif01(0.0, 1.0);

  const std::size_t I = spec.dims.I, J = spec.dims.J.front(), K = spec.dims.K;
  const int n = spec.n_concepts;

  Parafac2Factors truth;
  truth.A = Matrix::Zero(static_cast<Eigen::Index>(I), n);
  const std::size_t authors = std::min(I, detail::at_least_one(spec.author_fraction * static_cast<double>(I)));
  for (int r = 0; r < n; ++r)
    for (auto i : detail::random_subset(I, authors, rng)) truth.A(static_cast<Eigen::Index>(i), r) = std_normal(rng);

  const std::size_t words = std::min(J, detail::at_least_one(spec.word_fraction * static_cast<double>(J)));
  const auto shared = std::min(words, static_cast<std::size_t>(std::ceil(spec.overlap_keep_fraction * words - 1e-9)));
  const std::size_t exclusive = words - shared;
  detail::require(shared + 2 * exclusive <= J, "generate: initial and final word sets do not fit in J");

  truth.B.assign(K, Matrix::Zero(static_cast<Eigen::Index>(J), n));
  std::uniform_int_distribution<std::size_t> transition_pick(K / 4, std::max(K / 4, (3 * K) / 4));
  std::uniform_int_distribution<int> event_kind(0, 2);

  enum class Word { inactive, active, fading };
  for (int r = 0; r < n; ++r) {
    const auto perm = detail::random_subset(J, shared + 2 * exclusive, rng);
    std::vector<std::size_t> initial_only(perm.begin() + static_cast<long>(shared),
                                          perm.begin() + static_cast<long>(shared + exclusive));
    std::vector<std::size_t> final_only(perm.begin() + static_cast<long>(shared + exclusive), perm.end());

    Vector b = Vector::Zero(static_cast<Eigen::Index>(J));
    std::vector<Word> state(J, Word::inactive);
    std::vector<double> fade_from(J, 0.0);
    std::vector<int> fade_left(J, 0);
    for (std::size_t w = 0; w < shared + exclusive; ++w) {
      b(static_cast<Eigen::Index>(perm[w])) = std_normal(rng);
      state[perm[w]] = Word::active;
    }
    truth.B[0].col(r) = b;

    const std::size_t transition = transition_pick(rng);
    for (std::size_t k = 1; k < K; ++k) {
      for (std::size_t w = 0; w < J; ++w) {
        const auto ww = static_cast<Eigen::Index>(w);
        if (state[w] == Word::active) {
          b(ww) += drift(rng);
        } else if (state[w] == Word::fading) {
          --fade_left[w];
          b(ww) = fade_from[w] * fade_left[w] / spec.fade_steps;
          if (fade_left[w] == 0) state[w] = Word::inactive;
        }
      }
      if (k >= transition && unif01(rng) < spec.transition_prob) {
        const int kind = event_kind(rng);  // 0: fade out, 1: fade in, 2: both
        if (kind != 1) {
          std::vector<std::size_t> cand;
          for (auto w : initial_only)
            if (state[w] == Word::active) cand.push_back(w);
          if (!cand.empty()) {
            const auto w = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
            state[w] = Word::fading;
            fade_from[w] = b(static_cast<Eigen::Index>(w));
            fade_left[w] = spec.fade_steps;
          }
        }
        if (kind != 0) {
          std::vector<std::size_t> cand;
          for (auto w : final_only)
            if (state[w] == Word::inactive && b(static_cast<Eigen::Index>(w)) == 0.0) cand.push_back(w);
          if (!cand.empty()) {
            const auto w = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)];
            state[w] = Word::active;
            b(static_cast<Eigen::Index>(w)) = drift(rng);
          }
        }
      }
      truth.B[k].col(r) = b;
    }
  }

  truth.C = draw_strengths(spec, rng);
  return GeneratedData{reconstruct(truth), std::move(truth)};
}

/// Dataset whose ground truth satisfies the PARAFAC2 constraint exactly: B_k = P_k B
/// with random orthonormal P_k, Gaussian A and B, and strengths from U(1, 15).
inline GeneratedData generate_feasible(const DimSpec& dims, int R, std::uint64_t seed) {
  dims.validate();
  detail::require(R >= 1, "generate_feasible: R must be positive");
  for (auto j : dims.J) detail::require(static_cast<std::size_t>(R) <= j, "generate_feasible: R exceeds J_k");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std_normal(rng);
    return m;
  };
  Parafac2Factors truth;
  truth.A = gaussian(static_cast<Eigen::Index>(dims.I), R);
  const Matrix B = gaussian(R, R);
  for (auto j : dims.J) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(static_cast<Eigen::Index>(j), R));
    const Matrix P = qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(j), R);
    truth.B.push_back(P * B);
  }
  ConceptSpec strengths;
  strengths.n_concepts = R;
  strengths.dims = DimSpec::uniform(dims.I, R, dims.K);
  strengths.dims.J.assign(dims.K, static_cast<std::size_t>(R));
  truth.C = draw_strengths(strengths, rng);
  return GeneratedData{reconstruct(truth), std::move(truth)};
}

/// X + eta ||X|| Theta / ||Theta|| with Theta i.i.d. standard normal, so that the
/// relative noise norm is exactly eta.
inline SliceStack add_noise(const SliceStack& x, double eta, std::uint64_t seed) {
  detail::require(eta >= 0.0, "add_noise: eta must be non-negative");
  if (eta == 0.0) return x;
  const double xnorm = frobenius_norm(x);
  detail::require(xnorm > 0.0, "add_noise: zero-norm input with eta > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::vector<SliceMatrix> theta;
  for (std::size_t k = 0; k < x.K(); ++k) {
    SliceMatrix t(x[k].rows(), x[k].cols());
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = std_normal(rng);
    theta.push_back(std::move(t));
  }
  const double scale = eta * xnorm / frobenius_norm(SliceStack(theta));
  std::vector<SliceMatrix> out;
  for (std::size_t k = 0; k < x.K(); ++k) out.push_back(x[k] + scale * theta[k]);
  return SliceStack(std::move(out));
}

enum class MaskKind { random, fiber2, fiber3, mixed };

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "random") return MaskKind::random;
  if (s == "fiber2") return MaskKind::fiber2;
  if (s == "fiber3") return MaskKind::fiber3;
  if (s == "mixed") return MaskKind::mixed;
  throw InvalidInput("unknown mask kind '" + s + "' (expected random, fiber2, fiber3 or mixed)");
}

inline std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::random: return "random";
    case MaskKind::fiber2: return "fiber2";
    case MaskKind::fiber3: return "fiber3";
    case MaskKind::mixed: return "mixed";
  }
  return "unknown";
}

namespace detail {

/// Mutable mask plus per-mode-1-fiber observed counts.
class MaskBuilder {
 public:
  explicit MaskBuilder(const DimSpec& dims) : dims_(dims) {
    for (auto j : dims.J) {
      w_.push_back(SliceMatrix::Ones(static_cast<Eigen::Index>(dims.I), static_cast<Eigen::Index>(j)));
      rand_.push_back(SliceMatrix::Zero(static_cast<Eigen::Index>(dims.I), static_cast<Eigen::Index>(j)));
      col_obs_.emplace_back(j, dims.I);
    }
  }

  bool observed(std::size_t k, std::size_t i, std::size_t j) const { return w_[k](idx(i), idx(j)) != 0.0; }

  void hide(std::size_t k, std::size_t i, std::size_t j, bool random) {
    if (!observed(k, i, j)) return;
    w_[k](idx(i), idx(j)) = 0.0;
    if (random) rand_[k](idx(i), idx(j)) = 1.0;
    --col_obs_[k][j];
  }

  void reveal(std::size_t k, std::size_t i, std::size_t j) {
    w_[k](idx(i), idx(j)) = 1.0;
    rand_[k](idx(i), idx(j)) = 0.0;
    ++col_obs_[k][j];
  }

  /// Hides n uniformly chosen entries among those still observed.
  void hide_random(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < dims_.K; ++k)
      for (std::size_t i = 0; i < dims_.I; ++i)
        for (std::size_t j = 0; j < dims_.J[k]; ++j)
          if (observed(k, i, j)) pool.push_back(flat(k, i, j));
    detail::require(n <= pool.size(), "make_mask: missing budget exceeds available entries");
    for (std::size_t t = 0; t < n; ++t) {
      std::uniform_int_distribution<std::size_t> pick(t, pool.size() - 1);
      std::swap(pool[t], pool[pick(rng)]);
      const auto [k, i, j] = unflat(pool[t]);
      hide(k, i, j, true);
    }
  }

  /// Moves randomly hidden entries so every mode-1 fiber keeps an observed entry. Each
  /// restored entry is paired with a fresh random removal elsewhere, preserving the count.
  void repair(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick_flat(0, dims_.total() - 1);
    for (std::size_t k = 0; k < dims_.K; ++k)
      for (std::size_t j = 0; j < dims_.J[k]; ++j) {
        if (col_obs_[k][j] > 0) continue;
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < dims_.I; ++i)
          if (rand_[k](idx(i), idx(j)) != 0.0) cand.push_back(i);
        if (cand.empty()) throw InvalidInput("make_mask: mode-1 fiber emptied by structured removal");
        reveal(k, cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(rng)], j);
        for (;;) {
          const auto [kk, ii, jj] = unflat(pick_flat(rng));
          if (observed(kk, ii, jj) && col_obs_[kk][jj] >= 2) {
            hide(kk, ii, jj, true);
            break;
          }
        }
      }
  }

  MaskStack finish() const { return MaskStack(w_); }

 private:
  static Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

  std::size_t flat(std::size_t k, std::size_t i, std::size_t j) const {
    std::size_t off = 0;
    for (std::size_t q = 0; q < k; ++q) off += dims_.I * dims_.J[q];
    return off + i * dims_.J[k] + j;
  }

  std::tuple<std::size_t, std::size_t, std::size_t> unflat(std::size_t e) const {
    std::size_t k = 0;
    while (e >= dims_.I * dims_.J[k]) e -= dims_.I * dims_.J[k++];
    return {k, e / dims_.J[k], e % dims_.J[k]};
  }

  DimSpec dims_;
  std::vector<SliceMatrix> w_;
  std::vector<SliceMatrix> rand_;
  std::vector<std::vector<std::size_t>> col_obs_;
};

/// Picks n of the m units, at most cap per group (group_of maps unit -> group).
template <typename GroupOf>
std::vector<std::size_t> pick_units_capped(std::size_t m, std::size_t n, std::size_t groups, std::size_t cap,
                                           GroupOf group_of, std::mt19937_64& rng) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> used(groups, 0), out;
  for (auto u : order) {
    if (out.size() == n) break;
    auto& g = used[group_of(u)];
    if (g >= cap) continue;
    ++g;
    out.push_back(u);
  }
  return out;
}

}  // namespace detail

/// Binary observation mask with the requested fraction of missing entries.
///
/// random removes uniformly chosen entries; fiber2 removes whole mode-2 fibers (row i of
/// slice k); fiber3 removes whole mode-3 fibers (entry (i, j) in every slice); mixed takes
/// half the budget from mode-2 fibers and the rest at random. For the fiber kinds the
/// fraction counts fibers. No mode-1 fiber and no slice is ever left fully missing.
inline MaskStack make_mask(const DimSpec& dims, MaskKind kind, double fraction, std::uint64_t seed) {
  dims.validate();
  detail::require(fraction >= 0.0 && fraction < 1.0, "make_mask: fraction must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  detail::MaskBuilder mb(dims);
  const std::size_t I = dims.I, K = dims.K;
  std::size_t mode1_fibers = 0;
  for (auto j : dims.J) mode1_fibers += j;
  const std::size_t total = dims.total();

  auto hide_fiber2 = [&](std::size_t n_fibers) {
    detail::require(n_fibers <= K * (I - 1), "make_mask: too many mode-2 fibers; every slice must keep a row");
    for (auto u : detail::pick_units_capped(I * K, n_fibers, K, I - 1, [I](std::size_t u) { return u / I; }, rng)) {
      const std::size_t k = u / I, i = u % I;
      for (std::size_t j = 0; j < dims.J[k]; ++j) mb.hide(k, i, j, false);
    }
  };

  switch (kind) {
    case MaskKind::random: {
      const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
      detail::require(total - n >= mode1_fibers, "make_mask: fraction leaves fewer observed entries than mode-1 fibers");
      mb.hide_random(n, rng);
      mb.repair(rng);
      break;
    }
    case MaskKind::fiber2: {
      hide_fiber2(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(I * K))));
      break;
    }
    case MaskKind::fiber3: {
      detail::require(!dims.ragged(), "make_mask: mode-3 fibers need equal J_k");
      const std::size_t J = dims.J.front();
      const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(I * J)));
      detail::require(n <= J * (I - 1), "make_mask: too many mode-3 fibers; every column must keep a row");
      for (auto u : detail::pick_units_capped(I * J, n, J, I - 1, [J](std::size_t u) { return u % J; }, rng)) {
        const std::size_t i = u / J, j = u % J;
        for (std::size_t k = 0; k < K; ++k) mb.hide(k, i, j, false);
      }
      break;
    }
    case MaskKind::mixed: {
      detail::require(!dims.ragged(), "make_mask: mixed masks need equal J_k");
      const std::size_t J = dims.J.front();
      const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
      detail::require(total - n >= mode1_fibers, "make_mask: fraction leaves fewer observed entries than mode-1 fibers");
      const auto n_fibers = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(n) / static_cast<double>(J)));
      hide_fiber2(n_fibers);
      mb.hide_random(n - n_fibers * J, rng);
      mb.repair(rng);
      break;
    }
  }
  return mb.finish();
}

}  // namespace tparafac2
