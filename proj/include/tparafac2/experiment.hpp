#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tparafac2/als.hpp"
#include "tparafac2/aoadmm.hpp"
#include "tparafac2/config.hpp"
#include "tparafac2/errors.hpp"
#include "tparafac2/eval.hpp"
#include "tparafac2/missing_em.hpp"
#include "tparafac2/missing_rw.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2::experiment {

enum class Method { als, aoadmm, tparafac2 };
enum class Missing { none, em, rw };

inline Method parse_method(const std::string& s) {
  if (s == "als") return Method::als;
  if (s == "aoadmm") return Method::aoadmm;
  if (s == "tparafac2") return Method::tparafac2;
  throw InvalidInput("unknown method '" + s + "' (expected als, aoadmm or tparafac2)");
}

inline Missing parse_missing(const std::string& s) {
  if (s == "none") return Missing::none;
  if (s == "em") return Missing::em;
  if (s == "rw") return Missing::rw;
  throw InvalidInput("unknown missing-data strategy '" + s + "' (expected none, em or rw)");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::als: return "als";
    case Method::aoadmm: return "aoadmm";
    case Method::tparafac2: return "tparafac2";
  }
  return "?";
}

inline std::string to_string(Missing m) {
  switch (m) {
    case Missing::none: return "none";
    case Missing::em: return "em";
    case Missing::rw: return "rw";
  }
  return "?";
}

/// SplitMix64 mixing of a base seed with a tuple of indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto v : {a, b, c}) h = mix(h ^ v);
  return h;
}

/// A fitting method: model family, missing-data strategy and solver settings. For als,
/// cfg.eps_rel is the convergence tolerance and cfg.max_outer the iteration cap.
struct MethodSpec {
  std::string name;
  Method method = Method::aoadmm;
  Missing missing = Missing::none;
  SolverConfig cfg;

  void validate() const {
    cfg.validate();
    if (method == Method::tparafac2)
      tparafac2::detail::require(cfg.lambda_B > 0.0, "method " + name + ": tparafac2 needs lambda_B > 0");
    else
      tparafac2::detail::require(cfg.lambda_B == 0.0, "method " + name + ": lambda_B is only meaningful for tparafac2");
    if (method == Method::als) tparafac2::detail::require(missing != Missing::rw, "method " + name + ": als supports none or em");
  }
};

/// Fits one start. A mask with missing entries requires the em or rw strategy.
inline FitResult run_single(const SliceStack& x, const MaskStack* mask, const MethodSpec& m,
                            const Parafac2Factors& init) {
  m.validate();
  if (m.missing == Missing::none && mask && !mask->all_observed())
    throw InvalidInput("method " + m.name + ": data has missing entries but the strategy is none");
  const MaskStack ones = mask ? MaskStack() : MaskStack::ones(x.dims());
  const MaskStack& w = mask ? *mask : ones;
  if (m.method == Method::als) {
    AlsConfig a;
    a.R = m.cfg.R;
    a.tol = m.cfg.eps_rel;
    a.max_iter = m.cfg.max_outer;
    a.nonneg_C = m.cfg.nonneg_C;
    a.seed = m.cfg.seed;
    return fit_als(x, a, m.missing == Missing::em ? &w : nullptr, init);
  }
  switch (m.missing) {
    case Missing::none: return fit(x, m.cfg, init);
    case Missing::em: return fit_em(x, w, m.cfg, init);
    case Missing::rw: return fit_rw(x, w, m.cfg, init);
  }
  throw InvalidInput("run_single: unreachable strategy");
}

/// The same random initializations for every method of a (dataset, mask) pair.
inline std::vector<std::uint64_t> init_seeds(std::uint64_t base, std::size_t dataset, std::size_t mask, int starts) {
  std::vector<std::uint64_t> out;
  for (int s = 0; s < starts; ++s) out.push_back(derive_seed(base, dataset, mask, static_cast<std::uint64_t>(s)));
  return out;
}

/// One start of one method; failed fits keep their error message and count as infeasible.
struct RunRecord {
  std::uint64_t seed = 0;
  std::optional<FitResult> result;
  std::string error;
  bool degenerate = false;
  std::optional<FmsReport> score;
};

struct StartsOutcome {
  std::vector<RunRecord> runs;
  std::optional<std::size_t> best;  // index into runs
  std::string status = "ok";
};

/// Lowest-loss feasible, non-degenerate run, or nullopt.
inline std::optional<std::size_t> select_best(const std::vector<RunRecord>& runs) {
  std::vector<FitResult> ok;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].result) {
      ok.push_back(*runs[i].result);
      where.push_back(i);
    }
  if (ok.empty()) return std::nullopt;
  try {
    return where[best_run(ok)];
  } catch (const NoFeasibleRun&) {
    return std::nullopt;
  }
}

inline RunRecord run_start(const SliceStack& x, const MaskStack* mask, const MethodSpec& m, std::uint64_t seed,
                           const Parafac2Factors* truth) {
  RunRecord rec;
  rec.seed = seed;
  try {
    rec.result = run_single(x, mask, m, random_init(x.dims(), m.cfg.R, seed));
    rec.degenerate = rec.result->factors.R() >= 2 && detect_degenerate(rec.result->factors);
    if (truth) rec.score = fms(rec.result->factors, *truth);
  } catch (const NumericalError& e) {
    rec.result.reset();
    rec.error = e.what();
  }
  return rec;
}

/// Multi-start fit with shared seeds; selection follows eval::best_run.
inline StartsOutcome run_starts(const SliceStack& x, const MaskStack* mask, const MethodSpec& m,
                                const std::vector<std::uint64_t>& seeds, const Parafac2Factors* truth = nullptr) {
  tparafac2::detail::require(!seeds.empty(), "run_starts: need at least one start");
  StartsOutcome out;
  for (auto s : seeds) out.runs.push_back(run_start(x, mask, m, s, truth));
  out.best = select_best(out.runs);
  if (!out.best) out.status = "no_feasible_run";
  return out;
}

struct Dataset {
  std::string name;
  SliceStack data;
  std::optional<Parafac2Factors> truth;
};

/// A mask for one dataset; group labels the mask family for the summary ("random:0.50").
struct MaskEntry {
  std::string name = "full";
  std::string group = "full";
  std::optional<MaskStack> mask;
};

struct Grid {
  std::vector<Dataset> datasets;
  std::vector<std::vector<MaskEntry>> masks;  // masks[d] for dataset d; empty means full data only
  std::vector<MethodSpec> methods;
  int starts = 5;
  std::uint64_t init_seed = 0;
  int parallel = 1;
};

/// One CSV row: a single start, or the selected run of a cell.
struct Row {
  std::string dataset, mask, group, method;
  std::uint64_t seed = 0;
  double loss = NAN, fms = NAN, fms_A = NAN, fms_B = NAN, fms_C = NAN;
  int iters = 0;
  double seconds = NAN;
  bool feasible = false, degenerate = false;
  std::string status = "ok";
};

struct GridResult {
  std::vector<Row> runs;   // every start, ordered by (dataset, mask, method, start)
  std::vector<Row> cells;  // selected run per (dataset, mask, method)
};

namespace detail {

inline Row make_row(const RunRecord& r) {
  Row row;
  row.seed = r.seed;
  if (!r.result) {
    row.status = "error: " + r.error;
    return row;
  }
  const auto& rep = r.result->report;
  row.loss = rep.final_loss();
  row.iters = rep.n_outer;
  row.seconds = rep.wall_time;
  row.feasible = rep.feasible;
  row.degenerate = r.degenerate;
  if (r.score) {
    row.fms = r.score->total;
    double a = 0, b = 0, c = 0;
    for (const auto& s : r.score->per_component) {
      a += s.A;
      b += s.B;
      c += s.C;
    }
    const double n = static_cast<double>(r.score->per_component.size());
    row.fms_A = a / n;
    row.fms_B = b / n;
    row.fms_C = c / n;
  }
  if (!rep.feasible) row.status = "infeasible";
  else if (r.degenerate) row.status = "degenerate";
  return row;
}

}  // namespace detail

using Progress = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (dataset, mask, method, start) unit on a pool of grid.parallel workers.
/// Each unit is a sequential fit, so results do not depend on the worker count.
inline GridResult run_grid(const Grid& grid, const Progress& progress = {}) {
  tparafac2::detail::require(grid.starts >= 1 && grid.parallel >= 1, "run_grid: starts and parallel must be positive");
  tparafac2::detail::require(grid.masks.empty() || grid.masks.size() == grid.datasets.size(),
                  "run_grid: masks must be given per dataset");
  for (const auto& m : grid.methods) m.validate();

  struct Cell {
    std::size_t d, m, method;
  };
  const MaskEntry full;
  auto masks_of = [&](std::size_t d) -> std::vector<const MaskEntry*> {
    std::vector<const MaskEntry*> v;
    if (grid.masks.empty() || grid.masks[d].empty()) v.push_back(&full);
    else
      for (const auto& e : grid.masks[d]) v.push_back(&e);
    return v;
  };
  std::vector<Cell> cells;
  for (std::size_t d = 0; d < grid.datasets.size(); ++d)
    for (std::size_t m = 0; m < masks_of(d).size(); ++m)
      for (std::size_t q = 0; q < grid.methods.size(); ++q) cells.push_back({d, m, q});

  const auto S = static_cast<std::size_t>(grid.starts);
  const std::size_t units = cells.size() * S;
  std::vector<RunRecord> records(units);
  std::vector<std::string> cell_error(cells.size());
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t u = next.fetch_add(1);
      if (u >= units) return;
      const auto& c = cells[u / S];
      const auto s = u % S;
      const auto& ds = grid.datasets[c.d];
      const MaskEntry* me = masks_of(c.d)[c.m];
      const auto seed = init_seeds(grid.init_seed, c.d, c.m, grid.starts)[s];
      try {
        records[u] = run_start(ds.data, me->mask ? &*me->mask : nullptr, grid.methods[c.method], seed,
                               ds.truth ? &*ds.truth : nullptr);
      } catch (const std::exception& e) {
        records[u].seed = seed;
        records[u].error = e.what();
      }
      const auto n = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(n, units);
      }
    }
  };
  const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(grid.parallel), std::max<std::size_t>(units, 1));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  GridResult out;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& c = cells[ci];
    const MaskEntry* me = masks_of(c.d)[c.m];
    auto label = [&](Row r) {
      r.dataset = grid.datasets[c.d].name;
      r.mask = me->name;
      r.group = me->group;
      r.method = grid.methods[c.method].name;
      return r;
    };
    std::vector<RunRecord> cell_runs(records.begin() + static_cast<std::ptrdiff_t>(ci * S),
                                     records.begin() + static_cast<std::ptrdiff_t>((ci + 1) * S));
    for (const auto& r : cell_runs) out.runs.push_back(label(detail::make_row(r)));
    const auto best = select_best(cell_runs);
    if (best) {
      out.cells.push_back(label(detail::make_row(cell_runs[*best])));
    } else {
      Row r;
      r.status = "no_feasible_run";
      out.cells.push_back(label(r));
    }
  }
  return out;
}

inline std::string csv_header() {
  return "dataset,mask,method,seed,loss,fms,fms_A,fms_B,fms_C,iters,seconds,feasible,degenerate,status";
}

namespace detail {

inline std::string num(double v, const char* fmt = "%.10g") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

}  // namespace detail

inline void write_csv(std::ostream& os, const std::vector<Row>& rows) {
  os << csv_header() << '\n';
  for (const auto& r : rows) {
    os << detail::csv_field(r.dataset) << ',' << detail::csv_field(r.mask) << ',' << detail::csv_field(r.method) << ','
       << r.seed << ',' << detail::num(r.loss) << ',' << detail::num(r.fms) << ',' << detail::num(r.fms_A) << ','
       << detail::num(r.fms_B) << ',' << detail::num(r.fms_C) << ',' << r.iters << ','
       << detail::num(r.seconds, "%.6f") << ',' << (r.feasible ? 1 : 0) << ',' << (r.degenerate ? 1 : 0) << ','
       << detail::csv_field(r.status) << '\n';
  }
}

inline double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double a) { return std::isnan(a); }), v.end());
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SummaryRow {
  std::string group, method;
  std::size_t cells = 0, failed = 0;
  double median_fms = NAN, median_seconds = NAN;
};

/// Median FMS and wall time of the selected runs per (mask family, method), in first-seen order.
inline std::vector<SummaryRow> summarize(const std::vector<Row>& cells) {
  std::vector<SummaryRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> f, t;
  for (const auto& r : cells) {
    auto key = std::make_pair(r.group, r.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      out.push_back({r.group, r.method});
      f.emplace_back();
      t.emplace_back();
    }
    auto& s = out[it->second];
    ++s.cells;
    if (r.status != "ok") ++s.failed;
    f[it->second].push_back(r.fms);
    t[it->second].push_back(r.seconds);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].median_fms = median(f[i]);
    out[i].median_seconds = median(t[i]);
  }
  return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "mask,method,cells,failed,median_fms,median_seconds\n";
  for (const auto& r : rows)
    os << detail::csv_field(r.group) << ',' << detail::csv_field(r.method) << ',' << r.cells << ',' << r.failed << ','
       << detail::num(r.median_fms) << ',' << detail::num(r.median_seconds, "%.6f") << '\n';
}

}  // namespace tparafac2::experiment
