// tparafac2 command-line tool: generate, fit, benchmark, fms, inspect.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tparafac2/tparafac2.hpp"

namespace tp = tparafac2;
namespace ex = tparafac2::experiment;
namespace fs = std::filesystem;
using tp::io::json;

namespace {

enum Exit { ok = 0, io_failure = 1, no_feasible = 2, invalid_input = 3, numerical = 4 };

std::string num_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

tp::DimSpec parse_size(const std::string& s) {
  std::size_t I = 0, J = 0, K = 0;
  char x1 = 0, x2 = 0;
  std::istringstream in(s);
  if (!(in >> I >> x1 >> J >> x2 >> K) || x1 != 'x' || x2 != 'x' || !in.eof())
    throw tp::InvalidInput("size must look like IxJxK, got '" + s + "'");
  auto d = tp::DimSpec::uniform(I, J, K);
  d.validate();
  return d;
}

struct MaskRequest {
  tp::MaskKind kind;
  double fraction;
  std::string label() const { return tp::to_string(kind) + ":" + num_label(fraction); }
};

MaskRequest parse_mask_request(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw tp::InvalidInput("mask must look like kind:fraction, got '" + s + "'");
  MaskRequest r{tp::parse_mask_kind(s.substr(0, colon)), 0.0};
  try {
    std::size_t used = 0;
    r.fraction = std::stod(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw tp::InvalidInput("bad mask fraction in '" + s + "'");
  }
  return r;
}

std::string dataset_name(std::size_t d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "d%03zu", d);
  return buf;
}

std::string mask_dir_name(const MaskRequest& r, std::size_t m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%s_m%02zu", tp::to_string(r.kind).c_str(),
                num_label(r.fraction).c_str(), m);
  return buf;
}

json spec_json(const tp::ConceptSpec& s) {
  return json{{"n_concepts", s.n_concepts},
              {"I", s.dims.I},
              {"J", s.dims.J.front()},
              {"K", s.dims.K},
              {"overlap_keep_fraction", s.overlap_keep_fraction},
              {"drift_std", s.drift_std},
              {"transition_prob", s.transition_prob},
              {"strength_range", {s.strength_lo, s.strength_hi}},
              {"max_congruence", s.max_congruence},
              {"author_fraction", s.author_fraction},
              {"word_fraction", s.word_fraction},
              {"fade_steps", s.fade_steps}};
}

// ---------------------------------------------------------------------------
// Dataset construction shared by generate and benchmark.

struct DatasetPlan {
  std::size_t count = 1;
  tp::DimSpec dims = tp::DimSpec::uniform(50, 40, 15);
  int concepts = 3;
  bool feasible = false;  // P-feasible random truth instead of concept drift
  std::uint64_t seed = 0;
  std::vector<double> noise{0.0};
  std::vector<MaskRequest> masks;
  std::size_t masks_per_kind = 1;
  std::uint64_t mask_seed = 0;
};

struct BuiltDataset {
  std::string name;
  double noise = 0.0;
  std::uint64_t data_seed = 0, noise_seed = 0;
  tp::GeneratedData gen;
  tp::SliceStack noisy;
  struct Mask {
    std::string name, group;
    std::uint64_t seed;
    tp::MaskStack mask;
  };
  std::vector<Mask> masks;
};

tp::GeneratedData make_truth(const DatasetPlan& p, std::uint64_t seed) {
  if (p.feasible) return tp::generate_feasible(p.dims, p.concepts, seed);
  tp::ConceptSpec spec;
  spec.dims = p.dims;
  spec.n_concepts = p.concepts;
  return tp::generate(spec, seed);
}

std::vector<BuiltDataset> build_datasets(const DatasetPlan& p) {
  std::vector<BuiltDataset> out;
  for (std::size_t d = 0; d < p.count; ++d) {
    const auto data_seed = ex::derive_seed(p.seed, d);
    const auto gen = make_truth(p, data_seed);
    for (std::size_t e = 0; e < p.noise.size(); ++e) {
      BuiltDataset b;
      b.name = dataset_name(d);
      if (p.noise.size() > 1) b.name += "_eta" + num_label(p.noise[e]);
      b.noise = p.noise[e];
      b.data_seed = data_seed;
      b.noise_seed = ex::derive_seed(p.seed, d, 1, e);
      b.gen = gen;
      b.noisy = tp::add_noise(gen.data, p.noise[e], b.noise_seed);
      for (std::size_t q = 0; q < p.masks.size(); ++q)
        for (std::size_t m = 0; m < p.masks_per_kind; ++m) {
          const auto seed = ex::derive_seed(p.mask_seed, d, q, m);
          b.masks.push_back({mask_dir_name(p.masks[q], m), p.masks[q].label(), seed,
                             tp::make_mask(p.dims, p.masks[q].kind, p.masks[q].fraction, seed)});
        }
      out.push_back(std::move(b));
    }
  }
  return out;
}

json plan_json(const DatasetPlan& p) {
  json masks = json::array();
  for (const auto& m : p.masks) masks.push_back(m.label());
  json j{{"count", p.count},   {"size", {p.dims.I, p.dims.J.front(), p.dims.K}},
         {"concepts", p.concepts}, {"feasible", p.feasible},
         {"seed", p.seed},     {"noise", p.noise},
         {"masks", masks},     {"masks_per_kind", p.masks_per_kind},
         {"mask_seed", p.mask_seed}};
  if (!p.feasible) {
    tp::ConceptSpec spec;
    spec.dims = p.dims;
    spec.n_concepts = p.concepts;
    j["concept_spec"] = spec_json(spec);
  }
  return j;
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const DatasetPlan& plan, const fs::path& out) {
  const auto built = build_datasets(plan);
  json index = json::array();
  for (const auto& b : built) {
    const fs::path dir = out / b.name;
    const json meta{{"dataset", b.name}, {"data_seed", b.data_seed}, {"noise", b.noise}, {"noise_seed", b.noise_seed},
                    {"plan", plan_json(plan)}};
    tp::io::write_slices(dir / "data", b.noisy, meta);
    tp::io::write_factors(dir / "truth", b.gen.truth, meta);
    json masks = json::array();
    for (const auto& m : b.masks) {
      tp::io::write_mask(dir / "masks" / m.name, m.mask,
                         {{"dataset", b.name}, {"spec", m.group}, {"seed", m.seed}, {"missing", m.mask.missing_count()}});
      masks.push_back({{"name", m.name}, {"spec", m.group}, {"seed", m.seed}, {"missing", m.mask.missing_count()}});
    }
    index.push_back({{"name", b.name}, {"data_seed", b.data_seed}, {"noise", b.noise}, {"noise_seed", b.noise_seed},
                     {"masks", masks}});
  }
  tp::io::detail::write_json(out / "manifest.json", json{{"kind", "collection"}, {"plan", plan_json(plan)}, {"datasets", index}});
  std::cout << "wrote " << built.size() << " dataset bundle(s) to " << out.string() << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// fit

struct Solver {
  std::string method = "aoadmm", missing = "none";
  std::optional<fs::path> config;
  std::optional<int> R, max_outer;
  std::optional<double> lambda_A, lambda_B, lambda_D, lambda_B_ridge, eps_rel;

  ex::MethodSpec spec() const {
    ex::MethodSpec m;
    m.method = ex::parse_method(method);
    m.missing = ex::parse_missing(missing);
    m.name = method + "-" + missing;
    if (config) m.cfg = tp::io::read_config(*config);
    if (R) m.cfg.R = *R;
    if (max_outer) m.cfg.max_outer = *max_outer;
    if (lambda_A) m.cfg.lambda_A = *lambda_A;
    if (lambda_B) m.cfg.lambda_B = *lambda_B;
    if (lambda_D) m.cfg.lambda_D = *lambda_D;
    if (lambda_B_ridge) m.cfg.lambda_B_ridge = *lambda_B_ridge;
    if (eps_rel) m.cfg.eps_rel = *eps_rel;
    m.validate();
    return m;
  }
};

/// Accepts a slices bundle or a dataset directory holding data/ (and possibly truth/).
fs::path resolve_data(const fs::path& p) {
  if (fs::exists(p / "data" / "manifest.json")) return p / "data";
  return p;
}

int cmd_fit(const fs::path& data_path, const std::optional<fs::path>& mask_path,
            const std::optional<fs::path>& truth_path, const Solver& solver, int starts, std::uint64_t seed,
            const fs::path& out) {
  if (starts < 1) throw tp::InvalidInput("--starts must be at least 1");
  const auto x = tp::io::read_slices(resolve_data(data_path));
  std::optional<tp::MaskStack> mask;
  if (mask_path) mask = tp::io::read_mask(*mask_path);
  std::optional<tp::Parafac2Factors> truth;
  if (truth_path) truth = tp::io::read_factors(*truth_path);
  else if (fs::exists(data_path / "truth" / "manifest.json")) truth = tp::io::read_factors(data_path / "truth");

  auto m = solver.spec();
  m.cfg.seed = seed;
  const auto seeds = ex::init_seeds(seed, 0, 0, starts);
  const auto outcome = ex::run_starts(x, mask ? &*mask : nullptr, m, seeds, truth ? &*truth : nullptr);

  json runs = json::array(), timing = json::array();
  for (const auto& r : outcome.runs) {
    json j{{"seed", r.seed}};
    if (!r.result) {
      j["error"] = r.error;
    } else {
      auto rep = tp::io::report_to_json(r.result->report);
      rep.erase("wall_time");
      j["report"] = rep;
      j["degenerate"] = r.degenerate;
      if (r.score) j["fms"] = r.score->total;
      const auto& fr = r.result->report;
      timing.push_back({{"seed", r.seed},
                        {"method", m.name},
                        {"seconds", fr.wall_time},
                        {"seconds_per_iteration", fr.n_outer > 0 ? fr.wall_time / fr.n_outer : 0.0}});
    }
    runs.push_back(std::move(j));
  }
  json report{{"kind", "fit_report"},
              {"method", solver.method},
              {"missing", solver.missing},
              {"config", tp::io::config_to_json(m.cfg)},
              {"starts", starts},
              {"data", data_path.string()},
              {"mask", mask_path ? mask_path->string() : ""},
              {"runs", runs},
              {"status", outcome.status}};
  if (outcome.best) report["best"] = *outcome.best;
  fs::create_directories(out);
  tp::io::detail::write_json(out / "report.json", report);
  tp::io::detail::write_json(out / "timing.json", timing);
  if (!outcome.best) {
    std::cerr << "no feasible, non-degenerate run among " << starts << " start(s)\n";
    return no_feasible;
  }
  const auto& best = outcome.runs[*outcome.best];
  tp::io::write_factors(out / "factors", best.result->factors,
                        {{"method", solver.method},
                         {"missing", solver.missing},
                         {"config", tp::io::config_to_json(m.cfg)},
                         {"init_seed", best.seed},
                         {"start", *outcome.best}});
  std::cout << "best start " << *outcome.best << ": loss " << best.result->report.final_loss() << ", "
            << best.result->report.n_outer << " iterations";
  if (best.score) std::cout << ", FMS " << best.score->total;
  std::cout << '\n';
  return ok;
}

// ---------------------------------------------------------------------------
// benchmark

std::vector<ex::MethodSpec> expand_methods(const json& list) {
  if (!list.is_array() || list.empty()) throw tp::InvalidInput("grid: 'methods' must be a non-empty array");
  std::vector<ex::MethodSpec> out;
  for (const auto& e : list) {
    ex::MethodSpec base;
    base.method = ex::parse_method(e.at("method").get<std::string>());
    base.missing = ex::parse_missing(e.value("missing", std::string("none")));
    base.name = e.value("name", e.at("method").get<std::string>() + "-" + tp::experiment::to_string(base.missing));
    base.cfg = tp::io::config_from_json(e.value("config", json::object()), tp::SolverConfig{});
    // cartesian product over "sweep": {"key": [values...]}
    std::vector<std::pair<std::string, json>> combos{{"", json::object()}};
    const json sweep = e.value("sweep", json::object());
    for (auto it = sweep.begin(); it != sweep.end(); ++it) {
      const std::string key = it.key();
      const json& values = it.value();
      if (!values.is_array() || values.empty()) throw tp::InvalidInput("grid: sweep '" + key + "' needs a value list");
      std::vector<std::pair<std::string, json>> next;
      for (const auto& [label, overrides] : combos)
        for (const auto& v : values) {
          json o = overrides;
          o[key] = v;
          next.emplace_back(label + (label.empty() ? "" : ",") + key + "=" + v.dump(), o);
        }
      combos = std::move(next);
    }
    for (const auto& [label, overrides] : combos) {
      auto m = base;
      m.cfg = tp::io::config_from_json(overrides, base.cfg);
      if (!label.empty()) m.name += "[" + label + "]";
      m.validate();
      out.push_back(std::move(m));
    }
  }
  return out;
}

DatasetPlan plan_from_json(const json& g) {
  DatasetPlan p;
  const auto& d = g.at("datasets");
  p.count = d.value("count", std::size_t{5});
  p.dims = parse_size(d.value("size", std::string("50x40x15")));
  p.concepts = d.value("concepts", 3);
  p.feasible = d.value("feasible", false);
  p.seed = d.value("seed", std::uint64_t{0});
  if (d.contains("noise")) p.noise = d["noise"].is_array() ? d["noise"].get<std::vector<double>>()
                                                             : std::vector<double>{d["noise"].get<double>()};
  if (g.contains("masks")) {
    const auto& m = g["masks"];
    for (const auto& s : m.at("specs")) p.masks.push_back(parse_mask_request(s.get<std::string>()));
    p.masks_per_kind = m.value("per_spec", std::size_t{1});
    p.mask_seed = m.value("seed", std::uint64_t{0});
  }
  if (p.count < 1 || p.noise.empty() || p.masks_per_kind < 1) throw tp::InvalidInput("grid: empty dataset plan");
  return p;
}

int cmd_benchmark(const fs::path& grid_path, int parallel, const fs::path& out, bool quiet) {
  json g;
  try {
    g = tp::io::detail::read_json(grid_path);
    ex::Grid grid;
    const auto plan = plan_from_json(g);
    grid.methods = expand_methods(g.at("methods"));
    grid.starts = g.value("starts", 5);
    grid.init_seed = g.value("init_seed", std::uint64_t{0});
    grid.parallel = parallel;

    const auto built = build_datasets(plan);
    for (const auto& b : built) {
      grid.datasets.push_back({b.name, b.noisy, b.gen.truth});
      const std::string prefix = plan.noise.size() > 1 ? "eta=" + num_label(b.noise) + "/" : "";
      std::vector<ex::MaskEntry> masks;
      if (b.masks.empty()) masks.push_back({"full", prefix + "full", std::nullopt});
      for (const auto& m : b.masks) masks.push_back({m.name, prefix + m.group, m.mask});
      grid.masks.push_back(std::move(masks));
    }

    const auto res = ex::run_grid(grid, [&](std::size_t done, std::size_t total) {
      if (!quiet) std::fprintf(stderr, "\r%zu/%zu fits", done, total);
    });
    if (!quiet) std::fprintf(stderr, "\n");

    fs::create_directories(out);
    auto write = [&](const char* name, auto&& fn) {
      std::ofstream os(out / name);
      if (!os) throw tp::IoError("cannot open " + (out / name).string());
      fn(os);
    };
    write("results.csv", [&](std::ostream& os) { ex::write_csv(os, res.cells); });
    write("runs.csv", [&](std::ostream& os) { ex::write_csv(os, res.runs); });
    const auto summary = ex::summarize(res.cells);
    write("summary.csv", [&](std::ostream& os) { ex::write_summary_csv(os, summary); });
    json methods = json::array();
    for (const auto& m : grid.methods)
      methods.push_back({{"name", m.name},
                         {"method", ex::to_string(m.method)},
                         {"missing", ex::to_string(m.missing)},
                         {"config", tp::io::config_to_json(m.cfg)}});
    tp::io::detail::write_json(out / "manifest.json", json{{"kind", "benchmark"},
                                                           {"grid", g},
                                                           {"plan", plan_json(plan)},
                                                           {"methods", methods},
                                                           {"starts", grid.starts},
                                                           {"init_seed", grid.init_seed}});
    ex::write_summary_csv(std::cout, summary);
  } catch (const json::exception& e) {
    throw tp::InvalidInput(std::string("grid spec: ") + e.what());
  }
  return ok;
}

// ---------------------------------------------------------------------------
// fms and inspect

int cmd_fms(const fs::path& est, const fs::path& truth) {
  const auto rep = tp::fms(tp::io::read_factors(est), tp::io::read_factors(truth));
  json comps = json::array();
  for (const auto& c : rep.per_component) comps.push_back({{"A", c.A}, {"B", c.B}, {"C", c.C}, {"product", c.product()}});
  std::cout << json{{"fms", rep.total}, {"per_component", comps}, {"permutation", rep.permutation},
                    {"zero_norm_column", rep.zero_norm_column}}
                   .dump(2)
            << '\n';
  return ok;
}

int cmd_inspect(const fs::path& path) {
  const auto manifest = tp::io::detail::read_json(path / "manifest.json");
  const auto kind = manifest.value("kind", std::string());
  json info{{"kind", kind}, {"path", path.string()}};
  if (kind == "slices") {
    const auto x = tp::io::read_slices(path);
    info["dims"] = tp::io::detail::dims_json(x.dims());
    info["frobenius_norm"] = tp::frobenius_norm(x);
    info["finite"] = x.all_finite();
  } else if (kind == "mask") {
    const auto w = tp::io::read_mask(path);
    const auto d = w.dims();
    info["dims"] = tp::io::detail::dims_json(d);
    info["missing"] = w.missing_count();
    info["missing_fraction"] = static_cast<double>(w.missing_count()) / static_cast<double>(d.total());
    info["fittable"] = !w.empty_mode1_fiber().has_value();
  } else if (kind == "factors") {
    const auto f = tp::io::read_factors(path);
    info["dims"] = tp::io::detail::dims_json(f.dims());
    info["R"] = f.R();
    info["max_crossprod_deviation"] = tp::check_constraint(f).max_crossprod_deviation;
    info["degenerate"] = f.R() >= 2 && tp::detect_degenerate(f);
    info["C_nonnegative"] = (f.C.array() >= 0.0).all();
  } else if (kind == "collection" || kind == "benchmark") {
    info["summary"] = kind == "collection" ? manifest["datasets"].size() : manifest["methods"].size();
  } else {
    throw tp::InvalidInput("unknown bundle kind '" + kind + "' in " + path.string());
  }
  if (manifest.contains("meta")) info["meta"] = manifest["meta"];
  std::cout << info.dump(2) << '\n';
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PARAFAC2 / tPARAFAC2 fitting with AO-ADMM, missing-data handling and benchmarks"};
  app.require_subcommand(1);

  DatasetPlan plan;
  std::string size = "50x40x15";
  std::vector<std::string> mask_specs;
  fs::path gen_out = "datasets";
  double noise = 0.0;
  auto* gen = app.add_subcommand("generate", "write synthetic dataset, ground-truth and mask bundles");
  gen->add_option("--datasets", plan.count, "number of datasets")->check(CLI::PositiveNumber);
  gen->add_option("--size", size, "IxJxK");
  gen->add_option("--concepts", plan.concepts, "components / concepts")->check(CLI::PositiveNumber);
  gen->add_option("--seed", plan.seed, "base seed");
  gen->add_option("--noise", noise, "relative noise level eta")->check(CLI::NonNegativeNumber);
  gen->add_option("--mask", mask_specs, "kind:fraction, repeatable (random, fiber2, fiber3, mixed)");
  gen->add_option("--masks-per-kind", plan.masks_per_kind, "masks drawn per --mask entry")->check(CLI::PositiveNumber);
  gen->add_option("--mask-seed", plan.mask_seed, "base seed of the masks");
  gen->add_flag("--feasible", plan.feasible, "PARAFAC2-feasible random truth instead of evolving concepts");
  gen->add_option("--out", gen_out, "output directory");

  fs::path fit_data, fit_out = "fit";
  std::optional<fs::path> fit_mask, fit_truth;
  Solver solver;
  int starts = 5;
  std::uint64_t fit_seed = 0;
  auto* fit = app.add_subcommand("fit", "fit one dataset with several random starts");
  fit->add_option("--data", fit_data, "slices bundle or dataset directory")->required();
  fit->add_option("--mask", fit_mask, "mask bundle");
  fit->add_option("--truth", fit_truth, "ground-truth factor bundle for FMS");
  fit->add_option("--method", solver.method, "als | aoadmm | tparafac2");
  fit->add_option("--missing", solver.missing, "none | em | rw");
  fit->add_option("--config", solver.config, "solver config JSON");
  fit->add_option("--R", solver.R, "number of components");
  fit->add_option("--lambda-a", solver.lambda_A, "ridge on A");
  fit->add_option("--lambda-b", solver.lambda_B, "temporal smoothness on B_k");
  fit->add_option("--lambda-d", solver.lambda_D, "ridge on C");
  fit->add_option("--lambda-b-ridge", solver.lambda_B_ridge, "ridge on B_k");
  fit->add_option("--max-outer", solver.max_outer, "outer iteration cap");
  fit->add_option("--eps-rel", solver.eps_rel, "relative objective tolerance");
  fit->add_option("--starts", starts, "random initializations");
  fit->add_option("--seed", fit_seed, "base seed of the initializations");
  fit->add_option("--out", fit_out, "output directory");

  fs::path grid_path, bench_out = "benchmark";
  int parallel = 1;
  bool quiet = false;
  auto* bench = app.add_subcommand("benchmark", "run an experiment grid and write CSV tables");
  bench->add_option("--grid", grid_path, "grid spec JSON")->required();
  bench->add_option("--parallel", parallel, "concurrent fits")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "output directory");
  bench->add_flag("--quiet", quiet, "no progress output");

  fs::path est, truth;
  auto* fms = app.add_subcommand("fms", "factor match score between two factor bundles");
  fms->add_option("--est", est, "estimated factors")->required();
  fms->add_option("--truth", truth, "reference factors")->required();

  fs::path inspect_path;
  auto* inspect = app.add_subcommand("inspect", "summarize a bundle");
  inspect->add_option("path", inspect_path, "bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return invalid_input;
  }

  try {
    if (*gen) {
      plan.dims = parse_size(size);
      plan.noise = {noise};
      for (const auto& s : mask_specs) plan.masks.push_back(parse_mask_request(s));
      return cmd_generate(plan, gen_out);
    }
    if (*fit) return cmd_fit(fit_data, fit_mask, fit_truth, solver, starts, fit_seed, fit_out);
    if (*bench) return cmd_benchmark(grid_path, parallel, bench_out, quiet);
    if (*fms) return cmd_fms(est, truth);
    if (*inspect) return cmd_inspect(inspect_path);
  } catch (const tp::NoFeasibleRun& e) {
    std::cerr << "error: " << e.what() << '\n';
    return no_feasible;
  } catch (const tp::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return invalid_input;
  } catch (const tp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const tp::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return io_failure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return io_failure;
  }
  return ok;
}
