#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tparafac2/config.hpp"
#include "tparafac2/errors.hpp"
#include "tparafac2/model.hpp"
#include "tparafac2/tensor.hpp"

namespace tparafac2::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline std::string indexed(const std::string& stem, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03zu.bin", k);
  return stem + buf;
}

namespace detail {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }
  return v;
}

/// Row-major little-endian float64 dump of any Eigen matrix.
template <typename M>
void write_matrix(const fs::path& path, const M& m) {
  std::vector<std::uint64_t> buf;
  buf.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) buf.push_back(to_le(std::bit_cast<std::uint64_t>(double(m(i, j)))));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename M>
M read_matrix(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint64_t> buf(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * 8)) throw IoError("truncated file: " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path.string());
  M m(rows, cols);
  std::size_t t = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(to_le(buf[t++]));
  return m;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline json dims_json(const DimSpec& d) {
  return json{{"I", d.I}, {"K", d.K}, {"J", d.J}, {"dtype", "f64le"}};
}

inline DimSpec dims_from(const json& m, const fs::path& where) {
  try {
    if (m.at("dtype").get<std::string>() != "f64le") throw InvalidInput("unsupported dtype in " + where.string());
    DimSpec d{m.at("I").get<std::size_t>(), m.at("K").get<std::size_t>(), m.at("J").get<std::vector<std::size_t>>()};
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw InvalidInput("bad manifest " + where.string() + ": " + e.what());
  }
}

inline void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace detail

/// Dataset bundle: manifest.json (I, K, J, dtype) + slice_000.bin ...
inline void write_slices(const fs::path& dir, const SliceStack& x, const json& meta = json::object()) {
  detail::prepare_dir(dir);
  json m = detail::dims_json(x.dims());
  m["kind"] = "slices";
  m["meta"] = meta;
  detail::write_json(dir / "manifest.json", m);
  for (std::size_t k = 0; k < x.K(); ++k) detail::write_matrix(dir / indexed("slice", k), x[k]);
}

inline SliceStack read_slices(const fs::path& dir) {
  const auto m = detail::read_json(dir / "manifest.json");
  const auto d = detail::dims_from(m, dir);
  std::vector<SliceMatrix> s;
  for (std::size_t k = 0; k < d.K; ++k)
    s.push_back(detail::read_matrix<SliceMatrix>(dir / indexed("slice", k), static_cast<Eigen::Index>(d.I),
                                                 static_cast<Eigen::Index>(d.J[k])));
  return SliceStack(std::move(s));
}

/// Mask bundle: same layout with 0.0 / 1.0 values in mask_000.bin ...
inline void write_mask(const fs::path& dir, const MaskStack& w, const json& meta = json::object()) {
  detail::prepare_dir(dir);
  json m = detail::dims_json(w.dims());
  m["kind"] = "mask";
  m["meta"] = meta;
  detail::write_json(dir / "manifest.json", m);
  for (std::size_t k = 0; k < w.K(); ++k) detail::write_matrix(dir / indexed("mask", k), w[k]);
}

inline MaskStack read_mask(const fs::path& dir) {
  const auto m = detail::read_json(dir / "manifest.json");
  const auto d = detail::dims_from(m, dir);
  std::vector<SliceMatrix> s;
  for (std::size_t k = 0; k < d.K; ++k)
    s.push_back(detail::read_matrix<SliceMatrix>(dir / indexed("mask", k), static_cast<Eigen::Index>(d.I),
                                                 static_cast<Eigen::Index>(d.J[k])));
  return MaskStack(std::move(s));
}

/// Factor bundle: manifest + A.bin, B_000.bin ..., C.bin.
inline void write_factors(const fs::path& dir, const Parafac2Factors& f, const json& meta = json::object()) {
  f.validate();
  detail::prepare_dir(dir);
  json m = detail::dims_json(f.dims());
  m["kind"] = "factors";
  m["R"] = f.R();
  m["meta"] = meta;
  detail::write_json(dir / "manifest.json", m);
  detail::write_matrix(dir / "A.bin", f.A);
  for (std::size_t k = 0; k < f.K(); ++k) detail::write_matrix(dir / indexed("B", k), f.B[k]);
  detail::write_matrix(dir / "C.bin", f.C);
}

inline Parafac2Factors read_factors(const fs::path& dir) {
  const auto m = detail::read_json(dir / "manifest.json");
  const auto d = detail::dims_from(m, dir);
  const auto R = m.value("R", 0);
  ::tparafac2::detail::require(R >= 1, "factor manifest lacks a positive R: " + dir.string());
  Parafac2Factors f;
  f.A = detail::read_matrix<Matrix>(dir / "A.bin", static_cast<Eigen::Index>(d.I), R);
  for (std::size_t k = 0; k < d.K; ++k)
    f.B.push_back(detail::read_matrix<Matrix>(dir / indexed("B", k), static_cast<Eigen::Index>(d.J[k]), R));
  f.C = detail::read_matrix<Matrix>(dir / "C.bin", static_cast<Eigen::Index>(d.K), R);
  f.validate();
  return f;
}

inline std::string read_kind(const fs::path& dir) { return detail::read_json(dir / "manifest.json").value("kind", ""); }

inline json config_to_json(const SolverConfig& c) {
  return json{{"R", c.R},
              {"lambda_A", c.lambda_A},
              {"lambda_B", c.lambda_B},
              {"lambda_D", c.lambda_D},
              {"lambda_B_ridge", c.lambda_B_ridge},
              {"nonneg_C", c.nonneg_C},
              {"eps_abs", c.eps_abs},
              {"eps_rel", c.eps_rel},
              {"eps_feas", c.eps_feas},
              {"inner_tol", c.inner_tol},
              {"max_outer", c.max_outer},
              {"max_inner", c.max_inner},
              {"projection_sweeps", c.projection_sweeps},
              {"seed", c.seed}};
}

/// Overlays the keys present in j onto base; unknown keys are rejected.
inline SolverConfig config_from_json(const json& j, SolverConfig base = {}) {
  if (!j.is_object()) throw InvalidInput("solver config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "R") base.R = v.get<int>();
      else if (key == "lambda_A") base.lambda_A = v.get<double>();
      else if (key == "lambda_B") base.lambda_B = v.get<double>();
      else if (key == "lambda_D") base.lambda_D = v.get<double>();
      else if (key == "lambda_B_ridge") base.lambda_B_ridge = v.get<double>();
      else if (key == "nonneg_C") base.nonneg_C = v.get<bool>();
      else if (key == "eps_abs") base.eps_abs = v.get<double>();
      else if (key == "eps_rel") base.eps_rel = v.get<double>();
      else if (key == "eps_feas") base.eps_feas = v.get<double>();
      else if (key == "inner_tol") base.inner_tol = v.get<double>();
      else if (key == "max_outer") base.max_outer = v.get<int>();
      else if (key == "max_inner") base.max_inner = v.get<int>();
      else if (key == "projection_sweeps") base.projection_sweeps = v.get<int>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else throw InvalidInput("unknown solver config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad solver config value: ") + e.what());
  }
  base.validate();
  return base;
}

inline SolverConfig read_config(const fs::path& path, SolverConfig base = {}) {
  return config_from_json(detail::read_json(path), base);
}

inline json report_to_json(const FitReport& r) {
  const auto& g = r.constraint.feasibility_gaps;
  return json{{"loss_trace", r.loss_trace},
              {"aux_loss_trace", r.aux_loss_trace},
              {"n_outer", r.n_outer},
              {"exit_reason", to_string(r.exit_reason)},
              {"feasible", r.feasible},
              {"max_crossprod_deviation", r.constraint.max_crossprod_deviation},
              {"feasibility_gaps", {{"B_vs_ZB", g.B_vs_ZB}, {"B_vs_YB", g.B_vs_YB}, {"D_vs_ZD", g.D_vs_ZD}}},
              {"monotonicity_violations", r.monotonicity_violations},
              {"wall_time", r.wall_time}};
}

}  // namespace tparafac2::io
