#pragma once

// Serialized artifacts: JSON records for samples and tensors, CSV step
// histories and bond tables, legacy VTK point snapshots.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "psm/discretization.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"
#include "psm/microstructure.hpp"
#include "psm/pd_solver.hpp"

namespace psm {

using Json = nlohmann::json;

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::Io, msg) {}
};

/// Shortest text that reads back to the same double.
inline std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

/// Infinity is stored as the string "inf" (null also reads as infinity).
inline Json number_json(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline double number_from_json(const Json& j, const std::string& field) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ConfigError(field, "expected a number or \"inf\", got \"" + s + "\"");
  }
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

template <int Dim>
Json vec_json(const Vec<Dim>& v) {
  Json a = Json::array();
  for (int k = 0; k < Dim; ++k) a.push_back(v[k]);
  return a;
}

template <int Dim>
Vec<Dim> vec_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(Dim)) {
    throw ConfigError(field, "expected " + std::to_string(Dim) + " numbers");
  }
  Vec<Dim> v;
  for (int k = 0; k < Dim; ++k) v[k] = number_from_json(j[static_cast<std::size_t>(k)], field);
  return v;
}

template <int Dim>
Json tensor_json(const ElasticTensor<Dim>& t) {
  Json rows = Json::array();
  for (int r = 0; r < t.voigt.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < t.voigt.cols(); ++c) row.push_back(t.voigt(r, c));
    rows.push_back(row);
  }
  return rows;
}

template <int Dim>
ElasticTensor<Dim> tensor_from_json(const Json& j, const std::string& field) {
  constexpr int n = voigt_size(Dim);
  if (!j.is_array() || j.size() != n) throw ConfigError(field, "expected a " + std::to_string(n) + "x" + std::to_string(n) + " Voigt matrix");
  ElasticTensor<Dim> t;
  for (int r = 0; r < n; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != n) throw ConfigError(field + "[" + std::to_string(r) + "]", "wrong row length");
    for (int c = 0; c < n; ++c) {
      t.voigt(r, c) = number_from_json(row[static_cast<std::size_t>(c)], field + "[" + std::to_string(r) + "]");
    }
  }
  return t;
}

template <int Dim>
Json rve_json(const RveSample<Dim>& rve) {
  Json j;
  j["dimension"] = Dim;
  j["index"] = rve.index;
  j["seed"] = rve.seed;
  j["side_length"] = rve.side_length;
  j["volume_fraction"] = rve.volume_fraction();
  Json ps = Json::array();
  for (const auto& p : rve.particles) {
    Json a = Json::array();
    for (double x : p.angles) a.push_back(x);
    ps.push_back({{"center", vec_json<Dim>(p.center)}, {"semi_axes", vec_json<Dim>(p.semi_axes)}, {"angles", a}});
  }
  j["particles"] = ps;
  return j;
}

template <int Dim>
RveSample<Dim> rve_from_json(const Json& j) {
  if (!j.contains("dimension") || j["dimension"] != Dim) throw ConfigError("rve.dimension", "does not match the run");
  RveSample<Dim> rve;
  rve.index = j.at("index").get<std::size_t>();
  rve.seed = j.at("seed").get<std::uint64_t>();
  rve.side_length = j.at("side_length").get<double>();
  for (std::size_t k = 0; k < j.at("particles").size(); ++k) {
    const auto& p = j["particles"][k];
    const std::string field = "rve.particles[" + std::to_string(k) + "]";
    ParticleGeometry<Dim> g;
    g.center = vec_from_json<Dim>(p.at("center"), field + ".center");
    g.semi_axes = vec_from_json<Dim>(p.at("semi_axes"), field + ".semi_axes");
    const auto& a = p.at("angles");
    if (a.size() != g.angles.size()) throw ConfigError(field + ".angles", "wrong count");
    for (std::size_t q = 0; q < g.angles.size(); ++q) g.angles[q] = a[q].get<double>();
    rve.particles.push_back(g);
  }
  return rve;
}

inline std::string history_csv(std::span<const StepRecord> history) {
  std::string out =
      "step,imposed,stress,broken_bonds,newly_broken,dissipated_energy,external_work,max_damage,inner_iterations,"
      "isolated_nodes\n";
  for (const auto& r : history) {
    out += std::to_string(r.step) + ',' + format_number(r.imposed) + ',' + format_number(r.stress) + ',' +
           std::to_string(r.broken_bonds) + ',' + std::to_string(r.newly_broken) + ',' +
           format_number(r.dissipated_energy) + ',' + format_number(r.external_work) + ',' +
           format_number(r.max_damage) + ',' + std::to_string(r.inner_iterations) + ',' +
           std::to_string(r.isolated_nodes) + '\n';
  }
  return out;
}

/// Step and stress columns of a history CSV.
inline std::vector<StepRecord> read_history_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<StepRecord> h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    StepRecord r;
    std::getline(row, cell, ',');
    r.step = std::stoi(cell);
    std::getline(row, cell, ',');
    r.imposed = std::strtod(cell.c_str(), nullptr);
    std::getline(row, cell, ',');
    r.stress = std::strtod(cell.c_str(), nullptr);
    h.push_back(r);
  }
  return h;
}

inline const char* bond_class_name(BondClass c) {
  switch (c) {
    case BondClass::Particle: return "particle";
    case BondClass::Interface: return "interface";
    default: return "matrix";
  }
}

template <int Dim>
std::string bond_table_csv(const BondSet<Dim>& bonds) {
  std::string out = "i,j,length,class,c,s0\n";
  for (const auto& b : bonds) {
    out += std::to_string(b.i) + ',' + std::to_string(b.j) + ',' + format_number(b.length) + ',' +
           bond_class_name(b.cls) + ',' + format_number(b.c) + ',' + format_number(b.s0) + '\n';
  }
  return out;
}

/// Restores the active moduli of a rebuilt bond set from its table.
template <int Dim>
void read_bond_moduli(const std::filesystem::path& path, BondSet<Dim>& bonds) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (k >= bonds.size()) throw ConfigError(path.string(), "more bonds than the rebuilt body");
    std::istringstream row(line);
    std::string cell[6];
    for (auto& c : cell) std::getline(row, c, ',');
    auto& b = bonds[k++];
    if (std::stoi(cell[0]) != b.i || std::stoi(cell[1]) != b.j) {
      throw ConfigError(path.string(), "bond " + std::to_string(k - 1) + " does not match the rebuilt body");
    }
    b.c = std::strtod(cell[4].c_str(), nullptr);
  }
  if (k != bonds.size()) throw ConfigError(path.string(), "fewer bonds than the rebuilt body");
}

/// Legacy ASCII VTK point cloud with displacement and damage.
template <int Dim>
std::string vtk_points(const NodeSet<Dim>& nodes, std::span<const Vec<Dim>> u, std::span<const double> damage) {
  const std::size_t n = nodes.size();
  std::string out = "# vtk DataFile Version 3.0\npsm field snapshot\nASCII\nDATASET POLYDATA\n";
  out += "POINTS " + std::to_string(n) + " double\n";
  auto xyz = [](const auto& v) {
    std::string s;
    for (int k = 0; k < 3; ++k) {
      s += format_number(k < Dim ? v[k] : 0.0);
      s += k < 2 ? ' ' : '\n';
    }
    return s;
  };
  for (const auto& p : nodes.positions) out += xyz(p);
  out += "VERTICES " + std::to_string(n) + ' ' + std::to_string(2 * n) + '\n';
  for (std::size_t k = 0; k < n; ++k) out += "1 " + std::to_string(k) + '\n';
  out += "POINT_DATA " + std::to_string(n) + '\n';
  out += "VECTORS displacement double\n";
  for (const auto& v : u) out += xyz(v);
  out += "SCALARS displacement_magnitude double 1\nLOOKUP_TABLE default\n";
  for (const auto& v : u) out += format_number(v.norm()) + '\n';
  out += "SCALARS damage double 1\nLOOKUP_TABLE default\n";
  for (double d : damage) out += format_number(d) + '\n';
  return out;
}

}  // namespace psm
