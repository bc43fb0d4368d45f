#pragma once

// Run configuration. Units are mm, GPa and mN throughout; 2D is plane stress.
// Every field has a default, so an empty JSON object is a valid config.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psm/discretization.hpp"
#include "psm/io.hpp"
#include "psm/linalg.hpp"
#include "psm/micromodulus.hpp"

namespace psm {

struct MaterialSpec {
  double young = 0.0;
  double poisson = 1.0 / 3.0;
};

struct DistributionConfig {
  std::string shape = "sphere";  ///< "sphere" or "ellipsoid"
  std::vector<UniformRange> semi_axes{{0.0522, 0.0522}};
  std::vector<UniformRange> angles{{0.0, 0.0}};
  std::optional<std::size_t> count;
  std::optional<double> volume_fraction = 0.14;
  std::size_t max_attempts = 100000;
};

struct NotchBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct MacroConfig {
  std::vector<double> lo{0.0, 0.0};
  std::vector<double> hi{5.0, 5.0};
  double dx = 0.05;
  std::vector<NotchBox> notches;
  int axis = 0;
  double opening_per_step = 6e-4;
  int steps = 100;
  int layers = 3;
  bool hold_faces = true;  ///< loaded layers fixed transversely; otherwise only their middle rows
  int vtk_every = 0;       ///< field snapshot period in steps, 0 for none
};

struct PipelineConfig {
  int dimension = 2;

  double rve_side = 1.0;
  double rve_dx = 0.02;
  DistributionConfig distribution;

  MaterialSpec particle{427.0, 1.0 / 3.0};
  MaterialSpec matrix{71.7, 1.0 / 3.0};
  ClassCriticalStretch critical_stretch{0.00338, 0.01161, 0.007495};

  double correction_stretch = 1e-3;
  double opening_per_step = 4e-4;  ///< relative displacement of the loaded RVE faces per step
  int steps = 100;
  int layers = 3;
  double break_fraction = 0.05;

  std::string solver = "direct";  ///< "direct" or "cg"
  double regularization = 1e-10;
  int max_inner_iterations = 200;
  double tie_tolerance = 1e-9;

  std::string fit_quadrature = "continuum";  ///< "continuum" or "lattice"
  double fit_residual_tolerance = 0.05;

  MacroConfig macro;

  std::size_t samples = 1;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::string out = "psm_out";

  SpdSolver::Method method() const {
    return solver == "cg" ? SpdSolver::Method::ConjugateGradient : SpdSolver::Method::Direct;
  }

  template <int Dim>
  DistributionSpec<Dim> distribution_spec() const {
    DistributionSpec<Dim> d;
    d.shape = distribution.shape == "ellipsoid" ? ParticleShape::Ellipsoid : ParticleShape::Sphere;
    for (std::size_t k = 0; k < distribution.semi_axes.size() && k < Dim; ++k) d.semi_axes[k] = distribution.semi_axes[k];
    for (std::size_t k = 0; k < distribution.angles.size() && k < d.angles.size(); ++k) d.angles[k] = distribution.angles[k];
    d.count = distribution.count;
    d.volume_fraction = distribution.volume_fraction;
    d.seed = seed;
    d.max_attempts = distribution.max_attempts;
    return d;
  }

  void validate() const;
};

namespace detail {

/// Walks a JSON object keeping the field path for error messages and
/// rejecting keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = find(key)) out = number_from_json(*v, field(key));
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->get<long long>() < 0) throw ConfigError(field(key), "must be non-negative");
      }
      out = v->get<Int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void text(const std::string& key, std::string& out, std::initializer_list<const char*> allowed = {}) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
      if (allowed.size() == 0) return;
      for (const char* a : allowed) {
        if (out == a) return;
      }
      std::string list;
      for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
      throw ConfigError(field(key), "must be one of " + list);
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of numbers");
      out.clear();
      for (std::size_t k = 0; k < v->size(); ++k) {
        out.push_back(number_from_json((*v)[k], field(key) + "[" + std::to_string(k) + "]"));
      }
    }
  }

  void ranges(const std::string& key, std::vector<UniformRange>& out) {
    if (const Json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key), "expected an array of [lo, hi] pairs");
      out.clear();
      for (std::size_t k = 0; k < v->size(); ++k) {
        const std::string f = field(key) + "[" + std::to_string(k) + "]";
        const Json& r = (*v)[k];
        if (r.is_number()) {
          out.push_back({r.get<double>(), r.get<double>()});
        } else if (r.is_array() && r.size() == 2) {
          out.push_back({number_from_json(r[0], f), number_from_json(r[1], f)});
        } else {
          throw ConfigError(f, "expected a number or a [lo, hi] pair");
        }
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown field");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_material(FieldReader& r, const std::string& key, MaterialSpec& m) {
  if (const Json* v = r.find(key)) {
    FieldReader f(*v, r.field(key));
    f.number("young", m.young);
    f.number("poisson", m.poisson);
    f.finish();
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const Json& j) {
  PipelineConfig c;
  detail::FieldReader r(j, "");
  r.integer("dimension", c.dimension);
  if (c.dimension == 3) {
    c.particle.poisson = c.matrix.poisson = 0.25;
    c.macro.lo = {0.0, 0.0, 0.0};
    c.macro.hi = {5.0, 5.0, 5.0};
  }

  if (const Json* v = r.find("rve")) {
    detail::FieldReader f(*v, "rve");
    f.number("side", c.rve_side);
    f.number("dx", c.rve_dx);
    if (const Json* d = f.find("distribution")) {
      detail::FieldReader g(*d, "rve.distribution");
      g.text("shape", c.distribution.shape, {"sphere", "ellipsoid"});
      g.ranges("semi_axes", c.distribution.semi_axes);
      g.ranges("angles", c.distribution.angles);
      if (const Json* n = g.find("count")) {
        if (!n->is_number_integer() || n->get<long long>() < 0) throw ConfigError("rve.distribution.count", "expected a non-negative integer");
        c.distribution.count = n->get<std::size_t>();
        c.distribution.volume_fraction.reset();
      }
      if (const Json* vf = g.find("volume_fraction")) {
        if (vf->is_null()) {
          c.distribution.volume_fraction.reset();
        } else {
          c.distribution.volume_fraction = number_from_json(*vf, "rve.distribution.volume_fraction");
        }
      }
      g.integer("max_attempts", c.distribution.max_attempts);
      g.finish();
    }
    f.finish();
  }

  if (const Json* v = r.find("materials")) {
    detail::FieldReader f(*v, "materials");
    detail::read_material(f, "particle", c.particle);
    detail::read_material(f, "matrix", c.matrix);
    f.finish();
  }

  if (const Json* v = r.find("critical_stretch")) {
    detail::FieldReader f(*v, "critical_stretch");
    f.number("particle", c.critical_stretch.particle);
    f.number("matrix", c.critical_stretch.matrix);
    f.number("interface", c.critical_stretch.interface);
    f.finish();
  }

  if (const Json* v = r.find("micro")) {
    detail::FieldReader f(*v, "micro");
    f.number("correction_stretch", c.correction_stretch);
    f.number("opening_per_step", c.opening_per_step);
    f.integer("steps", c.steps);
    f.integer("layers", c.layers);
    f.number("break_fraction", c.break_fraction);
    f.finish();
  }

  if (const Json* v = r.find("solver")) {
    detail::FieldReader f(*v, "solver");
    f.text("method", c.solver, {"direct", "cg"});
    f.number("regularization", c.regularization);
    f.integer("max_inner_iterations", c.max_inner_iterations);
    f.number("tie_tolerance", c.tie_tolerance);
    f.finish();
  }

  if (const Json* v = r.find("fit")) {
    detail::FieldReader f(*v, "fit");
    f.text("quadrature", c.fit_quadrature, {"continuum", "lattice"});
    f.number("residual_tolerance", c.fit_residual_tolerance);
    f.finish();
  }

  if (const Json* v = r.find("macro")) {
    detail::FieldReader f(*v, "macro");
    f.numbers("lo", c.macro.lo);
    f.numbers("hi", c.macro.hi);
    f.number("dx", c.macro.dx);
    if (const Json* ns = f.find("notches")) {
      if (!ns->is_array()) throw ConfigError("macro.notches", "expected an array of boxes");
      for (std::size_t k = 0; k < ns->size(); ++k) {
        detail::FieldReader g((*ns)[k], "macro.notches[" + std::to_string(k) + "]");
        NotchBox b;
        g.numbers("lo", b.lo);
        g.numbers("hi", b.hi);
        g.finish();
        c.macro.notches.push_back(b);
      }
    }
    f.integer("axis", c.macro.axis);
    f.number("opening_per_step", c.macro.opening_per_step);
    f.integer("steps", c.macro.steps);
    f.integer("layers", c.macro.layers);
    f.boolean("hold_faces", c.macro.hold_faces);
    f.integer("vtk_every", c.macro.vtk_every);
    f.finish();
  }

  if (const Json* v = r.find("run")) {
    detail::FieldReader f(*v, "run");
    f.integer("samples", c.samples);
    f.integer("seed", c.seed);
    f.integer("jobs", c.jobs);
    f.text("out", c.out);
    f.finish();
  }
  r.finish();
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

inline void PipelineConfig::validate() const {
  if (dimension != 2 && dimension != 3) throw ConfigError("dimension", "must be 2 or 3");
  const auto d = static_cast<std::size_t>(dimension);
  if (!(rve_side > 0.0)) throw ConfigError("rve.side", "must be positive");
  if (!(rve_dx > 0.0) || rve_dx > rve_side) throw ConfigError("rve.dx", "must lie in (0, side]");
  const double cells = rve_side / rve_dx;
  if (std::abs(cells - std::round(cells)) > 1e-9 * cells) throw ConfigError("rve.dx", "must divide the RVE side");
  const std::size_t axes = distribution.shape == "sphere" ? 1 : d;
  if (distribution.semi_axes.size() < axes) {
    throw ConfigError("rve.distribution.semi_axes", "need " + std::to_string(axes) + " ranges");
  }
  if (distribution.shape == "ellipsoid" && distribution.angles.size() < static_cast<std::size_t>(angle_count(dimension))) {
    throw ConfigError("rve.distribution.angles", "need " + std::to_string(angle_count(dimension)) + " ranges");
  }
  if (distribution.count && distribution.volume_fraction) {
    throw ConfigError("rve.distribution", "give either count or volume_fraction, not both");
  }
  if (distribution.volume_fraction && (*distribution.volume_fraction < 0.0 || *distribution.volume_fraction >= 1.0)) {
    throw ConfigError("rve.distribution.volume_fraction", "must lie in [0, 1)");
  }
  const double nu = bond_based_poisson(dimension);
  for (const auto& [name, m] : {std::pair{"materials.particle", particle}, std::pair{"materials.matrix", matrix}}) {
    if (!(m.young > 0.0)) throw ConfigError(std::string(name) + ".young", "must be positive");
    if (std::abs(m.poisson - nu) > 1e-6) {
      throw ConfigError(std::string(name) + ".poisson", "bond-based PD needs " + format_number(nu) + " in " +
                                                             std::to_string(dimension) + "D");
    }
  }
  for (const auto& [name, s] : {std::pair{"particle", critical_stretch.particle}, std::pair{"matrix", critical_stretch.matrix},
                                std::pair{"interface", critical_stretch.interface}}) {
    if (!(s > 0.0)) throw ConfigError(std::string("critical_stretch.") + name, "must be positive or \"inf\"");
  }
  if (!(correction_stretch > 0.0)) throw ConfigError("micro.correction_stretch", "must be positive");
  if (!(opening_per_step > 0.0)) throw ConfigError("micro.opening_per_step", "must be positive");
  if (steps < 1) throw ConfigError("micro.steps", "must be >= 1");
  if (layers < 1) throw ConfigError("micro.layers", "must be >= 1");
  if (!(break_fraction > 0.0 && break_fraction < 1.0)) throw ConfigError("micro.break_fraction", "must lie in (0, 1)");
  if (!(regularization >= 0.0)) throw ConfigError("solver.regularization", "must be non-negative");
  if (max_inner_iterations < 1) throw ConfigError("solver.max_inner_iterations", "must be >= 1");
  if (!(fit_residual_tolerance > 0.0)) throw ConfigError("fit.residual_tolerance", "must be positive");
  if (macro.lo.size() != d) throw ConfigError("macro.lo", "need " + std::to_string(d) + " coordinates");
  if (macro.hi.size() != d) throw ConfigError("macro.hi", "need " + std::to_string(d) + " coordinates");
  if (!(macro.dx > 0.0)) throw ConfigError("macro.dx", "must be positive");
  for (std::size_t k = 0; k < d; ++k) {
    const double n = (macro.hi[k] - macro.lo[k]) / macro.dx;
    if (!(n >= 1.0) || std::abs(n - std::round(n)) > 1e-9 * n) {
      throw ConfigError("macro.dx", "must divide the plate extent along axis " + std::to_string(k));
    }
  }
  for (std::size_t k = 0; k < macro.notches.size(); ++k) {
    const auto& b = macro.notches[k];
    if (b.lo.size() != d || b.hi.size() != d) {
      throw ConfigError("macro.notches[" + std::to_string(k) + "]", "need " + std::to_string(d) + " coordinates per corner");
    }
  }
  if (macro.axis < 0 || macro.axis >= dimension) throw ConfigError("macro.axis", "out of range");
  if (!(macro.opening_per_step >= 0.0)) throw ConfigError("macro.opening_per_step", "must be non-negative");
  if (macro.steps < 1) throw ConfigError("macro.steps", "must be >= 1");
  if (macro.layers < 1) throw ConfigError("macro.layers", "must be >= 1");
  if (macro.vtk_every < 0) throw ConfigError("macro.vtk_every", "must be non-negative");
  if (samples < 1) throw ConfigError("run.samples", "must be >= 1");
  if (jobs < 1) throw ConfigError("run.jobs", "must be >= 1");
}

/// Canonical JSON of everything that affects results (not samples, jobs or out).
inline Json config_json(const PipelineConfig& c) {
  auto ranges = [](const std::vector<UniformRange>& rs) {
    Json a = Json::array();
    for (const auto& r : rs) a.push_back({r.lo, r.hi});
    return a;
  };
  Json notches = Json::array();
  for (const auto& b : c.macro.notches) notches.push_back({{"lo", b.lo}, {"hi", b.hi}});
  Json dist = {{"shape", c.distribution.shape},
               {"semi_axes", ranges(c.distribution.semi_axes)},
               {"angles", ranges(c.distribution.angles)},
               {"max_attempts", c.distribution.max_attempts}};
  if (c.distribution.count) dist["count"] = *c.distribution.count;
  dist["volume_fraction"] = c.distribution.volume_fraction ? Json(*c.distribution.volume_fraction) : Json(nullptr);
  return {
      {"dimension", c.dimension},
      {"rve", {{"side", c.rve_side}, {"dx", c.rve_dx}, {"distribution", dist}}},
      {"materials",
       {{"particle", {{"young", c.particle.young}, {"poisson", c.particle.poisson}}},
        {"matrix", {{"young", c.matrix.young}, {"poisson", c.matrix.poisson}}}}},
      {"critical_stretch",
       {{"particle", number_json(c.critical_stretch.particle)},
        {"matrix", number_json(c.critical_stretch.matrix)},
        {"interface", number_json(c.critical_stretch.interface)}}},
      {"micro",
       {{"correction_stretch", c.correction_stretch},
        {"opening_per_step", c.opening_per_step},
        {"steps", c.steps},
        {"layers", c.layers},
        {"break_fraction", c.break_fraction}}},
      {"solver",
       {{"method", c.solver},
        {"regularization", c.regularization},
        {"max_inner_iterations", c.max_inner_iterations},
        {"tie_tolerance", c.tie_tolerance}}},
      {"fit", {{"quadrature", c.fit_quadrature}, {"residual_tolerance", c.fit_residual_tolerance}}},
      {"macro",
       {{"lo", c.macro.lo},
        {"hi", c.macro.hi},
        {"dx", c.macro.dx},
        {"notches", notches},
        {"axis", c.macro.axis},
        {"opening_per_step", c.macro.opening_per_step},
        {"steps", c.macro.steps},
        {"layers", c.macro.layers},
        {"hold_faces", c.macro.hold_faces},
        {"vtk_every", c.macro.vtk_every}}},
      {"run", {{"seed", c.seed}}},
  };
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const PipelineConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_json(c).dump())));
  return buf;
}

}  // namespace psm
