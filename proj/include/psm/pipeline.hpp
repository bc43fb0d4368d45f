#pragma once

// End-to-end orchestration. Per sample: generate the RVE, correct its bond
// moduli, run one fracture test per axis, homogenize. Then aggregate the
// samples, fit the equivalent micromodulus and run the macro plate.
// Every stage reads and writes files under the output directory, so stages
// can be run one at a time and compose to the same bytes as a full run.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "psm/ccm.hpp"
#include "psm/config.hpp"
#include "psm/correction.hpp"
#include "psm/discretization.hpp"
#include "psm/io.hpp"
#include "psm/microstructure.hpp"
#include "psm/multiscale.hpp"
#include "psm/pd_solver.hpp"

namespace psm {

namespace fs = std::filesystem;

enum class Stage { Generate, Correct, Fracture, Homogenize, Fit, Macro, All };

inline Stage parse_stage(const std::string& s) {
  if (s == "generate-rve") return Stage::Generate;
  if (s == "correct") return Stage::Correct;
  if (s == "rve-fracture") return Stage::Fracture;
  if (s == "homogenize") return Stage::Homogenize;
  if (s == "fit") return Stage::Fit;
  if (s == "macro-sim") return Stage::Macro;
  if (s == "all" || s.empty()) return Stage::All;
  throw ConfigError("stage", "unknown stage '" + s + "'");
}

/// Error raised inside one sample, tagged with its index.
class SampleFailure : public Error {
 public:
  SampleFailure(std::size_t m, const Error& e) : Error(e.kind(), "sample " + std::to_string(m) + ": " + e.what()) {}
};

/// File names under the output directory.
struct RunLayout {
  fs::path out;

  fs::path sample_dir(std::size_t m) const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04zu", m);
    return out / "samples" / buf;
  }
  fs::path rve(std::size_t m) const { return sample_dir(m) / "rve.json"; }
  fs::path bonds(std::size_t m) const { return sample_dir(m) / "bonds.csv"; }
  fs::path correction(std::size_t m) const { return sample_dir(m) / "correction.json"; }
  fs::path fracture(std::size_t m, int axis) const {
    return sample_dir(m) / ("fracture_axis" + std::to_string(axis + 1) + ".csv");
  }
  fs::path critical_stretch(std::size_t m) const { return sample_dir(m) / "critical_stretch.json"; }
  fs::path homogenized(std::size_t m) const { return sample_dir(m) / "homogenized.json"; }
  fs::path effective() const { return out / "effective.json"; }
  fs::path macro_csv() const { return out / "macro.csv"; }
  fs::path macro_summary() const { return out / "macro.json"; }
  fs::path macro_vtk(int step) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%04d.vtk", step);
    return out / "macro_vtk" / buf;
  }
  fs::path manifest() const { return out / "manifest.json"; }

  std::string relative(const fs::path& p) const { return p.lexically_relative(out).generic_string(); }
};

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void log_line(const std::string& msg) {
  std::lock_guard lock(log_mutex());
  std::cerr << msg << '\n';
}

/// A discretized RVE: PD nodes at voxel centres, bonds with base moduli and
/// class critical stretches.
template <int Dim>
struct RveBody {
  RveSample<Dim> rve;
  NodeSet<Dim> nodes;
  VoxelMesh<Dim> mesh;
  MaterialField<Dim> materials;
  std::vector<Phase> phases;
  BondSet<Dim> bonds;
};

template <int Dim>
Box<Dim> cube(double side) {
  return Box<Dim>{Vec<Dim>::Zero(), Vec<Dim>::Constant(side)};
}

inline PhaseMaterials phase_materials(const PipelineConfig& c) {
  return {{c.particle.young, c.particle.poisson}, {c.matrix.young, c.matrix.poisson}};
}

/// Nodes, voxels and bonds of a body whose phase is given pointwise.
template <int Dim>
void discretize_body(const PipelineConfig& c, const Box<Dim>& box, double dx,
                     const std::function<Phase(const Vec<Dim>&)>& phase_of, NodeSet<Dim>& nodes, VoxelMesh<Dim>& mesh,
                     MaterialField<Dim>& materials, std::vector<Phase>& phases, BondSet<Dim>& bonds) {
  nodes = build_grid<Dim>(box, dx);
  mesh = VoxelMesh<Dim>::for_box(box, dx);
  materials = voxel_materials<Dim>(mesh, phase_materials(c), phase_of);
  phases.clear();
  for (const auto& p : nodes.positions) phases.push_back(phase_of(p));
  bonds = build_bonds<Dim>(nodes, {3.0 * dx}, phases);
  const auto km = calibrate_micromodulus_coeffs<Dim>(c.matrix.young, c.matrix.poisson, dx / 3.0, 3.0 * dx, dx);
  const auto kp = calibrate_micromodulus_coeffs<Dim>(c.particle.young, c.particle.poisson, dx / 3.0, 3.0 * dx, dx);
  assign_micromodulus<Dim>(bonds, phases, km, kp);
  assign_critical_stretch<Dim>(bonds, c.critical_stretch);
}

template <int Dim>
RveBody<Dim> build_rve_body(const PipelineConfig& c, const RveSample<Dim>& rve) {
  RveBody<Dim> b;
  b.rve = rve;
  const double side = rve.side_length;
  discretize_body<Dim>(c, cube<Dim>(side), c.rve_dx, [&](const Vec<Dim>& x) { return rve.phase_at(x / side); }, b.nodes,
                       b.mesh, b.materials, b.phases, b.bonds);
  return b;
}

template <int Dim>
LoadProgram<Dim> rve_fracture_program(const PipelineConfig& c, const NodeSet<Dim>& nodes, int axis) {
  auto p = symmetric_stretch_program<Dim>(nodes, axis, c.opening_per_step, c.layers, c.steps);
  p.method = c.method();
  p.regularization = c.regularization;
  p.max_inner_iterations = c.max_inner_iterations;
  p.tie_tolerance = c.tie_tolerance;
  p.stop_fraction = c.break_fraction;
  return p;
}

inline bool all_unbreakable(const ClassCriticalStretch& s) {
  return std::isinf(s.particle) && std::isinf(s.matrix) && std::isinf(s.interface);
}

/// Runs the stage functions for one dimension.
template <int Dim>
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config) : c_(std::move(config)), layout_{c_.out} {}

  const RunLayout& layout() const { return layout_; }

  void generate(std::size_t m) const {
    const auto rve = generate_rve<Dim>(c_.distribution_spec<Dim>(), m, c_.rve_side);
    write_json(layout_.rve(m), rve_json<Dim>(rve));
  }

  RveSample<Dim> load_rve(std::size_t m) const { return rve_from_json<Dim>(read_json(layout_.rve(m))); }

  void correct(std::size_t m) const {
    auto body = build_rve_body<Dim>(c_, load_rve(m));
    const auto r = correct_voxel_body<Dim>(body.bonds, body.nodes, body.mesh, body.materials, c_.correction_stretch,
                                           c_.method());
    Json summary;
    Json axes = Json::array();
    for (const auto& alpha : r.factors.alpha) {
      const auto [lo, hi] = std::minmax_element(alpha.begin(), alpha.end());
      double mean = 0.0;
      for (double a : alpha) mean += a;
      axes.push_back({{"min", *lo}, {"max", *hi}, {"mean", mean / static_cast<double>(alpha.size())}});
    }
    summary["alpha"] = axes;
    summary["bonds"] = body.bonds.size();
    write_text(layout_.bonds(m), bond_table_csv<Dim>(body.bonds));
    write_json(layout_.correction(m), summary);
  }

  /// RVE with the corrected moduli restored from the bond table.
  RveBody<Dim> load_corrected(std::size_t m) const {
    auto body = build_rve_body<Dim>(c_, load_rve(m));
    read_bond_moduli<Dim>(layout_.bonds(m), body.bonds);
    return body;
  }

  void fracture(std::size_t m) const {
    const auto body = load_corrected(m);
    Json per_axis = Json::array();
    for (int axis = 0; axis < Dim; ++axis) {
      double s = std::numeric_limits<double>::infinity();
      if (!all_unbreakable(c_.critical_stretch)) {
        auto bonds = body.bonds;
        const auto state = quasi_static_run<Dim>(bonds, body.nodes.size(), body.nodes.volume(),
                                                 rve_fracture_program<Dim>(c_, body.nodes, axis));
        write_text(layout_.fracture(m, axis), history_csv(state.history));
        s = rve_critical_stretch(state.history, c_.opening_per_step, body.rve.side_length, c_.break_fraction);
      }
      per_axis.push_back(number_json(s));
    }
    write_json(layout_.critical_stretch(m), {{"index", m}, {"critical_stretch", per_axis}});
  }

  void homogenize(std::size_t m) const {
    const auto rve = load_rve(m);
    const auto mesh = VoxelMesh<Dim>::for_box(cube<Dim>(rve.side_length), c_.rve_dx);
    const auto mat = rve_materials<Dim>(mesh, rve, phase_materials(c_));
    const auto a = homogenized_tensor<Dim>(mat, solve_cell_problems<Dim>(mesh, mat, c_.method()));
    const auto [lower, upper] = mixture_bounds<Dim>(mat);
    write_json(layout_.homogenized(m), {{"index", m},
                                        {"tensor", tensor_json<Dim>(a)},
                                        {"voxel_particle_fraction", material_fraction<Dim>(mat, 1)},
                                        {"volume_fraction", rve.volume_fraction()},
                                        {"within_bounds", within_bounds<Dim>(a, lower, upper, 1e-8)}});
  }

  /// Sample averages and the equivalent micromodulus, written to effective.json.
  void fit(std::size_t samples) const {
    std::array<std::vector<double>, Dim> s;
    std::vector<ElasticTensor<Dim>> tensors;
    Json per_sample = Json::array();
    for (std::size_t m = 0; m < samples; ++m) {
      const auto cs = read_json(layout_.critical_stretch(m));
      Json row = Json::array();
      for (int k = 0; k < Dim; ++k) {
        const double v = number_from_json(cs.at("critical_stretch").at(static_cast<std::size_t>(k)),
                                          layout_.critical_stretch(m).string());
        s[static_cast<std::size_t>(k)].push_back(v);
        row.push_back(number_json(v));
      }
      per_sample.push_back(row);
      tensors.push_back(tensor_from_json<Dim>(read_json(layout_.homogenized(m)).at("tensor"),
                                              layout_.homogenized(m).string()));
    }
    Json mean = Json::array();
    Json sd = Json::array();
    Json se = Json::array();
    for (const auto& axis : s) {
      const auto sum = aggregate_scalar(axis);
      mean.push_back(number_json(sum.mean));
      sd.push_back(sum.has_spread() && std::isfinite(sum.stddev) ? Json(sum.stddev) : Json(nullptr));
      se.push_back(sum.has_spread() && std::isfinite(sum.std_error) ? Json(sum.std_error) : Json(nullptr));
    }
    Json out = fit_tensor(aggregate_tensor<Dim>(tensors));
    out["samples"] = samples;
    out["critical_stretch"] = {{"mean", mean}, {"stddev", sd}, {"std_error", se}, {"per_sample", per_sample}};
    write_json(layout_.effective(), out);
  }

  /// Fit of a given effective tensor (no critical stretch information).
  Json fit_tensor(const ElasticTensor<Dim>& a) const {
    const double dx = c_.macro.dx;
    const auto quad = c_.fit_quadrature == "lattice" ? HorizonQuadrature::Lattice : HorizonQuadrature::Continuum;
    const auto fit = fit_equivalent_micromodulus<Dim>(a, 3.0 * dx, dx / 3.0, quad, dx, c_.fit_residual_tolerance);
    if (!fit.representable) {
      log_line("warning: effective tensor is not representable by bond-based PD (relative residual " +
               format_number(fit.relative_residual) + ")");
    }
    return {{"dimension", Dim},
            {"tensor", tensor_json<Dim>(a)},
            {"micromodulus", micromodulus_json(fit, 3.0 * dx, c_.fit_quadrature)}};
  }

  static Json micromodulus_json(const EquivalentMicromodulus& fit, double delta, const std::string& quadrature) {
    return {{"a0", fit.coeffs.a0},
            {"a1", fit.coeffs.a1},
            {"a2", fit.coeffs.a2},
            {"length", fit.coeffs.length},
            {"delta", delta},
            {"quadrature", quadrature},
            {"relative_residual", fit.relative_residual},
            {"representable", fit.representable}};
  }

  struct MacroBody {
    NodeSet<Dim> nodes;
    BondSet<Dim> bonds;
    EquivalentMicromodulus modulus;
    std::array<double, Dim> critical_stretch;
  };

  /// Homogenized plate: lattice-consistent equivalent micromodulus from the
  /// effective tensor and direction-dependent critical stretch per bond.
  MacroBody macro_body(const ElasticTensor<Dim>& a, const std::array<double, Dim>& s) const {
    MacroBody b;
    const double dx = c_.macro.dx;
    Box<Dim> box;
    for (int k = 0; k < Dim; ++k) {
      box.lo[k] = c_.macro.lo[static_cast<std::size_t>(k)];
      box.hi[k] = c_.macro.hi[static_cast<std::size_t>(k)];
    }
    std::vector<Box<Dim>> notches;
    for (const auto& n : c_.macro.notches) {
      Box<Dim> nb;
      for (int k = 0; k < Dim; ++k) {
        nb.lo[k] = n.lo[static_cast<std::size_t>(k)];
        nb.hi[k] = n.hi[static_cast<std::size_t>(k)];
      }
      notches.push_back(nb);
    }
    b.nodes = build_grid<Dim>(box, dx, notches);
    b.bonds = build_bonds<Dim>(b.nodes, {3.0 * dx});
    b.modulus = fit_equivalent_micromodulus<Dim>(a, 3.0 * dx, dx / 3.0, HorizonQuadrature::Lattice, dx,
                                                 c_.fit_residual_tolerance);
    assign_micromodulus<Dim>(b.bonds, b.modulus.coeffs);
    b.critical_stretch = s;
    for (auto& bond : b.bonds) bond.s0 = directional_critical_stretch<Dim>(s, bond.xi);
    return b;
  }

  void macro() const {
    const auto eff = read_json(layout_.effective());
    const std::string field = layout_.effective().string();
    const auto a = tensor_from_json<Dim>(eff.at("tensor"), field + ".tensor");
    std::array<double, Dim> s;
    s.fill(std::numeric_limits<double>::infinity());
    if (eff.contains("critical_stretch")) {
      for (int k = 0; k < Dim; ++k) {
        s[static_cast<std::size_t>(k)] =
            number_from_json(eff["critical_stretch"].at("mean").at(static_cast<std::size_t>(k)), field);
      }
    }
    auto body = macro_body(a, s);
    auto program = symmetric_stretch_program<Dim>(body.nodes, c_.macro.axis, c_.macro.opening_per_step,
                                                  c_.macro.layers, c_.macro.steps, c_.macro.hold_faces);
    program.method = c_.method();
    program.regularization = c_.regularization;
    program.max_inner_iterations = c_.max_inner_iterations;
    program.tie_tolerance = c_.tie_tolerance;
    Json snapshots = Json::array();
    StepObserver<Dim> observer;
    if (c_.macro.vtk_every > 0) {
      observer = [&](const SimState<Dim>& st, const BondSet<Dim>&) {
        if (st.step % c_.macro.vtk_every != 0) return;
        const auto path = layout_.macro_vtk(st.step);
        write_text(path, vtk_points<Dim>(body.nodes, st.u, st.damage));
        snapshots.push_back(layout_.relative(path));
      };
    }
    const auto state = quasi_static_run<Dim>(body.bonds, body.nodes.size(), body.nodes.volume(), program, observer);
    write_text(layout_.macro_csv(), history_csv(state.history));
    double peak = 0.0;
    int peak_step = 0;
    for (const auto& r : state.history) {
      if (std::abs(r.stress) > peak) {
        peak = std::abs(r.stress);
        peak_step = r.step;
      }
    }
    Json sj = Json::array();
    for (double v : s) sj.push_back(number_json(v));
    const int broke = break_step(state.history, c_.break_fraction);
    write_json(layout_.macro_summary(),
               {{"nodes", body.nodes.size()},
                {"bonds", body.bonds.size()},
                {"critical_stretch", sj},
                {"lattice_micromodulus", micromodulus_json(body.modulus, 3.0 * c_.macro.dx, "lattice")},
                {"peak_stress", peak},
                {"peak_step", peak_step},
                {"break_step", broke < 0 ? Json(nullptr) : Json(state.history[static_cast<std::size_t>(broke)].step)},
                {"dissipated_energy", state.dissipated_energy},
                {"external_work", state.external_work},
                {"snapshots", snapshots}});
  }

  std::vector<fs::path> sample_files(std::size_t m) const {
    std::vector<fs::path> f{layout_.rve(m), layout_.bonds(m), layout_.correction(m), layout_.critical_stretch(m),
                            layout_.homogenized(m)};
    if (!all_unbreakable(c_.critical_stretch)) {
      for (int axis = 0; axis < Dim; ++axis) f.push_back(layout_.fracture(m, axis));
    }
    return f;
  }

  void run_sample(std::size_t m, Stage stage) const {
    const bool all = stage == Stage::All;
    if (all || stage == Stage::Generate) generate(m);
    if (all || stage == Stage::Correct) correct(m);
    if (all || stage == Stage::Fracture) fracture(m);
    if (all || stage == Stage::Homogenize) homogenize(m);
    log_line("sample " + std::to_string(m) + " done");
  }

  /// Runs `stage` (or everything) and returns the manifest of a full run.
  Json run(Stage stage) const {
    const std::string hash = config_hash(c_);
    const auto done = completed_samples(hash);
    const bool per_sample = stage == Stage::All || stage == Stage::Generate || stage == Stage::Correct ||
                            stage == Stage::Fracture || stage == Stage::Homogenize;
    if (per_sample) {
      std::vector<std::size_t> todo;
      for (std::size_t m = 0; m < c_.samples; ++m) {
        if (stage == Stage::All && done.count(m)) {
          log_line("sample " + std::to_string(m) + " up to date");
          continue;
        }
        todo.push_back(m);
      }
      parallel_samples(todo, [&](std::size_t m) { run_sample(m, stage); });
    }
    if (stage == Stage::All || stage == Stage::Fit) fit(c_.samples);
    if (stage == Stage::All || stage == Stage::Macro) macro();
    Json manifest;
    if (stage == Stage::All) {
      manifest = build_manifest(hash);
      write_json(layout_.manifest(), manifest);
    }
    return manifest;
  }

 private:
  std::set<std::size_t> completed_samples(const std::string& hash) const {
    std::set<std::size_t> done;
    if (!fs::exists(layout_.manifest())) return done;
    Json m;
    try {
      m = read_json(layout_.manifest());
    } catch (const Error&) {
      return done;
    }
    if (m.value("config_hash", std::string()) != hash || !m.contains("samples")) return done;
    for (const auto& s : m["samples"]) {
      const auto idx = s.at("index").get<std::size_t>();
      const auto files = sample_files(idx);
      if (std::all_of(files.begin(), files.end(), [](const fs::path& p) { return fs::exists(p); })) done.insert(idx);
    }
    return done;
  }

  Json build_manifest(const std::string& hash) const {
    Json samples = Json::array();
    for (std::size_t m = 0; m < c_.samples; ++m) {
      Json files = Json::array();
      for (const auto& f : sample_files(m)) files.push_back(layout_.relative(f));
      samples.push_back({{"index", m}, {"files", files}});
    }
    Json macro = {{"csv", layout_.relative(layout_.macro_csv())}, {"summary", layout_.relative(layout_.macro_summary())}};
    const auto summary = read_json(layout_.macro_summary());
    macro["snapshots"] = summary.at("snapshots");
    return {{"config_hash", hash},
            {"dimension", Dim},
            {"samples", samples},
            {"effective", layout_.relative(layout_.effective())},
            {"macro", macro}};
  }

  /// Bounded worker pool; errors are rethrown for the lowest failing index.
  void parallel_samples(const std::vector<std::size_t>& todo, const std::function<void(std::size_t)>& work) const {
    std::vector<std::exception_ptr> errors(todo.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < todo.size(); k = next++) {
        try {
          work(todo[k]);
        } catch (const Error& e) {
          errors[k] = std::make_exception_ptr(SampleFailure(todo[k], e));
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(c_.jobs), todo.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  PipelineConfig c_;
  RunLayout layout_;
};

/// Dimension dispatch for a full run or a single stage.
inline Json run_pipeline(const PipelineConfig& c, Stage stage = Stage::All) {
  if (c.dimension == 3) return Pipeline<3>(c).run(stage);
  return Pipeline<2>(c).run(stage);
}

/// Fits a hand-written effective tensor file ({"tensor": [[...]]}) into effective.json.
inline void fit_tensor_file(const PipelineConfig& c, const fs::path& path) {
  const auto j = read_json(path);
  if (!j.contains("tensor")) throw ConfigError(path.string() + ".tensor", "missing");
  Json out;
  if (c.dimension == 3) {
    out = Pipeline<3>(c).fit_tensor(tensor_from_json<3>(j["tensor"], path.string() + ".tensor"));
  } else {
    out = Pipeline<2>(c).fit_tensor(tensor_from_json<2>(j["tensor"], path.string() + ".tensor"));
  }
  if (j.contains("critical_stretch")) out["critical_stretch"] = j["critical_stretch"];
  write_json(RunLayout{c.out}.effective(), out);
}

}  // namespace psm
