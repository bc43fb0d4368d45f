#pragma once

// Quasi-static bond-based peridynamics with brittle bond failure, solved by
// a sequentially linear scheme: linear solve, break every bond at or past its
// critical stretch, repeat until no bond breaks, then advance the load.
//
// Pairwise force of an intact bond (counted once per unordered pair):
//   f = c (zeta (x) zeta / |zeta|^2) (u_j - u_i) V_i V_j

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "psm/discretization.hpp"
#include "psm/errors.hpp"
#include "psm/linalg.hpp"

namespace psm {

template <int Dim>
double bond_stretch(const Bond<Dim>& b, std::span<const Vec<Dim>> u) {
  const Vec<Dim> deformed = b.xi + u[b.j] - u[b.i];
  return (deformed.norm() - b.length) / b.length;
}

/// Elastic energy stored in one bond, 1/2 c V^2 (n . du)^2.
template <int Dim>
double bond_energy(const Bond<Dim>& b, std::span<const Vec<Dim>> u, double node_volume) {
  const double ext = b.unit().dot(u[b.j] - u[b.i]);
  return 0.5 * b.c * node_volume * node_volume * ext * ext;
}

struct SweepResult {
  std::size_t newly_broken = 0;
  double released_energy = 0.0;
};

/// Breaks every intact bond with s >= s0 (within a relative tie tolerance so
/// mirror-image bonds fall together).
template <int Dim>
SweepResult failure_sweep(BondSet<Dim>& bonds, std::span<const Vec<Dim>> u, double node_volume,
                          double tie_tolerance = 1e-9) {
  SweepResult r;
  for (auto& b : bonds) {
    if (!b.intact || !std::isfinite(b.s0)) continue;
    if (bond_stretch<Dim>(b, u) >= b.s0 * (1.0 - tie_tolerance)) {
      b.intact = false;
      ++r.newly_broken;
      r.released_energy += bond_energy<Dim>(b, u, node_volume);
    }
  }
  return r;
}

/// Nodes whose `direction` component follows increment * step.
struct DirichletSet {
  std::string name;
  std::vector<int> nodes;
  int direction = 0;
  double increment = 0.0;
  double measure = 1.0;  ///< face length/area used for the reaction stress
  std::vector<double> node_increments;  ///< per-node increments; overrides `increment` when set

  double increment_of(std::size_t k) const { return node_increments.empty() ? increment : node_increments[k]; }
};

template <int Dim>
struct LoadProgram {
  std::vector<DirichletSet> dirichlet;
  std::vector<Vec<Dim>> force_increment;  ///< nodal force per step; empty for none
  int steps = 100;
  int max_inner_iterations = 200;
  std::size_t stress_set = 0;  ///< Dirichlet set reported as the reaction stress
  SpdSolver::Method method = SpdSolver::Method::Direct;
  double regularization = 1e-10;  ///< relative diagonal spring to the previous state
  double tie_tolerance = 1e-9;
  /// Stop once |stress| falls below this fraction of its running peak; 0 runs every step.
  double stop_fraction = 0.0;

  void validate(std::size_t num_nodes) const {
    if (steps < 1) throw ConfigError("load.steps", "must be >= 1");
    if (max_inner_iterations < 1) throw ConfigError("load.max_inner_iterations", "must be >= 1");
    for (std::size_t s = 0; s < dirichlet.size(); ++s) {
      const auto& d = dirichlet[s];
      if (d.direction < 0 || d.direction >= Dim) {
        throw ConfigError("load.dirichlet[" + std::to_string(s) + "].direction", "out of range");
      }
      if (!d.node_increments.empty() && d.node_increments.size() != d.nodes.size()) {
        throw ConfigError("load.dirichlet[" + std::to_string(s) + "].node_increments", "one value per node required");
      }
      for (int n : d.nodes) {
        if (n < 0 || static_cast<std::size_t>(n) >= num_nodes) {
          throw ConfigError("load.dirichlet[" + std::to_string(s) + "].nodes", "node id out of range");
        }
      }
    }
    if (!dirichlet.empty() && stress_set >= dirichlet.size()) throw ConfigError("load.stress_set", "out of range");
    if (stop_fraction < 0.0 || stop_fraction >= 1.0) throw ConfigError("load.stop_fraction", "must lie in [0, 1)");
    if (!force_increment.empty() && force_increment.size() != num_nodes) {
      throw ConfigError("load.force_increment", "one vector per node required");
    }
  }
};

/// Faces normal to `axis` pulled apart by `opening_per_step` per step (half
/// on each face) over `layers` node layers. Nodes of those layers on the
/// middle row(s) are held in the transverse directions, or all of them with
/// `hold_faces`. The reported stress is the reaction on the upper face.
template <int Dim>
LoadProgram<Dim> symmetric_stretch_program(const NodeSet<Dim>& nodes, int axis, double opening_per_step, int layers,
                                           int steps, bool hold_faces = false) {
  if (axis < 0 || axis >= Dim) throw ConfigError("load.axis", "out of range");
  LoadProgram<Dim> p;
  p.steps = steps;
  double measure = 1.0;
  for (int k = 0; k < Dim; ++k) {
    if (k != axis) measure *= nodes.domain.extent()[k];
  }
  p.dirichlet.push_back({"upper", nodes.face_nodes(axis, true, layers), axis, 0.5 * opening_per_step, measure});
  p.dirichlet.push_back({"lower", nodes.face_nodes(axis, false, layers), axis, -0.5 * opening_per_step, measure});
  p.stress_set = 0;
  auto on_middle = [&](int n) {
    for (int k = 0; k < Dim; ++k) {
      if (k == axis) continue;
      const int c = nodes.lattice[static_cast<std::size_t>(n)][k];
      const int half = nodes.cells[k] / 2;
      const bool mid = nodes.cells[k] % 2 == 0 ? (c == half - 1 || c == half) : c == half;
      if (!mid) return false;
    }
    return true;
  };
  std::vector<int> held;
  for (const auto& set : {p.dirichlet[0].nodes, p.dirichlet[1].nodes}) {
    for (int n : set) {
      if (hold_faces || on_middle(n)) held.push_back(n);
    }
  }
  for (int k = 0; k < Dim; ++k) {
    if (k != axis) p.dirichlet.push_back({"hold" + std::to_string(k), held, k, 0.0, 1.0});
  }
  return p;
}

struct StepRecord {
  int step = 0;
  double imposed = 0.0;  ///< prescribed displacement of the stress set
  double stress = 0.0;
  std::vector<double> reactions;  ///< summed reaction per Dirichlet set
  std::size_t broken_bonds = 0;
  std::size_t newly_broken = 0;
  double dissipated_energy = 0.0;
  double external_work = 0.0;
  double max_damage = 0.0;
  int inner_iterations = 0;
  double residual = 0.0;
  std::size_t isolated_nodes = 0;
};

template <int Dim>
struct SimState {
  int step = 0;
  std::vector<Vec<Dim>> u;
  std::vector<double> damage;
  double dissipated_energy = 0.0;
  double external_work = 0.0;
  std::vector<StepRecord> history;
};

/// Per-node fraction of broken bonds.
template <int Dim>
std::vector<double> node_damage(const BondSet<Dim>& bonds, std::size_t num_nodes) {
  std::vector<double> total(num_nodes, 0.0);
  std::vector<double> broken(num_nodes, 0.0);
  for (const auto& b : bonds) {
    total[b.i] += 1.0;
    total[b.j] += 1.0;
    if (!b.intact) {
      broken[b.i] += 1.0;
      broken[b.j] += 1.0;
    }
  }
  for (std::size_t n = 0; n < num_nodes; ++n) broken[n] = total[n] > 0.0 ? broken[n] / total[n] : 0.0;
  return broken;
}

/// Linear equilibrium of an intact-bond network with prescribed dofs fixed
/// for the lifetime of the object. The sparsity pattern covers every bond so
/// the symbolic factorization is reused after bonds break.
template <int Dim>
class EquilibriumSolver {
 public:
  EquilibriumSolver(const BondSet<Dim>& bonds, std::size_t num_nodes, double node_volume,
                    std::span<const int> prescribed_dofs, SpdSolver::Method method, double regularization)
      : bonds_(bonds),
        num_nodes_(num_nodes),
        volume_(node_volume),
        free_index_(num_nodes * Dim, 0),
        solver_(method),
        regularization_(regularization) {
    for (int d : prescribed_dofs) free_index_[static_cast<std::size_t>(d)] = -1;
    for (int& f : free_index_) {
      if (f == 0) f = n_free_++;
    }
    solver_.set_min_pivot_ratio(0.1 * regularization);
  }

  std::size_t num_dofs() const { return num_nodes_ * Dim; }
  bool is_free(std::size_t dof) const { return free_index_[dof] >= 0; }

  /// K u as nodal vectors (internal force of the bond network).
  std::vector<Vec<Dim>> internal_force(std::span<const Vec<Dim>> u) const {
    std::vector<Vec<Dim>> g(num_nodes_, Vec<Dim>::Zero());
    for (const auto& b : bonds_) {
      if (!b.intact) continue;
      const Vec<Dim> n = b.unit();
      const Vec<Dim> f = stiffness(b) * n.dot(u[b.j] - u[b.i]) * n;
      g[b.i] -= f;
      g[b.j] += f;
    }
    return g;
  }

  /// Solves for free dofs given prescribed values already placed in `u`;
  /// `previous` anchors the regularization and isolated nodes. Returns the
  /// number of isolated free nodes.
  std::size_t solve(std::vector<Vec<Dim>>& u, std::span<const Vec<Dim>> force, std::span<const Vec<Dim>> previous) {
    std::vector<Triplet> trip;
    trip.reserve(bonds_.size() * 4 * Dim * Dim + static_cast<std::size_t>(n_free_));
    std::vector<double> diag(num_dofs(), 0.0);
    std::vector<char> has_bond(num_nodes_, 0);
    for (const auto& b : bonds_) {
      const Vec<Dim> n = b.unit();
      const Mat<Dim> block = (b.intact ? stiffness(b) : 0.0) * n * n.transpose();
      if (b.intact) has_bond[b.i] = has_bond[b.j] = 1;
      for (int p = 0; p < Dim; ++p) {
        for (int q = 0; q < Dim; ++q) {
          add(trip, b.i * Dim + p, b.i * Dim + q, block(p, q));
          add(trip, b.j * Dim + p, b.j * Dim + q, block(p, q));
          add(trip, b.i * Dim + p, b.j * Dim + q, -block(p, q));
          add(trip, b.j * Dim + p, b.i * Dim + q, -block(p, q));
        }
        diag[static_cast<std::size_t>(b.i * Dim + p)] += block(p, p);
        diag[static_cast<std::size_t>(b.j * Dim + p)] += block(p, p);
      }
    }
    const double max_diag = std::max(*std::max_element(diag.begin(), diag.end()), std::numeric_limits<double>::min());
    const double eta = regularization_ * max_diag;

    // rhs = f - K_fc u_c with u_c the prescribed part of u
    std::vector<Vec<Dim>> prescribed(num_nodes_, Vec<Dim>::Zero());
    for (std::size_t d = 0; d < num_dofs(); ++d) {
      if (!is_free(d)) prescribed[d / Dim][static_cast<int>(d % Dim)] = u[d / Dim][static_cast<int>(d % Dim)];
    }
    const auto g = internal_force(prescribed);
    Eigen::VectorXd rhs(n_free_);
    std::size_t isolated = 0;
    for (std::size_t n = 0; n < num_nodes_; ++n) {
      bool node_isolated = false;
      if (!has_bond[n]) {
        for (int p = 0; p < Dim; ++p) node_isolated = node_isolated || is_free(n * Dim + static_cast<std::size_t>(p));
        isolated += node_isolated;
      }
      for (int p = 0; p < Dim; ++p) {
        const std::size_t d = n * Dim + static_cast<std::size_t>(p);
        const int r = free_index_[d];
        if (r < 0) continue;
        const double spring = node_isolated ? max_diag : eta;
        trip.emplace_back(r, r, spring);
        rhs[r] = (force.empty() ? 0.0 : force[n][p]) - g[n][p] + spring * previous[n][p];
      }
    }
    SparseMatrix kff(n_free_, n_free_);
    kff.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed_) {
      solver_.analyze(kff);
      analyzed_ = true;
    }
    solver_.factorize(kff);
    Eigen::VectorXd x = solver_.solve(rhs);
    scatter(x, u);
    // iterative refinement removes the bias of the regularizing springs
    for (int pass = 0; pass < refinement_passes; ++pass) {
      const auto gu = internal_force(u);
      Eigen::VectorXd r(n_free_);
      for (std::size_t d = 0; d < num_dofs(); ++d) {
        const int k = free_index_[d];
        if (k < 0) continue;
        const std::size_t n = d / Dim;
        const int p = static_cast<int>(d % Dim);
        r[k] = has_bond[n] ? (force.empty() ? 0.0 : force[n][p]) - gu[n][p] : 0.0;
      }
      x += solver_.solve(r);
      scatter(x, u);
    }
    return isolated;
  }

  static constexpr int refinement_passes = 2;

 private:
  double stiffness(const Bond<Dim>& b) const { return b.c * volume_ * volume_; }

  void scatter(const Eigen::VectorXd& x, std::vector<Vec<Dim>>& u) const {
    for (std::size_t d = 0; d < num_dofs(); ++d) {
      const int r = free_index_[d];
      if (r >= 0) u[d / Dim][static_cast<int>(d % Dim)] = x[r];
    }
  }

  void add(std::vector<Triplet>& trip, int row, int col, double v) const {
    const int r = free_index_[static_cast<std::size_t>(row)];
    const int c = free_index_[static_cast<std::size_t>(col)];
    if (r >= 0 && c >= 0) trip.emplace_back(r, c, v);
  }

  const BondSet<Dim>& bonds_;
  std::size_t num_nodes_;
  double volume_;
  std::vector<int> free_index_;
  int n_free_ = 0;
  SpdSolver solver_;
  bool analyzed_ = false;
  double regularization_;
};

/// Sum of reaction forces on a Dirichlet set divided by its measure.
inline double reaction_stress(const StepRecord& rec, std::size_t set, double measure) {
  return set < rec.reactions.size() ? rec.reactions[set] / measure : 0.0;
}

template <int Dim>
double dissipated_energy(const SimState<Dim>& state) {
  return state.dissipated_energy;
}

template <int Dim>
using StepObserver = std::function<void(const SimState<Dim>&, const BondSet<Dim>&)>;

/// Runs the load program on `bonds` (their intact flags evolve in place).
template <int Dim>
SimState<Dim> quasi_static_run(BondSet<Dim>& bonds, std::size_t num_nodes, double node_volume,
                               const LoadProgram<Dim>& program, const StepObserver<Dim>& observer = {}) {
  program.validate(num_nodes);
  std::vector<int> prescribed;
  std::vector<double> increments(num_nodes * Dim, 0.0);
  std::vector<char> is_prescribed(num_nodes * Dim, 0);
  for (const auto& set : program.dirichlet) {
    for (std::size_t k = 0; k < set.nodes.size(); ++k) {
      const auto d = static_cast<std::size_t>(set.nodes[k]) * Dim + static_cast<std::size_t>(set.direction);
      if (!is_prescribed[d]) prescribed.push_back(static_cast<int>(d));
      is_prescribed[d] = 1;
      increments[d] = set.increment_of(k);
    }
  }
  std::sort(prescribed.begin(), prescribed.end());
  EquilibriumSolver<Dim> solver(bonds, num_nodes, node_volume, prescribed, program.method, program.regularization);

  SimState<Dim> state;
  state.u.assign(num_nodes, Vec<Dim>::Zero());
  state.damage.assign(num_nodes, 0.0);
  std::vector<Vec<Dim>> force(program.force_increment.empty() ? 0 : num_nodes, Vec<Dim>::Zero());
  std::vector<Vec<Dim>> prev_reaction_force(num_nodes, Vec<Dim>::Zero());  // K u - f at the end of the last step
  std::vector<Vec<Dim>> prev_force = force;
  std::size_t broken_total = 0;
  for (const auto& b : bonds) broken_total += !b.intact;
  double peak_scale = 0.0;
  double peak_stress = 0.0;

  for (int t = 1; t <= program.steps; ++t) {
    const std::vector<Vec<Dim>> u_prev = state.u;
    for (std::size_t d = 0; d < num_nodes * Dim; ++d) {
      if (is_prescribed[d]) state.u[d / Dim][static_cast<int>(d % Dim)] = increments[d] * t;
    }
    for (std::size_t n = 0; n < force.size(); ++n) force[n] = program.force_increment[n] * t;

    StepRecord rec;
    rec.step = t;
    std::vector<Vec<Dim>> trial_reaction;
    for (int iter = 1;; ++iter) {
      rec.isolated_nodes = solver.solve(state.u, force, u_prev);
      if (iter == 1) {
        trial_reaction = solver.internal_force(state.u);
        // work over the elastic increment with the bonds of the previous step
        double work = 0.0;
        for (std::size_t n = 0; n < num_nodes; ++n) {
          const Vec<Dim> du = state.u[n] - u_prev[n];
          Vec<Dim> now = Vec<Dim>::Zero();
          Vec<Dim> before = prev_reaction_force[n];
          for (int p = 0; p < Dim; ++p) {
            if (is_prescribed[n * Dim + static_cast<std::size_t>(p)]) {
              now[p] = trial_reaction[n][p];
            } else if (!force.empty()) {
              now[p] = force[n][p];
              before[p] = prev_force[n][p];
            }
          }
          work += 0.5 * (before + now).dot(du);
        }
        state.external_work += work;
      }
      const auto sweep = failure_sweep<Dim>(bonds, state.u, node_volume, program.tie_tolerance);
      rec.newly_broken += sweep.newly_broken;
      state.dissipated_energy += sweep.released_energy;
      if (sweep.newly_broken == 0) {
        rec.inner_iterations = iter;
        break;
      }
      if (iter >= program.max_inner_iterations) {
        throw NonConvergence("step " + std::to_string(t) + ": bonds still breaking after " + std::to_string(iter) +
                             " sweeps");
      }
    }

    const auto g = solver.internal_force(state.u);
    rec.reactions.assign(program.dirichlet.size(), 0.0);
    for (std::size_t s = 0; s < program.dirichlet.size(); ++s) {
      for (int n : program.dirichlet[s].nodes) rec.reactions[s] += g[static_cast<std::size_t>(n)][program.dirichlet[s].direction];
    }
    double res = 0.0;
    double scale = 0.0;
    for (std::size_t n = 0; n < num_nodes; ++n) {
      for (int p = 0; p < Dim; ++p) {
        const auto d = n * Dim + static_cast<std::size_t>(p);
        const double f = force.empty() ? 0.0 : force[n][p];
        if (is_prescribed[d]) {
          prev_reaction_force[n][p] = g[n][p];
          scale += g[n][p] * g[n][p];
        } else {
          res += (g[n][p] - f) * (g[n][p] - f);
          scale += f * f;
        }
      }
    }
    // relative to the largest load level seen, so a fully separated body
    // carrying no load still reports a meaningful figure
    peak_scale = std::max(peak_scale, scale);
    rec.residual = peak_scale > 0.0 ? std::sqrt(res / peak_scale) : std::sqrt(res);
    prev_force = force;

    broken_total += rec.newly_broken;
    rec.broken_bonds = broken_total;
    rec.dissipated_energy = state.dissipated_energy;
    rec.external_work = state.external_work;
    state.damage = node_damage<Dim>(bonds, num_nodes);
    rec.max_damage = state.damage.empty() ? 0.0 : *std::max_element(state.damage.begin(), state.damage.end());
    if (!program.dirichlet.empty()) {
      const auto& set = program.dirichlet[program.stress_set];
      rec.imposed = (set.node_increments.empty() ? set.increment : set.node_increments.front()) * t;
      rec.stress = reaction_stress(rec, program.stress_set, set.measure);
    }
    state.step = t;
    state.history.push_back(rec);
    if (observer) observer(state, bonds);
    peak_stress = std::max(peak_stress, std::abs(rec.stress));
    if (program.stop_fraction > 0.0 && peak_stress > 0.0 && std::abs(rec.stress) < program.stop_fraction * peak_stress) {
      break;
    }
  }
  return state;
}

}  // namespace psm
