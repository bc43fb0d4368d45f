#pragma once

// Uniform nodal grids, horizon neighborhoods and classified bond sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "psm/errors.hpp"
#include "psm/linalg.hpp"
#include "psm/micromodulus.hpp"
#include "psm/microstructure.hpp"

namespace psm {

template <int Dim>
struct Box {
  Vec<Dim> lo = Vec<Dim>::Zero();
  Vec<Dim> hi = Vec<Dim>::Ones();

  bool contains(const Vec<Dim>& p) const {
    for (int k = 0; k < Dim; ++k) {
      if (p[k] < lo[k] || p[k] > hi[k]) return false;
    }
    return true;
  }
  Vec<Dim> extent() const { return hi - lo; }
};

/// Nodes at the centers of a uniform cell grid; ids follow lattice order
/// with axis 0 varying fastest.
template <int Dim>
struct NodeSet {
  double spacing = 1.0;
  Box<Dim> domain;
  std::array<int, Dim> cells{};
  std::vector<Vec<Dim>> positions;
  std::vector<std::array<int, Dim>> lattice;
  std::vector<int> grid_to_node;  ///< cell -> node id, -1 where removed

  std::size_t size() const { return positions.size(); }
  double volume() const { return std::pow(spacing, Dim); }

  int node_at(const std::array<int, Dim>& idx) const {
    std::size_t flat = 0;
    std::size_t stride = 1;
    for (int k = 0; k < Dim; ++k) {
      if (idx[k] < 0 || idx[k] >= cells[k]) return -1;
      flat += static_cast<std::size_t>(idx[k]) * stride;
      stride *= static_cast<std::size_t>(cells[k]);
    }
    return grid_to_node[flat];
  }

  /// Nodes within `layers` cells of the lower/upper face normal to `axis`.
  std::vector<int> face_nodes(int axis, bool upper, int layers = 1) const {
    std::vector<int> out;
    for (std::size_t n = 0; n < size(); ++n) {
      const int c = lattice[n][axis];
      if (upper ? c >= cells[axis] - layers : c < layers) out.push_back(static_cast<int>(n));
    }
    return out;
  }

  /// Nodes whose centers lie in a box.
  std::vector<int> nodes_in(const Box<Dim>& region) const {
    std::vector<int> out;
    for (std::size_t n = 0; n < size(); ++n) {
      if (region.contains(positions[n])) out.push_back(static_cast<int>(n));
    }
    return out;
  }

  /// Node closest to a point (lowest id on ties).
  int nearest(const Vec<Dim>& p) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < size(); ++n) {
      const double d = (positions[n] - p).squaredNorm();
      if (d < best_d - 1e-14 * spacing * spacing) {
        best_d = d;
        best = static_cast<int>(n);
      }
    }
    return best;
  }
};

template <int Dim>
NodeSet<Dim> build_grid(const Box<Dim>& domain, double spacing, std::span<const Box<Dim>> notches = {}) {
  if (!(spacing > 0.0)) throw ConfigError("grid.dx", "spacing must be positive");
  NodeSet<Dim> nodes;
  nodes.spacing = spacing;
  nodes.domain = domain;
  std::size_t total = 1;
  for (int k = 0; k < Dim; ++k) {
    const double ratio = (domain.hi[k] - domain.lo[k]) / spacing;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
      throw ConfigError("grid.dx", "spacing must divide the domain extent along axis " + std::to_string(k));
    }
    nodes.cells[k] = static_cast<int>(rounded);
    total *= static_cast<std::size_t>(nodes.cells[k]);
  }
  nodes.grid_to_node.assign(total, -1);

  std::array<int, Dim> idx{};
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    Vec<Dim> p;
    for (int k = 0; k < Dim; ++k) {
      idx[k] = static_cast<int>(rem % static_cast<std::size_t>(nodes.cells[k]));
      rem /= static_cast<std::size_t>(nodes.cells[k]);
      p[k] = domain.lo[k] + (idx[k] + 0.5) * spacing;
    }
    const bool cut = std::any_of(notches.begin(), notches.end(), [&](const Box<Dim>& b) { return b.contains(p); });
    if (cut) continue;
    nodes.grid_to_node[flat] = static_cast<int>(nodes.positions.size());
    nodes.positions.push_back(p);
    nodes.lattice.push_back(idx);
  }
  if (nodes.positions.empty()) throw EmptyDomain();
  return nodes;
}

enum class BondClass : std::uint8_t { Matrix = 0, Particle = 1, Interface = 2 };

template <int Dim>
struct Bond {
  int i = 0;
  int j = 0;
  Vec<Dim> xi = Vec<Dim>::Zero();  ///< reference vector x_j - x_i
  double length = 0.0;
  BondClass cls = BondClass::Matrix;
  double c_i = 0.0;  ///< base micromodulus of the phase at endpoint i
  double c_j = 0.0;
  double c = 0.0;  ///< active micromodulus used by the solver
  double s0 = std::numeric_limits<double>::infinity();
  bool intact = true;

  Vec<Dim> unit() const { return xi / length; }
};

template <int Dim>
using BondSet = std::vector<Bond<Dim>>;

struct HorizonSpec {
  double delta = 0.0;
};

/// Integer lattice offsets with 0 < |o| dx <= delta, restricted to one half
/// space so that every unordered pair is produced once.
template <int Dim>
std::vector<std::array<int, Dim>> half_neighborhood(double spacing, double delta) {
  const int reach = static_cast<int>(std::floor(delta / spacing + 1e-9));
  const double limit = (delta / spacing) * (delta / spacing) * (1.0 + 1e-12);
  std::vector<std::array<int, Dim>> out;
  std::array<int, Dim> o{};
  auto visit = [&](auto&& self, int axis) -> void {
    if (axis < 0) {
      long sq = 0;
      for (int k = 0; k < Dim; ++k) sq += static_cast<long>(o[k]) * o[k];
      if (sq == 0 || static_cast<double>(sq) > limit) return;
      // positive in the node-id order: last nonzero component (most significant axis) > 0
      for (int k = Dim - 1; k >= 0; --k) {
        if (o[k] != 0) {
          if (o[k] > 0) out.push_back(o);
          return;
        }
      }
      return;
    }
    for (o[axis] = -reach; o[axis] <= reach; ++o[axis]) self(self, axis - 1);
  };
  visit(visit, Dim - 1);
  return out;
}

template <int Dim>
BondClass classify(Phase a, Phase b) {
  if (a != b) return BondClass::Interface;
  return a == Phase::Particle ? BondClass::Particle : BondClass::Matrix;
}

/// One bond per unordered node pair within the horizon, sorted by (i, j).
/// With no phases every bond is a matrix bond.
template <int Dim>
BondSet<Dim> build_bonds(const NodeSet<Dim>& nodes, HorizonSpec horizon, std::span<const Phase> phases = {}) {
  if (horizon.delta < nodes.spacing * (1.0 - 1e-12)) throw ConfigError("horizon", "delta must be >= dx");
  const auto offsets = half_neighborhood<Dim>(nodes.spacing, horizon.delta);
  BondSet<Dim> bonds;
  bonds.reserve(nodes.size() * offsets.size());
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    for (const auto& o : offsets) {
      std::array<int, Dim> idx;
      for (int k = 0; k < Dim; ++k) idx[k] = nodes.lattice[n][k] + o[k];
      const int m = nodes.node_at(idx);
      if (m < 0) continue;
      Bond<Dim> b;
      b.i = static_cast<int>(n);
      b.j = m;
      b.xi = nodes.positions[m] - nodes.positions[n];
      b.length = b.xi.norm();
      if (!phases.empty()) b.cls = classify<Dim>(phases[n], phases[m]);
      bonds.push_back(b);
    }
  }
  std::sort(bonds.begin(), bonds.end(), [](const Bond<Dim>& a, const Bond<Dim>& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return bonds;
}

/// 2ab/(a+b); falls back to the arithmetic mean for non-positive input.
inline double harmonic_mean(double a, double b) {
  if (a <= 0.0 || b <= 0.0) return 0.5 * (a + b);
  return 2.0 * a * b / (a + b);
}

/// Sets endpoint base moduli from the phase at each endpoint; the active
/// modulus is their harmonic mean.
template <int Dim>
void assign_micromodulus(BondSet<Dim>& bonds, std::span<const Phase> phases, const MicromodulusCoeffs& matrix,
                         const MicromodulusCoeffs& particle) {
  for (auto& b : bonds) {
    const auto& ki = (!phases.empty() && phases[b.i] == Phase::Particle) ? particle : matrix;
    const auto& kj = (!phases.empty() && phases[b.j] == Phase::Particle) ? particle : matrix;
    b.c_i = base_micromodulus<Dim>(b.xi, ki);
    b.c_j = base_micromodulus<Dim>(b.xi, kj);
    b.c = harmonic_mean(b.c_i, b.c_j);
  }
}

/// Homogeneous assignment (macro scale).
template <int Dim>
void assign_micromodulus(BondSet<Dim>& bonds, const MicromodulusCoeffs& k) {
  assign_micromodulus<Dim>(bonds, {}, k, k);
}

struct ClassCriticalStretch {
  double particle = std::numeric_limits<double>::infinity();
  double matrix = std::numeric_limits<double>::infinity();
  double interface = std::numeric_limits<double>::infinity();

  double of(BondClass c) const {
    switch (c) {
      case BondClass::Particle: return particle;
      case BondClass::Interface: return interface;
      default: return matrix;
    }
  }
};

template <int Dim>
void assign_critical_stretch(BondSet<Dim>& bonds, const ClassCriticalStretch& s0) {
  for (auto& b : bonds) b.s0 = s0.of(b.cls);
}

/// Poisson ratio representable by bond-based PD: 1/3 (2D plane stress), 1/4 (3D).
constexpr double bond_based_poisson(int dim) { return dim == 2 ? 1.0 / 3.0 : 0.25; }

/// Coefficients matching the discrete PD stiffness of an interior node to an
/// isotropic CCM tensor (least squares over the Voigt entries; exact in 2D).
template <int Dim>
MicromodulusCoeffs calibrate_micromodulus_coeffs(double young, double poisson, double length, double delta,
                                                 double spacing) {
  const double expected = bond_based_poisson(Dim);
  if (std::abs(poisson - expected) > 1e-6) throw PoissonMismatch(poisson, expected);
  const auto basis = stiffness_basis<Dim>(delta, length, HorizonQuadrature::Lattice, spacing);
  return fit_coefficients<Dim>(ElasticTensor<Dim>::isotropic(young, poisson).voigt, basis, length).coeffs;
}

}  // namespace psm
