#pragma once

// Energy-based micromodulus correction: per-direction ratios of CCM to PD
// energy density at the nodes, harmonic averaging over bond endpoints and a
// scalar projection onto the bond direction.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "psm/ccm.hpp"
#include "psm/discretization.hpp"
#include "psm/errors.hpp"

namespace psm {

/// W(y) = 1/4 sum_j c (zeta . du)^2 / |zeta|^2 V_j, each bond contributing to
/// both endpoints. Uses the active modulus `c` of intact bonds.
template <int Dim>
std::vector<double> pd_energy_density(const BondSet<Dim>& bonds, std::span<const Vec<Dim>> u, std::size_t num_nodes,
                                      double node_volume) {
  std::vector<double> w(num_nodes, 0.0);
  for (const auto& b : bonds) {
    if (!b.intact) continue;
    const double proj = b.xi.dot(u[b.j] - u[b.i]);
    const double e = 0.25 * b.c * proj * proj / (b.length * b.length) * node_volume;
    w[b.i] += e;
    w[b.j] += e;
  }
  return w;
}

template <int Dim>
struct CorrectionFactors {
  std::array<std::vector<double>, Dim> alpha;  ///< alpha_i per node, i = stretch axis
};

/// alpha = W_ccm / W_pd node by node. Nodes with W_pd below `floor` times the
/// field maximum are rejected.
inline std::vector<double> correction_factors(std::span<const double> w_ccm, std::span<const double> w_pd,
                                              double floor = 1e-12) {
  if (w_ccm.size() != w_pd.size()) throw DegenerateEnergy("energy fields differ in size");
  const double max_pd = w_pd.empty() ? 0.0 : *std::max_element(w_pd.begin(), w_pd.end());
  std::vector<double> alpha(w_pd.size());
  for (std::size_t n = 0; n < w_pd.size(); ++n) {
    if (!(w_pd[n] > floor * max_pd) || max_pd <= 0.0) {
      throw DegenerateEnergy("node " + std::to_string(n) + " has W_pd = " + std::to_string(w_pd[n]));
    }
    alpha[n] = w_ccm[n] / w_pd[n];
  }
  return alpha;
}

/// Scalar modulus of a bond from per-axis moduli: 1 / sqrt(sum (n_i / k_i)^2).
template <int Dim>
double directional_modulus(const Vec<Dim>& unit, const std::array<double, Dim>& k) {
  double sum = 0.0;
  for (int i = 0; i < Dim; ++i) {
    const double t = unit[i] / k[static_cast<std::size_t>(i)];
    sum += t * t;
  }
  return 1.0 / std::sqrt(sum);
}

/// Sets c of every bond to the scaled harmonic average of alpha_i c at its endpoints.
template <int Dim>
void corrected_micromodulus(BondSet<Dim>& bonds, const CorrectionFactors<Dim>& f) {
  for (auto& b : bonds) {
    std::array<double, Dim> k;
    for (int i = 0; i < Dim; ++i) {
      const auto& a = f.alpha[static_cast<std::size_t>(i)];
      k[static_cast<std::size_t>(i)] = harmonic_mean(a[static_cast<std::size_t>(b.i)] * b.c_i,
                                                     a[static_cast<std::size_t>(b.j)] * b.c_j);
    }
    b.c = directional_modulus<Dim>(b.unit(), k);
  }
}

template <int Dim>
struct CorrectionResult {
  CorrectionFactors<Dim> factors;
  std::array<std::vector<double>, Dim> w_ccm;
  std::array<std::vector<double>, Dim> w_pd;
  std::array<std::vector<Vec<Dim>>, Dim> displacement;  ///< CCM field at the PD nodes per load case
};

/// One-shot correction of a voxel body: one CCM stretch solve per axis on the
/// shared grid, then PD energies with the base moduli, then the bond update.
/// Requires nodes built on the mesh box without cut-outs.
template <int Dim>
CorrectionResult<Dim> correct_voxel_body(BondSet<Dim>& bonds, const NodeSet<Dim>& nodes, const VoxelMesh<Dim>& mesh,
                                         const MaterialField<Dim>& materials, double stretch = 1e-3,
                                         SpdSolver::Method method = SpdSolver::Method::Direct) {
  if (nodes.size() != mesh.num_elements()) throw ConfigError("mesh", "PD nodes and voxels must coincide");
  CorrectionResult<Dim> out;
  for (int axis = 0; axis < Dim; ++axis) {
    const auto field = solve_stretch_displacement<Dim>(mesh, materials, axis, stretch * mesh.cells[axis] * mesh.h, method);
    const auto a = static_cast<std::size_t>(axis);
    out.displacement[a] = field.at_element_centers();
    out.w_ccm[a] = ccm_energy_density<Dim>(field, materials);
    out.w_pd[a] = pd_energy_density<Dim>(bonds, out.displacement[a], nodes.size(), nodes.volume());
    out.factors.alpha[a] = correction_factors(out.w_ccm[a], out.w_pd[a]);
  }
  corrected_micromodulus<Dim>(bonds, out.factors);
  return out;
}

}  // namespace psm
